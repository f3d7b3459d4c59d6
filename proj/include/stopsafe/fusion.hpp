#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stopsafe/cgm.hpp"
#include "stopsafe/records.hpp"

namespace stopsafe::fusion {

class ParticipantMismatch : public Error {
public:
    using Error::Error;
};

struct FusedSample {
    TelemetrySample telemetry;
    std::optional<double> glucose;
    cgm::EpisodeLabel episode = cgm::EpisodeLabel::missing;
};

struct FusedDrive {
    std::string drive_id;
    std::string participant_id;
    ParticipantType participant_type = ParticipantType::control;
    std::vector<FusedSample> samples;
    double missing_fraction = 0.0;
    bool discarded = false;
};

struct FusionSummary {
    std::size_t n_drives = 0;
    std::size_t n_discarded = 0;
    double discard_fraction = 0.0;
};

// Annotates each 1 Hz sample with the step-held glucose value and episode
// label. T1DM drives whose missing fraction exceeds discard_threshold are
// flagged discarded; control drives never discard on glucose.
FusedDrive fuse_drive(const Drive& drive, const cgm::GlucoseSeries& series,
                      ParticipantType participant_type, double staleness, double discard_threshold);

FusionSummary fusion_summary(const std::vector<FusedDrive>& drives);

}  // namespace stopsafe::fusion
