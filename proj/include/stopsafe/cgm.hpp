#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stopsafe/records.hpp"

namespace stopsafe::cgm {

class UnorderedInput : public Error {
public:
    using Error::Error;
};

class InvalidWindow : public Error {
public:
    using Error::Error;
};

enum class RemovalReason { physiologic_rate };

std::string to_string(RemovalReason r);

struct Removal {
    GlucoseReading reading;
    RemovalReason reason;
};

struct GlucoseSeries {
    std::string participant_id;
    std::vector<GlucoseReading> readings;  // retained, time-ordered
    std::vector<Removal> removed;
};

enum class EpisodeLabel { hypo, normal, moderate_hyper, severe_hyper, missing, control };

std::string to_string(EpisodeLabel e);
EpisodeLabel episode_from_string(const std::string& s);

struct ComplianceReport {
    std::string participant_id;
    int64_t expected_slots = 0;
    int64_t observed_slots = 0;
    double missing_fraction = 0.0;
    double removed_fraction = 0.0;
    bool meets_fda = false;
};

// Physiologic-rate filter: a reading is dropped when it differs from the most
// recent retained reading by more than 25% and that comparator is at most
// 15 minutes old. Exactly 25% is kept; gaps beyond 15 minutes reset the
// comparator. One forward pass, dropped readings never become comparators.
GlucoseSeries clean_series(const std::vector<GlucoseReading>& raw);

// Slot accounting on the 5-minute grid over [wear_start, wear_end).
ComplianceReport compliance(const std::vector<GlucoseReading>& raw, int64_t wear_start,
                            int64_t wear_end);

// ADA-style bins for T1DM participants; controls always map to `control`.
EpisodeLabel classify_episode(std::optional<double> glucose, ParticipantType participant_type);

// Step-hold lookup: the latest retained reading at or before t that is no
// older than `staleness` seconds; otherwise missing.
std::optional<double> glucose_at(const GlucoseSeries& series, int64_t t, double staleness);

void write_removals_csv(const std::string& path, const std::vector<GlucoseSeries>& series);

}  // namespace stopsafe::cgm
