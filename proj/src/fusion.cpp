#include "stopsafe/fusion.hpp"

namespace stopsafe::fusion {

FusedDrive fuse_drive(const Drive& drive, const cgm::GlucoseSeries& series,
                      ParticipantType participant_type, double staleness, double discard_threshold) {
    if (!series.participant_id.empty() && series.participant_id != drive.participant_id) {
        throw ParticipantMismatch("fuse_drive: drive belongs to " + drive.participant_id +
                                  " but series belongs to " + series.participant_id);
    }

    FusedDrive out;
    out.drive_id = drive.drive_id;
    out.participant_id = drive.participant_id;
    out.participant_type = participant_type;
    out.samples.reserve(drive.samples.size());

    std::size_t missing = 0;
    for (const auto& s : drive.samples) {
        FusedSample f;
        f.telemetry = s;
        f.glucose = cgm::glucose_at(series, s.timestamp, staleness);
        if (!f.glucose) ++missing;
        f.episode = cgm::classify_episode(f.glucose, participant_type);
        out.samples.push_back(std::move(f));
    }
    out.missing_fraction =
        out.samples.empty() ? 0.0 : static_cast<double>(missing) / static_cast<double>(out.samples.size());
    out.discarded =
        participant_type == ParticipantType::t1dm && out.missing_fraction > discard_threshold;
    return out;
}

FusionSummary fusion_summary(const std::vector<FusedDrive>& drives) {
    FusionSummary s;
    s.n_drives = drives.size();
    for (const auto& d : drives) {
        if (d.discarded) ++s.n_discarded;
    }
    s.discard_fraction =
        s.n_drives == 0 ? 0.0 : static_cast<double>(s.n_discarded) / static_cast<double>(s.n_drives);
    return s;
}

}  // namespace stopsafe::fusion
