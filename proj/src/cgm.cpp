#include "stopsafe/cgm.hpp"

#include <algorithm>
#include <cmath>

#include "stopsafe/csv.hpp"

namespace stopsafe::cgm {

namespace {

constexpr int64_t kRateWindowS = 900;   // 15 minutes
constexpr double kRateThreshold = 0.25; // strict: exactly 25% is retained
constexpr int64_t kSlotS = 300;

}  // namespace

std::string to_string(RemovalReason) { return "physiologic_rate"; }

std::string to_string(EpisodeLabel e) {
    switch (e) {
        case EpisodeLabel::hypo: return "hypo";
        case EpisodeLabel::normal: return "normal";
        case EpisodeLabel::moderate_hyper: return "moderate_hyper";
        case EpisodeLabel::severe_hyper: return "severe_hyper";
        case EpisodeLabel::missing: return "missing";
        default: return "control";
    }
}

EpisodeLabel episode_from_string(const std::string& s) {
    if (s == "hypo") return EpisodeLabel::hypo;
    if (s == "normal") return EpisodeLabel::normal;
    if (s == "moderate_hyper") return EpisodeLabel::moderate_hyper;
    if (s == "severe_hyper") return EpisodeLabel::severe_hyper;
    if (s == "missing") return EpisodeLabel::missing;
    if (s == "control") return EpisodeLabel::control;
    throw Error("unknown episode label: '" + s + "'");
}

GlucoseSeries clean_series(const std::vector<GlucoseReading>& raw) {
    GlucoseSeries out;
    if (raw.empty()) return out;
    out.participant_id = raw.front().participant_id;

    for (std::size_t i = 1; i < raw.size(); ++i) {
        if (raw[i].timestamp <= raw[i - 1].timestamp) {
            throw UnorderedInput("clean_series: input not strictly time-ordered at index " +
                                 std::to_string(i));
        }
    }

    for (const auto& r : raw) {
        if (!out.readings.empty()) {
            const GlucoseReading& p = out.readings.back();
            const int64_t gap = r.timestamp - p.timestamp;
            if (gap <= kRateWindowS &&
                std::abs(r.glucose - p.glucose) / p.glucose > kRateThreshold) {
                out.removed.push_back({r, RemovalReason::physiologic_rate});
                continue;
            }
        }
        out.readings.push_back(r);
    }
    return out;
}

ComplianceReport compliance(const std::vector<GlucoseReading>& raw, int64_t wear_start,
                            int64_t wear_end) {
    if (wear_start >= wear_end) throw InvalidWindow("compliance: wear_start must precede wear_end");

    ComplianceReport rep;
    if (!raw.empty()) rep.participant_id = raw.front().participant_id;
    rep.expected_slots = (wear_end - wear_start) / kSlotS;
    if (rep.expected_slots == 0) {
        rep.missing_fraction = 0.0;
        rep.meets_fda = true;
        return rep;
    }

    std::vector<bool> seen(static_cast<std::size_t>(rep.expected_slots), false);
    for (const auto& r : raw) {
        if (r.timestamp < wear_start || r.timestamp >= wear_start + rep.expected_slots * kSlotS)
            continue;
        seen[static_cast<std::size_t>((r.timestamp - wear_start) / kSlotS)] = true;
    }
    rep.observed_slots = static_cast<int64_t>(std::count(seen.begin(), seen.end(), true));
    rep.missing_fraction =
        1.0 - static_cast<double>(rep.observed_slots) / static_cast<double>(rep.expected_slots);
    const GlucoseSeries cleaned = clean_series(raw);
    const std::size_t total = cleaned.readings.size() + cleaned.removed.size();
    rep.removed_fraction = total == 0 ? 0.0 : static_cast<double>(cleaned.removed.size()) / total;
    rep.meets_fda = rep.missing_fraction < 0.25;
    return rep;
}

EpisodeLabel classify_episode(std::optional<double> glucose, ParticipantType participant_type) {
    if (participant_type == ParticipantType::control) return EpisodeLabel::control;
    if (!glucose) return EpisodeLabel::missing;
    const double g = *glucose;
    if (g <= 70.0) return EpisodeLabel::hypo;
    if (g < 180.0) return EpisodeLabel::normal;
    if (g < 300.0) return EpisodeLabel::moderate_hyper;
    return EpisodeLabel::severe_hyper;
}

std::optional<double> glucose_at(const GlucoseSeries& series, int64_t t, double staleness) {
    if (!(staleness > 0.0)) throw InvalidWindow("glucose_at: staleness must be > 0");
    // Latest reading with timestamp <= t.
    const auto it = std::upper_bound(
        series.readings.begin(), series.readings.end(), t,
        [](int64_t value, const GlucoseReading& r) { return value < r.timestamp; });
    if (it == series.readings.begin()) return std::nullopt;
    const GlucoseReading& r = *(it - 1);
    if (static_cast<double>(t - r.timestamp) > staleness) return std::nullopt;
    return r.glucose;
}

void write_removals_csv(const std::string& path, const std::vector<GlucoseSeries>& series) {
    csv::Writer w(path);
    w.write_row({"participant_id", "timestamp", "glucose", "reason"});
    for (const auto& s : series) {
        for (const auto& rem : s.removed) {
            w.write_row({s.participant_id, std::to_string(rem.reading.timestamp),
                         csv::format_double(rem.reading.glucose, 1), to_string(rem.reason)});
        }
    }
}

}  // namespace stopsafe::cgm
