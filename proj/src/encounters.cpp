#include "stopsafe/encounters.hpp"

#include <algorithm>
#include <cmath>

#include "stopsafe/csv.hpp"

namespace stopsafe::encounters {

std::string to_string(StopBehavior b) {
    switch (b) {
        case StopBehavior::full: return "full";
        case StopBehavior::rolling: return "rolling";
        default: return "no_stop";
    }
}

StopBehavior classify_stop(const std::vector<double>& window_speeds, double v_entry,
                           const ClassifyParams& params) {
    if (window_speeds.empty()) throw EmptyWindow("classify_stop: empty speed window");

    // Longest stationary stretch, counting each sample as sample_dt seconds.
    int longest = 0, run = 0;
    double v_min = window_speeds.front();
    for (double v : window_speeds) {
        v_min = std::min(v_min, v);
        run = v < params.v_stop_eps ? run + 1 : 0;
        longest = std::max(longest, run);
    }
    if (static_cast<double>(longest) * params.sample_dt >= params.min_stop_s) {
        return StopBehavior::full;
    }
    const double entry = std::max(v_entry, 1.0);
    if (v_min >= params.no_stop_ratio * entry) return StopBehavior::no_stop;
    return StopBehavior::rolling;
}

namespace {

double stationary_seconds(const std::vector<double>& speeds, const ClassifyParams& p) {
    int longest = 0, run = 0;
    for (double v : speeds) {
        run = v < p.v_stop_eps ? run + 1 : 0;
        longest = std::max(longest, run);
    }
    return static_cast<double>(longest) * p.sample_dt;
}

}  // namespace

std::vector<Encounter> detect_encounters(const fusion::FusedDrive& drive,
                                         const std::vector<intersections::Intersection>& list,
                                         const DetectParams& params) {
    std::vector<Encounter> out;
    const auto& samples = drive.samples;
    if (samples.empty()) return out;

    std::vector<geo::GeoPoint> traj;
    traj.reserve(samples.size());
    for (const auto& s : samples) traj.push_back({s.telemetry.lat, s.telemetry.lon});
    const std::vector<double> pd = geo::path_distance(traj);
    const int n = static_cast<int>(samples.size());

    for (const auto& x : list) {
        std::vector<double> d(n);
        for (int i = 0; i < n; ++i) d[i] = geo::haversine_m(traj[i], x.center);

        // Plateau-aware local minima below the capture radius. A maximal run
        // of equal distances counts once, at its first index.
        std::vector<int> minima;
        int i = 0;
        while (i < n) {
            int j = i;
            while (j + 1 < n && d[j + 1] == d[i]) ++j;
            const bool left_ok = i == 0 || d[i - 1] > d[i];
            const bool right_ok = j == n - 1 || d[j + 1] > d[i];
            if (left_ok && right_ok && d[i] <= params.capture_radius) minima.push_back(i);
            i = j + 1;
        }
        if (minima.empty()) continue;

        // Collapse minima separated by less than refractory_s, keeping the
        // closest approach (earliest on ties).
        std::vector<int> kept;
        std::size_t k = 0;
        while (k < minima.size()) {
            int best = minima[k];
            std::size_t m = k + 1;
            while (m < minima.size() &&
                   samples[minima[m]].telemetry.timestamp - samples[minima[m - 1]].telemetry.timestamp <=
                       static_cast<int64_t>(params.refractory_s)) {
                if (d[minima[m]] < d[best]) best = minima[m];
                ++m;
            }
            kept.push_back(best);
            k = m;
        }

        for (std::size_t e = 0; e < kept.size(); ++e) {
            const int c = kept[e];
            Encounter enc;
            enc.participant_id = drive.participant_id;
            enc.drive_id = drive.drive_id;
            enc.participant_type = drive.participant_type;
            enc.intersection_id = x.id;
            enc.nearest_approach_m = d[c];
            enc.timestamp = samples[c].telemetry.timestamp;
            enc.episode = samples[c].episode;

            int lo = c, hi = c;
            while (lo > 0 && pd[c] - pd[lo - 1] <= params.upstream_m) --lo;
            while (hi + 1 < n && pd[hi + 1] - pd[c] <= params.downstream_m) ++hi;
            // Keep windows of the same intersection disjoint in time.
            if (e > 0) lo = std::max(lo, kept[e - 1] + 1);
            if (e + 1 < kept.size()) hi = std::min(hi, kept[e + 1] - 1);

            enc.window.assign(samples.begin() + lo, samples.begin() + hi + 1);
            std::vector<double> speeds;
            speeds.reserve(enc.window.size());
            for (const auto& s : enc.window) speeds.push_back(s.telemetry.speed);
            enc.v_entry = speeds.front();
            enc.v_min = *std::min_element(speeds.begin(), speeds.end());
            enc.stationary_s = stationary_seconds(speeds, params.classify);
            enc.behavior = classify_stop(speeds, enc.v_entry, params.classify);
            out.push_back(std::move(enc));
        }
    }

    std::sort(out.begin(), out.end(), [](const Encounter& a, const Encounter& b) {
        return std::tie(a.timestamp, a.intersection_id) < std::tie(b.timestamp, b.intersection_id);
    });
    for (std::size_t i = 0; i < out.size(); ++i) out[i].ordinal = static_cast<int>(i) + 1;
    return out;
}

void annotate(std::vector<Encounter>& encounters,
              const std::map<std::pair<std::string, int>, EncounterAnnotation>& annotations) {
    for (auto& e : encounters) {
        auto it = annotations.find({e.drive_id, e.ordinal});
        if (it == annotations.end()) continue;
        const EncounterAnnotation& a = it->second;
        e.flags.lead_vehicle = a.lead_vehicle;
        e.flags.crossing_vehicle = a.crossing_vehicle;
        e.flags.crossing_pedestrian = a.crossing_pedestrian;
        e.flags.is_primary_driver = a.is_primary_driver;
    }
}

std::vector<Encounter> apply_selection(const std::vector<Encounter>& encounters) {
    std::vector<Encounter> out;
    for (const auto& e : encounters) {
        if (!e.flags.is_primary_driver) continue;
        if (e.flags.lead_vehicle == ConfoundStatus::present_with_effect ||
            e.flags.crossing_vehicle == ConfoundStatus::present_with_effect ||
            e.flags.crossing_pedestrian == ConfoundStatus::present_with_effect) {
            continue;
        }
        out.push_back(e);
    }
    return out;
}

BinarizeResult binarize(const std::vector<Encounter>& encounters) {
    BinarizeResult out;
    for (const auto& e : encounters) {
        if (e.episode == cgm::EpisodeLabel::missing) {
            ++out.dropped_missing_episode;
            continue;
        }
        BehaviorRow row;
        row.participant_id = e.participant_id;
        row.intersection_id = e.intersection_id;
        row.participant_type = e.participant_type;
        row.episode = e.episode;
        row.unsafe = e.behavior == StopBehavior::full ? 0 : 1;
        out.rows.push_back(std::move(row));
    }
    return out;
}

void write_encounters_csv(const std::string& path, const std::vector<Encounter>& encounters) {
    csv::Writer w(path);
    w.write_row({"participant_id", "drive_id", "encounter_ordinal", "intersection_id", "timestamp",
                 "nearest_approach_m", "v_entry", "v_min", "stationary_s", "behavior",
                 "lead_vehicle", "crossing_vehicle", "crossing_pedestrian", "is_primary_driver",
                 "episode"});
    for (const auto& e : encounters) {
        w.write_row({e.participant_id, e.drive_id, std::to_string(e.ordinal), e.intersection_id,
                     std::to_string(e.timestamp), csv::format_double(e.nearest_approach_m, 2),
                     csv::format_double(e.v_entry, 2), csv::format_double(e.v_min, 2),
                     csv::format_double(e.stationary_s, 1), to_string(e.behavior),
                     stopsafe::to_string(e.flags.lead_vehicle),
                     stopsafe::to_string(e.flags.crossing_vehicle),
                     stopsafe::to_string(e.flags.crossing_pedestrian),
                     e.flags.is_primary_driver ? "yes" : "no", cgm::to_string(e.episode)});
    }
}

}  // namespace stopsafe::encounters
