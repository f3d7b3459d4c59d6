#include "stopsafe/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <vector>

#include "stopsafe/encounters.hpp"
#include "stopsafe/fusion.hpp"
#include "stopsafe/ingest.hpp"
#include "stopsafe/intersections.hpp"
#include "stopsafe/rng.hpp"

namespace stopsafe::synth {

namespace {

namespace fs = std::filesystem;

constexpr double kLat0 = 41.2500;
constexpr double kLon0 = -95.9300;
constexpr double kMetersPerDegLat = 111194.93;
constexpr int kRows = 3;
constexpr int kCols = 4;
constexpr double kSpacingM = 500.0;
constexpr double kMarginM = 350.0;
constexpr double kCruise = 13.0;
constexpr double kAccel = 2.0;
constexpr double kDecel = 2.5;
constexpr int64_t kBaseTime = 1614556800;  // 2021-03-01T00:00:00Z
constexpr int kDays = 10;

double meters_per_deg_lon() { return kMetersPerDegLat * std::cos(kLat0 * std::numbers::pi / 180.0); }

struct Site {
    int row, col;
    double lat, lon;
};

std::vector<Site> make_sites() {
    std::vector<Site> sites;
    const double mlon = meters_per_deg_lon();
    for (int r = 0; r < kRows; ++r) {
        for (int c = 0; c < kCols; ++c) {
            sites.push_back({r, c, kLat0 + r * kSpacingM / kMetersPerDegLat,
                             kLon0 + c * kSpacingM / mlon});
        }
    }
    return sites;
}

enum class Band { normal, hypo, moderate, hyper };

double band_logit(Band b) {
    switch (b) {
        case Band::hypo: return 0.25;
        case Band::moderate: return 1.0;
        case Band::hyper: return 1.5;
        default: return 0.6;
    }
}

struct BandRange {
    double lo, hi, target;
};

BandRange band_range(Band b) {
    switch (b) {
        case Band::hypo: return {52.0, 68.0, 58.0};
        case Band::moderate: return {205.0, 258.0, 230.0};
        case Band::hyper: return {308.0, 355.0, 330.0};
        default: return {95.0, 168.0, 125.0};
    }
}

// Scripted glycemic band per drive index; both at-risk states appear twice
// and one drive carries the moderate range.
Band drive_band(int k) {
    static const Band bands[] = {Band::normal, Band::hyper, Band::hypo,   Band::normal,
                                 Band::hyper,  Band::hypo,  Band::normal, Band::moderate,
                                 Band::hyper,  Band::normal};
    return bands[k % 10];
}

struct Route {
    bool is_row;    // row drives run west-east, column drives north-south
    int index;      // row or column number
    bool reversed;
    std::vector<int> site_ids;        // grid ids in travel order
    std::vector<double> event_pos_m;  // path position of each site
    double total_m;
};

Route make_route(int k) {
    // Route rotation: three row drives, four column drives, three reversed rows.
    Route r;
    const int which = k % 10;
    if (which < 3) {
        r.is_row = true;
        r.index = which;
        r.reversed = false;
    } else if (which < 7) {
        r.is_row = false;
        r.index = which - 3;
        r.reversed = false;
    } else {
        r.is_row = true;
        r.index = which - 7;
        r.reversed = true;
    }
    const int count = r.is_row ? kCols : kRows;
    r.total_m = 2 * kMarginM + (count - 1) * kSpacingM;
    for (int i = 0; i < count; ++i) {
        const int along = r.reversed ? count - 1 - i : i;
        const int row = r.is_row ? r.index : along;
        const int col = r.is_row ? along : r.index;
        r.site_ids.push_back(row * kCols + col);
        r.event_pos_m.push_back(kMarginM + i * kSpacingM);
    }
    return r;
}

struct DriveSpec {
    std::string participant_id;
    std::string drive_id;
    int drive_index;
    Band band;
    int64_t start_time;
    Route route;
};

struct BehaviorPlan {
    // behavior per site in travel order
    std::vector<encounters::StopBehavior> behavior;
    std::vector<double> v_event;
    std::vector<int> hold_s;
};

geo::GeoPoint position_on_route(const Route& r, double s, double perp_jitter_m) {
    const double mlon = meters_per_deg_lon();
    const double along = r.reversed ? r.total_m - s : s;
    if (r.is_row) {
        const double lat = kLat0 + r.index * kSpacingM / kMetersPerDegLat +
                           perp_jitter_m / kMetersPerDegLat;
        const double lon = kLon0 + (along - kMarginM) / mlon;
        return {lat, lon};
    }
    const double lat = kLat0 + (along - kMarginM) / kMetersPerDegLat;
    const double lon = kLon0 + r.index * kSpacingM / mlon + perp_jitter_m / mlon;
    return {lat, lon};
}

}  // namespace

void generate_corpus(const std::string& out_dir, uint64_t seed) {
    fs::create_directories(out_dir);
    Rng rng(seed);
    const std::vector<Site> sites = make_sites();
    const double mlon = meters_per_deg_lon();

    // Roster: two T1DM drivers and one control.
    const std::vector<std::pair<std::string, ParticipantType>> roster = {
        {"P01", ParticipantType::t1dm},
        {"P02", ParticipantType::t1dm},
        {"P03", ParticipantType::control},
    };
    const std::map<std::string, double> participant_logit = {
        {"P01", 0.9}, {"P02", -0.9}, {"P03", 0.0}};
    std::vector<double> site_logit(sites.size());
    for (std::size_t i = 0; i < sites.size(); ++i) site_logit[i] = rng.uniform(-1.7, 1.7);

    // Drive plan: ten drives per participant, one per day.
    std::vector<DriveSpec> drives;
    for (std::size_t p = 0; p < roster.size(); ++p) {
        for (int k = 0; k < kDays; ++k) {
            DriveSpec d;
            d.participant_id = roster[p].first;
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%s-D%02d", d.participant_id.c_str(), k + 1);
            d.drive_id = buf;
            d.drive_index = k;
            d.band = drive_band(k);
            d.start_time = kBaseTime + k * 86400 + (9 + static_cast<int>(p)) * 3600;
            d.route = make_route(k + static_cast<int>(p));  // stagger routes per participant
            drives.push_back(std::move(d));
        }
    }

    // Kinematic simulation per drive; detections fire on approach.
    std::vector<Drive> telemetry;
    std::vector<DetectionRecord> detections;
    for (const auto& spec : drives) {
        const ParticipantType ptype =
            spec.participant_id == "P03" ? ParticipantType::control : ParticipantType::t1dm;
        BehaviorPlan plan;
        for (std::size_t i = 0; i < spec.route.site_ids.size(); ++i) {
            const int site = spec.route.site_ids[i];
            const cgm::EpisodeLabel episode =
                ptype == ParticipantType::control
                    ? cgm::EpisodeLabel::control
                    : (spec.band == Band::hypo      ? cgm::EpisodeLabel::hypo
                       : spec.band == Band::moderate ? cgm::EpisodeLabel::moderate_hyper
                       : spec.band == Band::hyper    ? cgm::EpisodeLabel::severe_hyper
                                                     : cgm::EpisodeLabel::normal);
            const double logit =
                (episode == cgm::EpisodeLabel::control ? 0.9 : band_logit(spec.band)) +
                participant_logit.at(spec.participant_id) + site_logit[site];
            const bool unsafe = rng.bernoulli(1.0 / (1.0 + std::exp(-logit)));
            if (!unsafe) {
                plan.behavior.push_back(encounters::StopBehavior::full);
                plan.v_event.push_back(0.0);
                plan.hold_s.push_back(2 + rng.uniform_int(3));
            } else if (rng.bernoulli(0.8)) {
                plan.behavior.push_back(encounters::StopBehavior::rolling);
                plan.v_event.push_back(rng.uniform(1.5, 4.0));
                plan.hold_s.push_back(0);
            } else {
                plan.behavior.push_back(encounters::StopBehavior::no_stop);
                plan.v_event.push_back(kCruise);
                plan.hold_s.push_back(0);
            }
        }

        Drive drive;
        drive.participant_id = spec.participant_id;
        drive.drive_id = spec.drive_id;

        double s = 0.0, v = kCruise;
        int64_t t = spec.start_time;
        std::size_t ev = 0;
        int hold_left = -1;
        while (s < spec.route.total_m) {
            TelemetrySample sample;
            sample.timestamp = t;
            sample.participant_id = spec.participant_id;
            sample.drive_id = spec.drive_id;
            const geo::GeoPoint pos =
                position_on_route(spec.route, s, std::clamp(rng.normal(0.0, 1.2), -4.0, 4.0));
            sample.lat = pos.lat;
            sample.lon = pos.lon;
            sample.speed = v;
            drive.samples.push_back(sample);

            if (ev < spec.route.event_pos_m.size()) {
                const double d = spec.route.event_pos_m[ev] - s;
                if (d >= 5.0 && d <= 30.0 && rng.bernoulli(0.7)) {
                    DetectionRecord det;
                    det.timestamp = t;
                    det.participant_id = spec.participant_id;
                    det.drive_id = spec.drive_id;
                    const geo::GeoPoint dp = position_on_route(
                        spec.route, s, 0.0);
                    det.lat = dp.lat + rng.normal(0.0, 4.0) / kMetersPerDegLat;
                    det.lon = dp.lon + rng.normal(0.0, 4.0) / mlon;
                    det.class_label = "stop_sign";
                    det.confidence = 0.6 + 0.4 * rng.uniform();
                    detections.push_back(det);
                }
            }

            ++t;
            if (hold_left > 0) {
                --hold_left;
                if (hold_left == 0) {
                    ++ev;
                    hold_left = -1;
                }
                continue;  // stationary: s and v stay 0
            }

            double v_next;
            if (ev < spec.route.event_pos_m.size()) {
                const double d = spec.route.event_pos_m[ev] - s;
                const double ve = plan.v_event[ev];
                const bool is_full = plan.behavior[ev] == encounters::StopBehavior::full;
                const double v_allow =
                    d <= 0.0 ? kCruise : std::sqrt(ve * ve + 2.0 * kDecel * d);
                v_next = std::clamp(std::min(kCruise * (1.0 + 0.01 * rng.normal()), v_allow),
                                    std::max(0.0, v - kDecel), v + kAccel);
                if (is_full && d <= std::max(v_next, 1.0)) {
                    v = 0.0;
                    hold_left = plan.hold_s[ev];
                    continue;
                }
                if (!is_full && d <= v_next) ++ev;  // passing the sign this second
            } else {
                v_next = std::clamp(kCruise * (1.0 + 0.01 * rng.normal()),
                                    std::max(0.0, v - kDecel), v + kAccel);
            }
            s += v_next;
            v = v_next;
        }
        telemetry.push_back(std::move(drive));
    }

    // Isolated noise detections, far from every site, plus a handful of
    // pass-through traffic lights.
    {
        const double lat_span = (kRows - 1) * kSpacingM / kMetersPerDegLat;
        const double lon_span = (kCols - 1) * kSpacingM / mlon;
        std::vector<geo::GeoPoint> spots;
        int attempts = 0;
        while (spots.size() < 45 && attempts < 4000) {
            ++attempts;
            geo::GeoPoint cand{kLat0 + rng.uniform(-0.012, lat_span + 0.012),
                               kLon0 + rng.uniform(-0.016, lon_span + 0.016)};
            bool ok = true;
            for (const auto& site : sites) {
                if (geo::haversine_m(cand, {site.lat, site.lon}) < 120.0) ok = false;
            }
            for (const auto& sp : spots) {
                if (geo::haversine_m(cand, sp) < 150.0) ok = false;
            }
            if (ok) spots.push_back(cand);
        }
        for (const auto& sp : spots) {
            DetectionRecord det;
            const auto& host = drives[rng.uniform_int(static_cast<int>(drives.size()))];
            det.timestamp = host.start_time + rng.uniform_int(150);
            det.participant_id = host.participant_id;
            det.drive_id = host.drive_id;
            det.lat = sp.lat;
            det.lon = sp.lon;
            det.class_label = "stop_sign";
            det.confidence = 0.5 + 0.5 * rng.uniform();
            detections.push_back(det);
        }
        for (int i = 0; i < 25; ++i) {
            DetectionRecord det;
            const auto& host = drives[rng.uniform_int(static_cast<int>(drives.size()))];
            det.timestamp = host.start_time + rng.uniform_int(150);
            det.participant_id = host.participant_id;
            det.drive_id = host.drive_id;
            det.lat = kLat0 + rng.uniform(0.0, lat_span);
            det.lon = kLon0 + rng.uniform(0.0, lon_span);
            det.class_label = "traffic_light";
            det.confidence = 0.5 + 0.5 * rng.uniform();
            detections.push_back(det);
        }
    }
    std::sort(detections.begin(), detections.end(),
              [](const DetectionRecord& a, const DetectionRecord& b) {
                  return std::tie(a.participant_id, a.drive_id, a.timestamp, a.lat) <
                         std::tie(b.participant_id, b.drive_id, b.timestamp, b.lat);
              });

    // Intersection database covers seven of the twelve sites.
    const std::vector<std::pair<int, ControlType>> db_sites = {
        {0 * kCols + 0, ControlType::all_way},        {0 * kCols + 1, ControlType::minor_road_only},
        {0 * kCols + 2, ControlType::minor_road_only}, {1 * kCols + 0, ControlType::all_way},
        {1 * kCols + 2, ControlType::minor_road_only}, {2 * kCols + 1, ControlType::all_way},
        {2 * kCols + 3, ControlType::minor_road_only}};
    std::vector<IntersectionDbEntry> db;
    for (std::size_t i = 0; i < db_sites.size(); ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "IA-%03d", static_cast<int>(i) + 1);
        db.push_back({buf, sites[db_sites[i].first].lat, sites[db_sites[i].first].lon,
                      db_sites[i].second});
    }

    // CGM: continuous 5-minute series for the T1DM participants, banded
    // around each drive, with scripted spike artifacts, light random slot
    // loss away from drives, and one fully uncovered drive per participant.
    std::vector<GlucoseReading> cgm_rows;
    for (const auto& [pid, ptype] : roster) {
        if (ptype != ParticipantType::t1dm) continue;
        std::vector<const DriveSpec*> own;
        for (const auto& d : drives) {
            if (d.participant_id == pid) own.push_back(&d);
        }
        const int blackout_drive = pid == "P01" ? 9 : 0;  // a normal-band drive
        int64_t blackout_lo = 0, blackout_hi = 0;
        for (const auto* d : own) {
            if (d->drive_index == blackout_drive) {
                blackout_lo = d->start_time - 700;
                blackout_hi = d->start_time + 400;
            }
        }
        std::set<int64_t> spike_times;
        for (int day = 0; day < kDays; ++day) {
            spike_times.insert(kBaseTime + day * 86400 + 13 * 3600 + 1800);
            spike_times.insert(kBaseTime + day * 86400 + 16 * 3600);
            spike_times.insert(kBaseTime + day * 86400 + 19 * 3600 + 1800);
            spike_times.insert(kBaseTime + day * 86400 + 22 * 3600);
        }

        double g = 120.0;
        for (int day = 0; day < kDays; ++day) {
            for (int slot = 0; slot < 288; ++slot) {
                const int64_t t = kBaseTime + day * 86400 + slot * 300;
                const DriveSpec* near = nullptr;
                bool in_drive = false;
                for (const auto* d : own) {
                    if (t >= d->start_time - 3600 && t <= d->start_time + 2400) near = d;
                    if (t >= d->start_time - 300 && t <= d->start_time + 600) in_drive = true;
                }
                const BandRange range = near ? band_range(near->band) : band_range(Band::normal);
                double next = std::clamp(range.target, g * 0.82, g * 1.18) + rng.normal(0.0, 2.5);
                if (near && in_drive) next = std::clamp(next, range.lo, range.hi);
                next = std::clamp(next, 48.0, 360.0);
                g = next;

                const bool near_any_drive = near != nullptr;
                if (t >= blackout_lo && t < blackout_hi) continue;
                if (!near_any_drive && rng.bernoulli(0.02)) continue;

                double emitted = g;
                if (spike_times.count(t) && !near_any_drive) emitted = g * 1.5;
                GlucoseReading r;
                r.timestamp = t;
                r.participant_id = pid;
                r.glucose = std::round(emitted * 10.0) / 10.0;
                cgm_rows.push_back(r);
            }
        }
    }

    // Reproduce the pipeline's own encounter enumeration so annotation keys
    // line up with real (drive, ordinal) pairs.
    const intersections::BuildResult built =
        intersections::build_intersections(detections, db, 50.0, 5, 25.0);
    std::map<std::string, cgm::GlucoseSeries> cleaned;
    {
        std::map<std::string, std::vector<GlucoseReading>> per;
        for (const auto& r : cgm_rows) per[r.participant_id].push_back(r);
        for (auto& [pid, raw] : per) {
            cgm::GlucoseSeries s = cgm::clean_series(raw);
            s.participant_id = pid;
            cleaned.emplace(pid, std::move(s));
        }
    }
    std::vector<encounters::Encounter> all_encounters;
    for (const auto& d : telemetry) {
        const ParticipantType ptype =
            d.participant_id == "P03" ? ParticipantType::control : ParticipantType::t1dm;
        static const cgm::GlucoseSeries empty;
        const auto it = cleaned.find(d.participant_id);
        const fusion::FusedDrive fused =
            fusion::fuse_drive(d, it == cleaned.end() ? empty : it->second, ptype, 360.0, 0.05);
        if (fused.discarded) continue;
        encounters::DetectParams dp;
        const auto found = encounters::detect_encounters(fused, built.intersections, dp);
        all_encounters.insert(all_encounters.end(), found.begin(), found.end());
    }
    if (all_encounters.size() < 60) {
        throw Error("synth: corpus produced too few encounters; adjust the seed");
    }

    std::vector<EncounterAnnotation> annotations;
    {
        struct Kind {
            ConfoundStatus lead, cross, ped;
            bool primary;
        };
        const std::vector<Kind> kinds = {
            {ConfoundStatus::none, ConfoundStatus::present_with_effect, ConfoundStatus::none, true},
            {ConfoundStatus::present_with_effect, ConfoundStatus::none, ConfoundStatus::none, true},
            {ConfoundStatus::none, ConfoundStatus::none, ConfoundStatus::none, false},
            {ConfoundStatus::none, ConfoundStatus::present_without_effect, ConfoundStatus::none, true},
            {ConfoundStatus::none, ConfoundStatus::none, ConfoundStatus::present_with_effect, true},
            {ConfoundStatus::none, ConfoundStatus::none, ConfoundStatus::none, false},
            {ConfoundStatus::present_without_effect, ConfoundStatus::none, ConfoundStatus::none, true},
            {ConfoundStatus::none, ConfoundStatus::present_with_effect, ConfoundStatus::none, true},
        };
        for (std::size_t i = 0; i < kinds.size(); ++i) {
            const auto& e = all_encounters[(i * all_encounters.size()) / kinds.size() + 3];
            EncounterAnnotation a;
            a.drive_id = e.drive_id;
            a.ordinal = e.ordinal;
            a.lead_vehicle = kinds[i].lead;
            a.crossing_vehicle = kinds[i].cross;
            a.crossing_pedestrian = kinds[i].ped;
            a.is_primary_driver = kinds[i].primary;
            annotations.push_back(a);
        }
        std::sort(annotations.begin(), annotations.end(),
                  [](const EncounterAnnotation& a, const EncounterAnnotation& b) {
                      return std::tie(a.drive_id, a.ordinal) < std::tie(b.drive_id, b.ordinal);
                  });
    }

    // Balance check: every fixed-effect level the models use must carry both
    // outcomes, otherwise the bundled corpus would separate.
    {
        std::map<std::pair<std::string, int>, EncounterAnnotation> amap;
        for (const auto& a : annotations) amap[{a.drive_id, a.ordinal}] = a;
        std::vector<encounters::Encounter> annotated = all_encounters;
        encounters::annotate(annotated, amap);
        const auto selected = encounters::apply_selection(annotated);
        const auto bin = encounters::binarize(selected);
        std::map<std::string, std::pair<int, int>> outcome;
        for (const auto& r : bin.rows) {
            auto& o = outcome[cgm::to_string(r.episode)];
            (r.unsafe ? o.second : o.first) += 1;
        }
        for (const auto& [level, o] : outcome) {
            if (o.first == 0 || o.second == 0) {
                throw Error("synth: episode level '" + level +
                            "' is one-sided; adjust the seed");
            }
        }
    }

    std::map<std::string, ParticipantType> roster_map(roster.begin(), roster.end());
    ingest::write_telemetry((fs::path(out_dir) / "telemetry.csv").string(), telemetry);
    ingest::write_cgm((fs::path(out_dir) / "cgm.csv").string(), cgm_rows);
    ingest::write_detections((fs::path(out_dir) / "detections.csv").string(), detections);
    ingest::write_intersection_db((fs::path(out_dir) / "intersections_db.csv").string(), db);
    ingest::write_annotations((fs::path(out_dir) / "annotations.csv").string(), annotations);
    ingest::write_roster((fs::path(out_dir) / "roster.csv").string(), roster_map);

    std::ofstream cfg((fs::path(out_dir) / "config.json").string(), std::ios::binary);
    cfg << "{\n"
        << "  \"inputs\": {\n"
        << "    \"telemetry\": \"telemetry.csv\",\n"
        << "    \"cgm\": \"cgm.csv\",\n"
        << "    \"detections\": \"detections.csv\",\n"
        << "    \"intersections\": \"intersections_db.csv\",\n"
        << "    \"annotations\": \"annotations.csv\",\n"
        << "    \"roster\": \"roster.csv\"\n"
        << "  },\n"
        << "  \"params\": {\n"
        << "    \"eps\": 50.0,\n"
        << "    \"min_pts\": 5,\n"
        << "    \"merge_radius\": 25.0,\n"
        << "    \"staleness\": 360.0,\n"
        << "    \"discard_threshold\": 0.05,\n"
        << "    \"capture_radius\": 25.0,\n"
        << "    \"refractory_s\": 60.0,\n"
        << "    \"v_stop_eps\": 0.5,\n"
        << "    \"min_stop_s\": 2.0,\n"
        << "    \"no_stop_ratio\": 0.9,\n"
        << "    \"glmm_tol\": 1e-06,\n"
        << "    \"glmm_max_iter\": 600\n"
        << "  },\n"
        << "  \"out_dir\": \"out\"\n"
        << "}\n";
}

}  // namespace stopsafe::synth
