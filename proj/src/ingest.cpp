#include "stopsafe/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace stopsafe {

std::string to_string(ControlType t) {
    switch (t) {
        case ControlType::all_way: return "all_way";
        case ControlType::minor_road_only: return "minor_road_only";
        default: return "unknown";
    }
}

std::string to_string(ParticipantType t) {
    return t == ParticipantType::t1dm ? "t1dm" : "control";
}

std::string to_string(ConfoundStatus s) {
    switch (s) {
        case ConfoundStatus::none: return "none";
        case ConfoundStatus::present_with_effect: return "present_with_effect";
        default: return "present_without_effect";
    }
}

ControlType control_type_from_string(const std::string& s) {
    if (s == "all_way") return ControlType::all_way;
    if (s == "minor_road_only") return ControlType::minor_road_only;
    if (s == "unknown") return ControlType::unknown;
    throw Error("unknown control_type: '" + s + "'");
}

ParticipantType participant_type_from_string(const std::string& s) {
    if (s == "t1dm") return ParticipantType::t1dm;
    if (s == "control") return ParticipantType::control;
    throw Error("unknown participant_type: '" + s + "'");
}

ConfoundStatus confound_from_string(const std::string& s) {
    if (s == "none") return ConfoundStatus::none;
    if (s == "present_with_effect") return ConfoundStatus::present_with_effect;
    if (s == "present_without_effect") return ConfoundStatus::present_without_effect;
    throw Error("unknown confound status: '" + s + "'");
}

}  // namespace stopsafe

namespace stopsafe::ingest {

namespace {

SourceRef ref(const csv::Table& t, const csv::Row& r) { return {t.source(), r.row_number}; }

}  // namespace

const std::vector<std::string>& detection_class_vocabulary() {
    static const std::vector<std::string> vocab = {
        "stop_sign", "traffic_sign", "traffic_light", "pedestrian", "vehicle", "bus", "bicycle",
    };
    return vocab;
}

TelemetryLoad load_telemetry(const std::string& path) {
    csv::Table t = csv::Table::read_file(path);
    t.require_columns({"timestamp", "participant_id", "drive_id", "lat", "lon", "speed"});
    const auto c_ts = t.column("timestamp");
    const auto c_pid = t.column("participant_id");
    const auto c_did = t.column("drive_id");
    const auto c_lat = t.column("lat");
    const auto c_lon = t.column("lon");
    const auto c_speed = t.column("speed");
    const bool has_heading = t.has_column("heading");
    const std::size_t c_heading = has_heading ? t.column("heading") : 0;

    TelemetryLoad out;
    // drive_id -> position in out.drives
    std::map<std::string, std::size_t> drive_index;

    for (const auto& row : t.rows()) {
        TelemetrySample s;
        s.timestamp = t.get_timestamp(row, c_ts);
        s.participant_id = t.get_string(row, c_pid);
        s.drive_id = t.get_string(row, c_did);
        s.lat = t.get_double(row, c_lat);
        s.lon = t.get_double(row, c_lon);
        s.speed = t.get_double(row, c_speed);
        if (has_heading) {
            s.heading = t.get_optional_double(row, c_heading);
            if (s.heading && (*s.heading < 0.0 || *s.heading >= 360.0))
                t.fail_row(row, "heading out of [0,360): " + csv::format_double(*s.heading));
        }
        if (s.participant_id.empty()) t.fail_row(row, "empty participant_id");
        if (s.drive_id.empty()) t.fail_row(row, "empty drive_id");
        if (s.lat < -90.0 || s.lat > 90.0) t.fail_row(row, "lat out of [-90,90]: " + csv::format_double(s.lat));
        if (s.lon < -180.0 || s.lon > 180.0) t.fail_row(row, "lon out of [-180,180]: " + csv::format_double(s.lon));
        if (!(s.speed >= 0.0) || !std::isfinite(s.speed)) t.fail_row(row, "negative or non-finite speed");
        s.source = ref(t, row);

        auto [it, inserted] = drive_index.try_emplace(s.drive_id, out.drives.size());
        if (inserted) {
            out.drives.push_back(Drive{s.participant_id, s.drive_id, {}});
        }
        Drive& d = out.drives[it->second];
        if (d.participant_id != s.participant_id) {
            t.fail_row(row, "drive " + s.drive_id + " spans participants " + d.participant_id +
                                " and " + s.participant_id);
        }
        if (!d.samples.empty()) {
            int64_t prev = d.samples.back().timestamp;
            if (s.timestamp == prev) {
                ++out.duplicate_rows_dropped;  // keep the first occurrence
                continue;
            }
            if (s.timestamp < prev) {
                throw NonMonotonicTime(
                    t.source() + ": row " + std::to_string(row.row_number) +
                        ": timestamp goes backwards within drive " + s.drive_id,
                    s.drive_id);
            }
        }
        d.samples.push_back(std::move(s));
    }

    std::sort(out.drives.begin(), out.drives.end(), [](const Drive& a, const Drive& b) {
        return std::tie(a.participant_id, a.drive_id) < std::tie(b.participant_id, b.drive_id);
    });
    return out;
}

CgmLoad load_cgm(const std::string& path) {
    csv::Table t = csv::Table::read_file(path);
    t.require_columns({"timestamp", "participant_id", "glucose"});
    const auto c_ts = t.column("timestamp");
    const auto c_pid = t.column("participant_id");
    const auto c_glu = t.column("glucose");

    CgmLoad out;
    for (const auto& row : t.rows()) {
        GlucoseReading r;
        r.timestamp = t.get_timestamp(row, c_ts);
        r.participant_id = t.get_string(row, c_pid);
        r.glucose = t.get_double(row, c_glu);
        if (r.participant_id.empty()) t.fail_row(row, "empty participant_id");
        if (!(r.glucose > 0.0) || !std::isfinite(r.glucose)) {
            throw NonPositiveGlucose(t.source() + ": row " + std::to_string(row.row_number) +
                                     ": glucose must be > 0, got " + csv::format_double(r.glucose));
        }
        r.source = ref(t, row);
        out.readings.push_back(std::move(r));
    }
    std::stable_sort(out.readings.begin(), out.readings.end(),
                     [](const GlucoseReading& a, const GlucoseReading& b) {
                         return std::tie(a.participant_id, a.timestamp) <
                                std::tie(b.participant_id, b.timestamp);
                     });
    // Collapse duplicate (participant, timestamp) pairs, keeping the first.
    std::vector<GlucoseReading> dedup;
    dedup.reserve(out.readings.size());
    for (auto& r : out.readings) {
        if (!dedup.empty() && dedup.back().participant_id == r.participant_id &&
            dedup.back().timestamp == r.timestamp) {
            ++out.duplicate_rows_dropped;
            continue;
        }
        dedup.push_back(std::move(r));
    }
    out.readings = std::move(dedup);
    return out;
}

AuxLoad load_aux(const std::string& detections_path, const std::string& intersections_path,
                 const std::string& annotations_path, const std::string& roster_path) {
    AuxLoad out;

    {
        csv::Table t = csv::Table::read_file(detections_path);
        t.require_columns({"timestamp", "participant_id", "drive_id", "lat", "lon", "class_label",
                           "confidence"});
        const auto& vocab = detection_class_vocabulary();
        for (const auto& row : t.rows()) {
            DetectionRecord d;
            d.timestamp = t.get_timestamp(row, t.column("timestamp"));
            d.participant_id = t.get_string(row, t.column("participant_id"));
            d.drive_id = t.get_string(row, t.column("drive_id"));
            d.lat = t.get_double(row, t.column("lat"));
            d.lon = t.get_double(row, t.column("lon"));
            d.class_label = t.get_string(row, t.column("class_label"));
            d.confidence = t.get_double(row, t.column("confidence"));
            if (d.lat < -90.0 || d.lat > 90.0) t.fail_row(row, "lat out of range");
            if (d.lon < -180.0 || d.lon > 180.0) t.fail_row(row, "lon out of range");
            if (d.confidence < 0.0 || d.confidence > 1.0) t.fail_row(row, "confidence out of [0,1]");
            if (std::find(vocab.begin(), vocab.end(), d.class_label) == vocab.end()) {
                throw UnknownClassLabel(t.source() + ": row " + std::to_string(row.row_number) +
                                        ": unknown class_label '" + d.class_label + "'");
            }
            if (d.class_label == "stop_sign") ++out.stop_sign_count;
            d.source = ref(t, row);
            out.detections.push_back(std::move(d));
        }
    }

    {
        csv::Table t = csv::Table::read_file(intersections_path);
        t.require_columns({"id", "lat", "lon", "control_type"});
        std::set<std::string> seen;
        for (const auto& row : t.rows()) {
            IntersectionDbEntry e;
            e.id = t.get_string(row, t.column("id"));
            e.lat = t.get_double(row, t.column("lat"));
            e.lon = t.get_double(row, t.column("lon"));
            if (e.id.empty()) t.fail_row(row, "empty intersection id");
            if (!seen.insert(e.id).second) t.fail_row(row, "duplicate intersection id '" + e.id + "'");
            try {
                e.control_type = control_type_from_string(t.get_string(row, t.column("control_type")));
            } catch (const Error& err) {
                t.fail_row(row, err.what());
            }
            out.tables.intersection_db.push_back(std::move(e));
        }
    }

    if (!annotations_path.empty()) {
        csv::Table t = csv::Table::read_file(annotations_path);
        t.require_columns({"drive_id", "encounter_ordinal", "lead_vehicle", "crossing_vehicle",
                           "crossing_pedestrian", "is_primary_driver"});
        for (const auto& row : t.rows()) {
            EncounterAnnotation a;
            a.drive_id = t.get_string(row, t.column("drive_id"));
            a.ordinal = static_cast<int>(t.get_int(row, t.column("encounter_ordinal")));
            if (a.ordinal < 1) t.fail_row(row, "encounter_ordinal must be >= 1");
            try {
                a.lead_vehicle = confound_from_string(t.get_string(row, t.column("lead_vehicle")));
                a.crossing_vehicle = confound_from_string(t.get_string(row, t.column("crossing_vehicle")));
                a.crossing_pedestrian =
                    confound_from_string(t.get_string(row, t.column("crossing_pedestrian")));
            } catch (const Error& err) {
                t.fail_row(row, err.what());
            }
            const std::string primary = t.get_string(row, t.column("is_primary_driver"));
            if (primary == "yes") a.is_primary_driver = true;
            else if (primary == "no") a.is_primary_driver = false;
            else t.fail_row(row, "is_primary_driver must be yes/no, got '" + primary + "'");

            auto key = std::make_pair(a.drive_id, a.ordinal);
            if (out.tables.encounter_annotations.count(key)) {
                t.fail_row(row, "duplicate annotation key (" + a.drive_id + ", " +
                                    std::to_string(a.ordinal) + ")");
            }
            out.tables.encounter_annotations.emplace(key, a);
        }
    }

    {
        csv::Table t = csv::Table::read_file(roster_path);
        t.require_columns({"participant_id", "participant_type"});
        for (const auto& row : t.rows()) {
            std::string pid = t.get_string(row, t.column("participant_id"));
            if (pid.empty()) t.fail_row(row, "empty participant_id");
            ParticipantType pt;
            try {
                pt = participant_type_from_string(t.get_string(row, t.column("participant_type")));
            } catch (const Error& err) {
                t.fail_row(row, err.what());
            }
            if (out.tables.participant_roster.count(pid))
                t.fail_row(row, "duplicate roster entry '" + pid + "'");
            out.tables.participant_roster.emplace(std::move(pid), pt);
        }
    }

    return out;
}

void cross_validate(const TelemetryLoad& telemetry, const AuxLoad& aux) {
    std::set<std::string> drive_ids;
    for (const auto& d : telemetry.drives) {
        drive_ids.insert(d.drive_id);
        if (!aux.tables.participant_roster.count(d.participant_id)) {
            throw MissingRosterEntry("participant '" + d.participant_id +
                                     "' appears in telemetry but not in the roster");
        }
    }
    for (const auto& [key, a] : aux.tables.encounter_annotations) {
        if (!drive_ids.count(key.first)) {
            throw DanglingAnnotationKey("annotation references unknown drive '" + key.first + "'");
        }
    }
}

void write_telemetry(const std::string& path, const std::vector<Drive>& drives) {
    csv::Writer w(path);
    w.write_row({"timestamp", "participant_id", "drive_id", "lat", "lon", "speed", "heading"});
    for (const auto& d : drives) {
        for (const auto& s : d.samples) {
            w.write_row({std::to_string(s.timestamp), s.participant_id, s.drive_id,
                         csv::format_double(s.lat, 7), csv::format_double(s.lon, 7),
                         csv::format_double(s.speed, 3),
                         s.heading ? csv::format_double(*s.heading, 2) : std::string()});
        }
    }
}

void write_cgm(const std::string& path, const std::vector<GlucoseReading>& readings) {
    csv::Writer w(path);
    w.write_row({"timestamp", "participant_id", "glucose"});
    for (const auto& r : readings) {
        w.write_row({std::to_string(r.timestamp), r.participant_id, csv::format_double(r.glucose, 1)});
    }
}

void write_detections(const std::string& path, const std::vector<DetectionRecord>& detections) {
    csv::Writer w(path);
    w.write_row({"timestamp", "participant_id", "drive_id", "lat", "lon", "class_label", "confidence"});
    for (const auto& d : detections) {
        w.write_row({std::to_string(d.timestamp), d.participant_id, d.drive_id,
                     csv::format_double(d.lat, 7), csv::format_double(d.lon, 7), d.class_label,
                     csv::format_double(d.confidence, 3)});
    }
}

void write_intersection_db(const std::string& path, const std::vector<IntersectionDbEntry>& db) {
    csv::Writer w(path);
    w.write_row({"id", "lat", "lon", "control_type"});
    for (const auto& e : db) {
        w.write_row({e.id, csv::format_double(e.lat, 7), csv::format_double(e.lon, 7),
                     to_string(e.control_type)});
    }
}

void write_annotations(const std::string& path, const std::vector<EncounterAnnotation>& annotations) {
    csv::Writer w(path);
    w.write_row({"drive_id", "encounter_ordinal", "lead_vehicle", "crossing_vehicle",
                 "crossing_pedestrian", "is_primary_driver"});
    for (const auto& a : annotations) {
        w.write_row({a.drive_id, std::to_string(a.ordinal), to_string(a.lead_vehicle),
                     to_string(a.crossing_vehicle), to_string(a.crossing_pedestrian),
                     a.is_primary_driver ? "yes" : "no"});
    }
}

void write_roster(const std::string& path, const std::map<std::string, ParticipantType>& roster) {
    csv::Writer w(path);
    w.write_row({"participant_id", "participant_type"});
    for (const auto& [pid, pt] : roster) {
        w.write_row({pid, to_string(pt)});
    }
}

}  // namespace stopsafe::ingest
