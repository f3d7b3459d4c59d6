#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stopsafe/errors.hpp"

namespace stopsafe {

// Provenance of a parsed record: which file and line it came from.
struct SourceRef {
    std::string file;
    std::size_t row_number = 0;
};

// One 1 Hz vehicle-state sample.
struct TelemetrySample {
    int64_t timestamp = 0;  // seconds since epoch
    std::string participant_id;
    std::string drive_id;
    double lat = 0.0;   // degrees WGS84
    double lon = 0.0;   // degrees WGS84
    double speed = 0.0; // m/s, >= 0
    std::optional<double> heading;  // degrees [0,360)
    SourceRef source;

    bool operator==(const TelemetrySample& o) const {
        return timestamp == o.timestamp && participant_id == o.participant_id &&
               drive_id == o.drive_id && lat == o.lat && lon == o.lon && speed == o.speed &&
               heading == o.heading;
    }
};

struct GlucoseReading {
    int64_t timestamp = 0;
    std::string participant_id;
    double glucose = 0.0;  // mg/dL, > 0
    SourceRef source;

    bool operator==(const GlucoseReading& o) const {
        return timestamp == o.timestamp && participant_id == o.participant_id && glucose == o.glucose;
    }
};

struct DetectionRecord {
    int64_t timestamp = 0;
    std::string participant_id;
    std::string drive_id;
    double lat = 0.0;
    double lon = 0.0;
    std::string class_label;  // from the declared vocabulary
    double confidence = 0.0;  // [0,1]
    SourceRef source;

    bool operator==(const DetectionRecord& o) const {
        return timestamp == o.timestamp && participant_id == o.participant_id &&
               drive_id == o.drive_id && lat == o.lat && lon == o.lon &&
               class_label == o.class_label && confidence == o.confidence;
    }
};

enum class ControlType { all_way, minor_road_only, unknown };
enum class ParticipantType { t1dm, control };
enum class ConfoundStatus { none, present_with_effect, present_without_effect };

std::string to_string(ControlType t);
std::string to_string(ParticipantType t);
std::string to_string(ConfoundStatus s);
ControlType control_type_from_string(const std::string& s);
ParticipantType participant_type_from_string(const std::string& s);
ConfoundStatus confound_from_string(const std::string& s);

struct IntersectionDbEntry {
    std::string id;
    double lat = 0.0;
    double lon = 0.0;
    ControlType control_type = ControlType::unknown;
};

// Manual-review flags for one encounter, keyed by (drive_id, 1-based
// encounter ordinal within the drive).
struct EncounterAnnotation {
    std::string drive_id;
    int ordinal = 0;
    ConfoundStatus lead_vehicle = ConfoundStatus::none;
    ConfoundStatus crossing_vehicle = ConfoundStatus::none;
    ConfoundStatus crossing_pedestrian = ConfoundStatus::none;
    bool is_primary_driver = true;
};

struct AuxTables {
    std::vector<IntersectionDbEntry> intersection_db;
    std::map<std::pair<std::string, int>, EncounterAnnotation> encounter_annotations;
    std::map<std::string, ParticipantType> participant_roster;
};

// Telemetry for one drive, time-ordered.
struct Drive {
    std::string participant_id;
    std::string drive_id;
    std::vector<TelemetrySample> samples;
};

}  // namespace stopsafe
