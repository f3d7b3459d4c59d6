#pragma once

#include <string>
#include <vector>

#include "stopsafe/csv.hpp"
#include "stopsafe/records.hpp"

namespace stopsafe::ingest {

using csv::MalformedRow;
using csv::MissingColumn;

class NonMonotonicTime : public Error {
public:
    NonMonotonicTime(const std::string& msg, std::string drive) : Error(msg), drive_id(std::move(drive)) {}
    std::string drive_id;
};

class NonPositiveGlucose : public Error {
public:
    using Error::Error;
};

class UnknownClassLabel : public Error {
public:
    using Error::Error;
};

class DanglingAnnotationKey : public Error {
public:
    using Error::Error;
};

class MissingRosterEntry : public Error {
public:
    using Error::Error;
};

struct TelemetryLoad {
    std::vector<Drive> drives;  // sorted by (participant_id, drive_id), samples by time
    std::size_t duplicate_rows_dropped = 0;
};

struct CgmLoad {
    // Sorted by (participant_id, timestamp).
    std::vector<GlucoseReading> readings;
    std::size_t duplicate_rows_dropped = 0;
};

struct AuxLoad {
    std::vector<DetectionRecord> detections;  // all classes, pass-through preserved
    AuxTables tables;
    std::size_t stop_sign_count = 0;  // clustering candidates among detections
};

// Vocabulary the detector was trained on; anything else is rejected.
const std::vector<std::string>& detection_class_vocabulary();

// CSV columns: timestamp,participant_id,drive_id,lat,lon,speed[,heading].
// Within each drive the input must be time-ordered; exact duplicate
// timestamps collapse to the first occurrence and are counted.
TelemetryLoad load_telemetry(const std::string& path);

// CSV columns: timestamp,participant_id,glucose.
CgmLoad load_cgm(const std::string& path);

// detections: timestamp,participant_id,drive_id,lat,lon,class_label,confidence
// intersections: id,lat,lon,control_type
// annotations (optional, empty path = none):
//   drive_id,encounter_ordinal,lead_vehicle,crossing_vehicle,crossing_pedestrian,is_primary_driver
// roster: participant_id,participant_type
AuxLoad load_aux(const std::string& detections_path, const std::string& intersections_path,
                 const std::string& annotations_path, const std::string& roster_path);

// Cross-file validation: the roster must cover every participant in the
// telemetry and every annotation key must reference a loaded drive.
void cross_validate(const TelemetryLoad& telemetry, const AuxLoad& aux);

// Canonical serializers (inverse of the loaders, used by round-trip checks
// and the synthetic-corpus writer).
void write_telemetry(const std::string& path, const std::vector<Drive>& drives);
void write_cgm(const std::string& path, const std::vector<GlucoseReading>& readings);
void write_detections(const std::string& path, const std::vector<DetectionRecord>& detections);
void write_intersection_db(const std::string& path, const std::vector<IntersectionDbEntry>& db);
void write_annotations(const std::string& path, const std::vector<EncounterAnnotation>& annotations);
void write_roster(const std::string& path, const std::map<std::string, ParticipantType>& roster);

}  // namespace stopsafe::ingest
