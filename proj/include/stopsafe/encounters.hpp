#pragma once

#include <map>
#include <string>
#include <vector>

#include "stopsafe/fusion.hpp"
#include "stopsafe/intersections.hpp"

namespace stopsafe::encounters {

class EmptyWindow : public Error {
public:
    using Error::Error;
};

enum class StopBehavior { full, rolling, no_stop };

std::string to_string(StopBehavior b);

struct EncounterFlags {
    ConfoundStatus lead_vehicle = ConfoundStatus::none;
    ConfoundStatus crossing_vehicle = ConfoundStatus::none;
    ConfoundStatus crossing_pedestrian = ConfoundStatus::none;
    bool is_primary_driver = true;
};

// One approach to one stop intersection, windowed 300 ft upstream to 200 ft
// downstream of the nearest-approach point along the path.
struct Encounter {
    std::string participant_id;
    std::string drive_id;
    ParticipantType participant_type = ParticipantType::control;
    std::string intersection_id;
    int ordinal = 0;  // 1-based position within the drive, time order
    double nearest_approach_m = 0.0;
    std::vector<fusion::FusedSample> window;
    double v_entry = 0.0;       // speed at window entry, m/s
    double v_min = 0.0;         // minimum speed in window
    double stationary_s = 0.0;  // longest stretch below v_stop_eps, seconds
    StopBehavior behavior = StopBehavior::no_stop;
    EncounterFlags flags;
    cgm::EpisodeLabel episode = cgm::EpisodeLabel::missing;
    int64_t timestamp = 0;  // nearest-approach time
};

struct BehaviorRow {
    std::string participant_id;
    std::string intersection_id;
    ParticipantType participant_type = ParticipantType::control;
    cgm::EpisodeLabel episode = cgm::EpisodeLabel::missing;
    int unsafe = 0;  // 1 = rolling or no stop, 0 = full stop
};

struct ClassifyParams {
    double v_stop_eps = 0.5;   // m/s
    double min_stop_s = 2.0;   // seconds
    double no_stop_ratio = 0.9;
    double sample_dt = 1.0;    // seconds represented by one speed sample
};

struct DetectParams {
    double capture_radius = 25.0;  // m
    double refractory_s = 60.0;    // s
    double upstream_m = 91.44;     // 300 ft
    double downstream_m = 60.96;   // 200 ft
    ClassifyParams classify;
};

// Finds local minima of distance-to-center below capture_radius, collapses
// minima of the same intersection closer than refractory_s in time to the
// nearest one, and cuts the approach window by path distance. Windows of the
// same (drive, intersection) never overlap in time. Encounters are returned
// in time order with 1-based ordinals assigned across the whole drive.
std::vector<Encounter> detect_encounters(const fusion::FusedDrive& drive,
                                         const std::vector<intersections::Intersection>& list,
                                         const DetectParams& params);

// Precedence: full (stationary at least min_stop_s) beats no_stop (minimum
// speed at or above no_stop_ratio * v_entry) beats rolling.
StopBehavior classify_stop(const std::vector<double>& window_speeds, double v_entry,
                           const ClassifyParams& params);

// Applies the manual-review flags: only annotated rows change; everything
// else keeps the permissive defaults.
void annotate(std::vector<Encounter>& encounters,
              const std::map<std::pair<std::string, int>, EncounterAnnotation>& annotations);

// Keeps encounters whose driver is the consented participant and whose
// behavior was not altered by surrounding traffic.
std::vector<Encounter> apply_selection(const std::vector<Encounter>& encounters);

struct BinarizeResult {
    std::vector<BehaviorRow> rows;
    std::size_t dropped_missing_episode = 0;
};

BinarizeResult binarize(const std::vector<Encounter>& encounters);

void write_encounters_csv(const std::string& path, const std::vector<Encounter>& encounters);

}  // namespace stopsafe::encounters
