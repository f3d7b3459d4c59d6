#pragma once

#include <set>
#include <string>
#include <vector>

#include "stopsafe/report.hpp"

namespace stopsafe::pipeline {

class ConfigError : public Error {
public:
    using Error::Error;
};

struct PipelineParams {
    double eps = 50.0;
    int min_pts = 5;
    double merge_radius = 25.0;
    double staleness = 360.0;
    double discard_threshold = 0.05;
    double capture_radius = 25.0;
    double refractory_s = 60.0;
    double v_stop_eps = 0.5;
    double min_stop_s = 2.0;
    double no_stop_ratio = 0.9;
    double glmm_tol = 1e-6;
    int glmm_max_iter = 600;
};

// Stage names in dependency order.
const std::vector<std::string>& stage_order();

struct PipelineConfig {
    std::string telemetry_path;
    std::string cgm_path;
    std::string detections_path;
    std::string intersections_path;
    std::string annotations_path;  // optional, may be empty
    std::string roster_path;
    PipelineParams params;
    std::string out_dir;
    std::vector<std::string> stages;  // subset of stage_order(); empty = all

    // Reads the JSON configuration file. Unknown keys are rejected.
    static PipelineConfig from_file(const std::string& path);

    // Checks paths, parameter ranges and stage ordering; throws ConfigError.
    void validate() const;
};

// Runs the requested stages in dependency order, computing unreported
// prerequisites in memory, and writes the intermediate CSVs and both report
// formats under out_dir.
report::RunReport run_pipeline(const PipelineConfig& config);

}  // namespace stopsafe::pipeline
