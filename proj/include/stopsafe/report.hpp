#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stopsafe/glmm.hpp"

namespace stopsafe::report {

struct IngestBlock {
    std::size_t telemetry_rows = 0;
    std::size_t drives = 0;
    std::size_t participants = 0;
    std::size_t duplicate_telemetry_rows = 0;
    std::size_t cgm_readings = 0;
    std::size_t duplicate_cgm_rows = 0;
    std::size_t detections = 0;
    std::size_t stop_sign_detections = 0;
    std::size_t db_intersections = 0;
    std::size_t annotations = 0;
    std::size_t roster_entries = 0;
};

struct IntersectionsBlock {
    bool ran = false;
    int clusters = 0;
    std::size_t noise_detections = 0;
    std::size_t total = 0;
    std::size_t from_database = 0;
    std::size_t from_clustering = 0;
};

struct CgmParticipantRow {
    std::string participant_id;
    std::size_t raw = 0;
    std::size_t retained = 0;
    std::size_t removed = 0;
    double removed_fraction = 0.0;
    int64_t expected_slots = 0;
    int64_t observed_slots = 0;
    double missing_fraction = 0.0;
    bool meets_fda = true;
};

struct CgmBlock {
    bool ran = false;
    std::vector<CgmParticipantRow> participants;
    std::size_t total_removed = 0;
};

struct FusionBlock {
    bool ran = false;
    std::size_t n_drives = 0;
    std::size_t n_discarded = 0;
    double discard_fraction = 0.0;
};

struct OutcomeSplit {
    std::size_t safe = 0;
    std::size_t unsafe = 0;
};

struct EncountersBlock {
    bool ran = false;
    std::size_t detected = 0;
    std::size_t excluded_not_primary = 0;
    std::size_t excluded_confound = 0;
    std::size_t selected = 0;
    std::size_t dropped_missing_episode = 0;
    std::size_t rows = 0;
    std::size_t unused_annotations = 0;
    std::map<std::string, std::size_t> by_behavior;          // full/rolling/no_stop
    std::map<std::string, OutcomeSplit> by_episode;          // over binarized rows
    std::map<std::string, OutcomeSplit> by_participant_type; // over binarized rows
};

struct ModelBlock {
    std::string name;       // e.g. "DM-All1" or "DM-All1 (omit P01)"
    std::string partition;  // dm_all / dm_norm / all / dm
    std::vector<std::string> random_factors;
    bool converged = true;
    std::vector<glmm::OrRow> or_table;
    double sigma2_residual = 0.0;
    std::map<std::string, double> tau;  // factor -> variance
    double icc = 0.0;
    std::map<std::string, int> n_groups;
    int observations = 0;
    double r2_marginal = 0.0;
    double r2_conditional = 0.0;
    double loglik = 0.0;
};

struct LrtBlock {
    std::string partition;
    std::string reduced;
    std::string full;
    double chi2 = 0.0;
    int df = 0;
    double p = 1.0;
    std::string winner;
};

struct InfluenceGroupRow {
    std::string group;
    double cooks_d = 0.0;
    bool flagged = false;
    bool refit_failed = false;
};

struct InfluenceBlock {
    std::string model;
    std::string grouping;
    std::vector<InfluenceGroupRow> groups;
};

struct ModelsBlock {
    bool ran = false;
    std::map<std::string, std::size_t> partition_sizes;
    std::vector<ModelBlock> models;
    std::vector<LrtBlock> lrt;
};

struct InfluenceStage {
    bool ran = false;
    std::vector<InfluenceBlock> blocks;
    std::vector<ModelBlock> refits;  // flagged-group-omitted fits, reported side by side
};

struct RunReport {
    std::string schema_version = "1";
    IngestBlock ingest;
    IntersectionsBlock intersections;
    CgmBlock cgm;
    FusionBlock fusion;
    EncountersBlock encounters;
    ModelsBlock models;
    InfluenceStage influence;
    std::vector<std::string> warnings;
    // Wall-clock per stage; kept out of both emitted formats so reruns on
    // identical inputs produce identical files.
    std::map<std::string, double> timings_ms;
};

enum class Format { structured, human };

// Renders the report to a string; `structured` is schema-versioned JSON,
// `human` the tabular layout with one block per model.
std::string render_report(const RunReport& report, Format format);

void emit_report(const RunReport& report, Format format, const std::string& path);

}  // namespace stopsafe::report
