#include "stopsafe/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>

#include "stopsafe/ingest.hpp"
#include "stopsafe/intersections.hpp"

namespace stopsafe::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& stage_order() {
    static const std::vector<std::string> order = {"intersections", "cgm",    "fusion",
                                                   "encounters",    "models", "influence"};
    return order;
}

namespace {

int stage_rank(const std::string& name) {
    const auto& order = stage_order();
    const auto it = std::find(order.begin(), order.end(), name);
    if (it == order.end()) throw ConfigError("unknown stage '" + name + "'");
    return static_cast<int>(it - order.begin());
}

double get_param(const json& j, const char* key, double fallback) {
    return j.contains(key) ? j.at(key).get<double>() : fallback;
}

std::string partition_display(glmm::Partition p) {
    switch (p) {
        case glmm::Partition::dm_all: return "DM-All";
        case glmm::Partition::dm_norm: return "DM-Norm";
        case glmm::Partition::all: return "All";
        default: return "DM";
    }
}

class Timer {
public:
    explicit Timer(report::RunReport& rep, std::string stage)
        : rep_(rep), stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {}
    ~Timer() {
        const auto end = std::chrono::steady_clock::now();
        rep_.timings_ms[stage_] =
            std::chrono::duration_cast<std::chrono::microseconds>(end - start_).count() / 1000.0;
    }

private:
    report::RunReport& rep_;
    std::string stage_;
    std::chrono::steady_clock::time_point start_;
};

report::ModelBlock make_model_block(const std::string& name, glmm::Partition partition,
                                    const glmm::MelrFit& fit) {
    report::ModelBlock b;
    b.name = name;
    b.partition = glmm::to_string(partition);
    b.random_factors = fit.random_factor_names;
    b.converged = fit.converged;
    const glmm::FitSummary s = glmm::summarize_fit(fit);
    b.or_table = s.or_table;
    b.sigma2_residual = fit.sigma2_residual;
    for (std::size_t f = 0; f < fit.random_factor_names.size(); ++f) {
        b.tau[fit.random_factor_names[f]] = fit.tau[f];
        b.n_groups[fit.random_factor_names[f]] = fit.n_groups[f];
    }
    b.icc = s.icc;
    b.observations = fit.n_obs;
    b.r2_marginal = s.r2_marginal;
    b.r2_conditional = s.r2_conditional;
    b.loglik = fit.loglik;
    return b;
}

}  // namespace

PipelineConfig PipelineConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }

    PipelineConfig cfg;
    const fs::path base = fs::path(path).parent_path();
    const auto resolve = [&](const std::string& p) {
        if (p.empty()) return p;
        const fs::path fp(p);
        return fp.is_absolute() ? p : (base / fp).string();
    };

    if (!j.contains("inputs")) throw ConfigError("config missing 'inputs' section");
    const json& in_j = j.at("inputs");
    for (const auto& [key, value] : in_j.items()) {
        const std::string v = value.get<std::string>();
        if (key == "telemetry") cfg.telemetry_path = resolve(v);
        else if (key == "cgm") cfg.cgm_path = resolve(v);
        else if (key == "detections") cfg.detections_path = resolve(v);
        else if (key == "intersections") cfg.intersections_path = resolve(v);
        else if (key == "annotations") cfg.annotations_path = resolve(v);
        else if (key == "roster") cfg.roster_path = resolve(v);
        else throw ConfigError("unknown input key '" + key + "'");
    }

    if (j.contains("params")) {
        const json& p = j.at("params");
        static const std::set<std::string> known = {
            "eps",          "min_pts",       "merge_radius",   "staleness",
            "discard_threshold", "capture_radius", "refractory_s", "v_stop_eps",
            "min_stop_s",   "no_stop_ratio", "glmm_tol",       "glmm_max_iter"};
        for (const auto& [key, value] : p.items()) {
            (void)value;
            if (!known.count(key)) throw ConfigError("unknown parameter '" + key + "'");
        }
        cfg.params.eps = get_param(p, "eps", cfg.params.eps);
        cfg.params.min_pts = static_cast<int>(get_param(p, "min_pts", cfg.params.min_pts));
        cfg.params.merge_radius = get_param(p, "merge_radius", cfg.params.merge_radius);
        cfg.params.staleness = get_param(p, "staleness", cfg.params.staleness);
        cfg.params.discard_threshold = get_param(p, "discard_threshold", cfg.params.discard_threshold);
        cfg.params.capture_radius = get_param(p, "capture_radius", cfg.params.capture_radius);
        cfg.params.refractory_s = get_param(p, "refractory_s", cfg.params.refractory_s);
        cfg.params.v_stop_eps = get_param(p, "v_stop_eps", cfg.params.v_stop_eps);
        cfg.params.min_stop_s = get_param(p, "min_stop_s", cfg.params.min_stop_s);
        cfg.params.no_stop_ratio = get_param(p, "no_stop_ratio", cfg.params.no_stop_ratio);
        cfg.params.glmm_tol = get_param(p, "glmm_tol", cfg.params.glmm_tol);
        cfg.params.glmm_max_iter = static_cast<int>(get_param(p, "glmm_max_iter", cfg.params.glmm_max_iter));
    }

    if (j.contains("out_dir")) cfg.out_dir = resolve(j.at("out_dir").get<std::string>());
    if (j.contains("stages")) {
        for (const auto& s : j.at("stages")) cfg.stages.push_back(s.get<std::string>());
    }
    return cfg;
}

void PipelineConfig::validate() const {
    const auto need = [](const std::string& p, const char* what) {
        if (p.empty()) throw ConfigError(std::string("config missing input path: ") + what);
        if (!fs::exists(p)) throw ConfigError(std::string(what) + " path does not exist: " + p);
    };
    need(telemetry_path, "telemetry");
    need(cgm_path, "cgm");
    need(detections_path, "detections");
    need(intersections_path, "intersections");
    need(roster_path, "roster");
    if (!annotations_path.empty() && !fs::exists(annotations_path)) {
        throw ConfigError("annotations path does not exist: " + annotations_path);
    }
    if (out_dir.empty()) throw ConfigError("config missing out_dir");

    const PipelineParams& p = params;
    if (!(p.eps > 0)) throw ConfigError("eps must be > 0");
    if (p.min_pts < 1) throw ConfigError("min_pts must be >= 1");
    if (!(p.merge_radius > 0)) throw ConfigError("merge_radius must be > 0");
    if (!(p.staleness > 0)) throw ConfigError("staleness must be > 0");
    if (p.discard_threshold < 0 || p.discard_threshold > 1)
        throw ConfigError("discard_threshold must be in [0,1]");
    if (!(p.capture_radius > 0)) throw ConfigError("capture_radius must be > 0");
    if (p.refractory_s < 0) throw ConfigError("refractory_s must be >= 0");
    if (!(p.v_stop_eps > 0)) throw ConfigError("v_stop_eps must be > 0");
    if (!(p.min_stop_s > 0)) throw ConfigError("min_stop_s must be > 0");
    if (p.no_stop_ratio <= 0 || p.no_stop_ratio > 1)
        throw ConfigError("no_stop_ratio must be in (0,1]");
    if (!(p.glmm_tol > 0)) throw ConfigError("glmm_tol must be > 0");
    if (p.glmm_max_iter < 10) throw ConfigError("glmm_max_iter must be >= 10");

    int prev = -1;
    for (const auto& s : stages) {
        const int rank = stage_rank(s);
        if (rank <= prev) throw ConfigError("stages out of dependency order at '" + s + "'");
        prev = rank;
    }
}

report::RunReport run_pipeline(const PipelineConfig& config) {
    config.validate();
    fs::create_directories(config.out_dir);

    std::set<std::string> requested(config.stages.begin(), config.stages.end());
    if (requested.empty()) {
        requested.insert(stage_order().begin(), stage_order().end());
    }
    // Compute prerequisites in memory; only requested stages emit output.
    std::set<std::string> active = requested;
    if (active.count("influence")) active.insert("models");
    if (active.count("models")) active.insert("encounters");
    if (active.count("encounters")) {
        active.insert("fusion");
        active.insert("intersections");
    }
    if (active.count("fusion")) active.insert("cgm");

    report::RunReport rep;

    // --- ingest (always) ---
    ingest::TelemetryLoad telemetry;
    ingest::CgmLoad cgm_load;
    ingest::AuxLoad aux;
    {
        Timer t(rep, "ingest");
        telemetry = ingest::load_telemetry(config.telemetry_path);
        cgm_load = ingest::load_cgm(config.cgm_path);
        aux = ingest::load_aux(config.detections_path, config.intersections_path,
                               config.annotations_path, config.roster_path);
        ingest::cross_validate(telemetry, aux);
    }
    rep.ingest.drives = telemetry.drives.size();
    std::set<std::string> participants;
    for (const auto& d : telemetry.drives) {
        rep.ingest.telemetry_rows += d.samples.size();
        participants.insert(d.participant_id);
    }
    rep.ingest.participants = participants.size();
    rep.ingest.duplicate_telemetry_rows = telemetry.duplicate_rows_dropped;
    rep.ingest.cgm_readings = cgm_load.readings.size();
    rep.ingest.duplicate_cgm_rows = cgm_load.duplicate_rows_dropped;
    rep.ingest.detections = aux.detections.size();
    rep.ingest.stop_sign_detections = aux.stop_sign_count;
    rep.ingest.db_intersections = aux.tables.intersection_db.size();
    rep.ingest.annotations = aux.tables.encounter_annotations.size();
    rep.ingest.roster_entries = aux.tables.participant_roster.size();

    // --- intersections ---
    intersections::BuildResult built;
    if (active.count("intersections")) {
        Timer t(rep, "intersections");
        built = intersections::build_intersections(aux.detections, aux.tables.intersection_db,
                                                   config.params.eps, config.params.min_pts,
                                                   config.params.merge_radius);
        if (requested.count("intersections")) {
            rep.intersections.ran = true;
            rep.intersections.clusters = built.cluster_count;
            rep.intersections.noise_detections = built.noise_detections.size();
            rep.intersections.total = built.intersections.size();
            for (const auto& x : built.intersections) {
                if (x.source == intersections::Intersection::Source::database)
                    ++rep.intersections.from_database;
                else
                    ++rep.intersections.from_clustering;
            }
            intersections::write_intersections_csv((fs::path(config.out_dir) / "intersections.csv").string(),
                                                   built.intersections);
        }
    }

    // --- cgm ---
    std::map<std::string, cgm::GlucoseSeries> cleaned;
    if (active.count("cgm")) {
        Timer t(rep, "cgm");
        std::map<std::string, std::vector<GlucoseReading>> per_participant;
        for (const auto& r : cgm_load.readings) per_participant[r.participant_id].push_back(r);
        std::vector<cgm::GlucoseSeries> all_series;
        for (const auto& [pid, raw] : per_participant) {
            cgm::GlucoseSeries series = cgm::clean_series(raw);
            series.participant_id = pid;

            report::CgmParticipantRow row;
            row.participant_id = pid;
            row.raw = raw.size();
            row.retained = series.readings.size();
            row.removed = series.removed.size();
            row.removed_fraction = raw.empty() ? 0.0 : static_cast<double>(row.removed) / raw.size();
            const cgm::ComplianceReport comp =
                cgm::compliance(raw, raw.front().timestamp, raw.back().timestamp + 300);
            row.expected_slots = comp.expected_slots;
            row.observed_slots = comp.observed_slots;
            row.missing_fraction = comp.missing_fraction;
            row.meets_fda = comp.meets_fda;
            if (!comp.meets_fda) {
                rep.warnings.push_back("participant " + pid +
                                       " exceeds the 25% missing-CGM-data bound");
            }
            rep.cgm.participants.push_back(row);
            rep.cgm.total_removed += row.removed;
            all_series.push_back(series);
            cleaned.emplace(pid, std::move(series));
        }
        if (requested.count("cgm")) {
            rep.cgm.ran = true;
            cgm::write_removals_csv((fs::path(config.out_dir) / "cgm_removals.csv").string(), all_series);
        } else {
            rep.cgm.participants.clear();
            rep.cgm.total_removed = 0;
        }
    }

    // --- fusion ---
    std::vector<fusion::FusedDrive> fused;
    if (active.count("fusion")) {
        Timer t(rep, "fusion");
        for (const auto& drive : telemetry.drives) {
            const ParticipantType ptype = aux.tables.participant_roster.at(drive.participant_id);
            static const cgm::GlucoseSeries empty_series;
            const auto it = cleaned.find(drive.participant_id);
            const cgm::GlucoseSeries& series = it == cleaned.end() ? empty_series : it->second;
            fused.push_back(fusion::fuse_drive(drive, series, ptype, config.params.staleness,
                                               config.params.discard_threshold));
        }
        const fusion::FusionSummary summary = fusion::fusion_summary(fused);
        if (requested.count("fusion")) {
            rep.fusion.ran = true;
            rep.fusion.n_drives = summary.n_drives;
            rep.fusion.n_discarded = summary.n_discarded;
            rep.fusion.discard_fraction = summary.discard_fraction;
        }
    }

    // --- encounters ---
    std::vector<encounters::BehaviorRow> rows;
    if (active.count("encounters")) {
        Timer t(rep, "encounters");
        encounters::DetectParams dp;
        dp.capture_radius = config.params.capture_radius;
        dp.refractory_s = config.params.refractory_s;
        dp.classify.v_stop_eps = config.params.v_stop_eps;
        dp.classify.min_stop_s = config.params.min_stop_s;
        dp.classify.no_stop_ratio = config.params.no_stop_ratio;

        std::vector<encounters::Encounter> all;
        std::map<std::string, int> per_drive_counts;
        for (const auto& d : fused) {
            if (d.discarded) continue;
            std::vector<encounters::Encounter> e =
                encounters::detect_encounters(d, built.intersections, dp);
            encounters::annotate(e, aux.tables.encounter_annotations);
            per_drive_counts[d.drive_id] = static_cast<int>(e.size());
            all.insert(all.end(), e.begin(), e.end());
        }
        for (const auto& [key, a] : aux.tables.encounter_annotations) {
            const auto it = per_drive_counts.find(key.first);
            if (it == per_drive_counts.end() || key.second > it->second) {
                ++rep.encounters.unused_annotations;
                rep.warnings.push_back("annotation (" + key.first + ", " +
                                       std::to_string(key.second) + ") matched no encounter");
            }
        }

        const std::vector<encounters::Encounter> selected = encounters::apply_selection(all);
        for (const auto& e : all) {
            if (!e.flags.is_primary_driver) ++rep.encounters.excluded_not_primary;
            else if (e.flags.lead_vehicle == ConfoundStatus::present_with_effect ||
                     e.flags.crossing_vehicle == ConfoundStatus::present_with_effect ||
                     e.flags.crossing_pedestrian == ConfoundStatus::present_with_effect)
                ++rep.encounters.excluded_confound;
        }
        const encounters::BinarizeResult bin = encounters::binarize(selected);
        rows = bin.rows;

        rep.encounters.detected = all.size();
        rep.encounters.selected = selected.size();
        rep.encounters.dropped_missing_episode = bin.dropped_missing_episode;
        rep.encounters.rows = rows.size();
        for (const auto& e : selected) ++rep.encounters.by_behavior[encounters::to_string(e.behavior)];
        for (const auto& r : rows) {
            auto& ep = rep.encounters.by_episode[cgm::to_string(r.episode)];
            auto& ty = rep.encounters.by_participant_type[stopsafe::to_string(r.participant_type)];
            if (r.unsafe) {
                ++ep.unsafe;
                ++ty.unsafe;
            } else {
                ++ep.safe;
                ++ty.safe;
            }
        }
        if (requested.count("encounters")) {
            rep.encounters.ran = true;
            encounters::write_encounters_csv((fs::path(config.out_dir) / "encounters.csv").string(), all);
        } else {
            rep.encounters = report::EncountersBlock{};
        }
    }

    // --- models ---
    struct PartitionFits {
        glmm::Partition partition;
        std::string display;
        std::vector<encounters::BehaviorRow> rows;
        glmm::ModelSpec winner_spec;
        glmm::MelrFit winner_fit;
        std::string winner_name;
    };
    std::vector<PartitionFits> winners;
    glmm::FitControls controls{config.params.glmm_tol, config.params.glmm_max_iter};

    if (active.count("models")) {
        Timer t(rep, "models");
        const glmm::Partitions parts = glmm::build_partitions(rows);
        const std::vector<std::pair<glmm::Partition, const std::vector<encounters::BehaviorRow>*>>
            partition_rows = {{glmm::Partition::dm_all, &parts.dm_all},
                              {glmm::Partition::dm_norm, &parts.dm_norm},
                              {glmm::Partition::all, &parts.all},
                              {glmm::Partition::dm, &parts.dm}};

        for (const auto& [partition, prows] : partition_rows) {
            const std::string display = partition_display(partition);
            rep.models.partition_sizes[glmm::to_string(partition)] = prows->size();

            const glmm::ModelSpec spec0 = glmm::spec_for_partition(partition, false);
            const glmm::ModelSpec spec1 = glmm::spec_for_partition(partition, true);
            const glmm::MelrFit fit0 = glmm::fit_melr(*prows, spec0, controls);
            const glmm::MelrFit fit1 = glmm::fit_melr(*prows, spec1, controls);
            if (!fit0.converged)
                rep.warnings.push_back(display + "0 did not converge");
            if (!fit1.converged)
                rep.warnings.push_back(display + "1 did not converge");

            rep.models.models.push_back(make_model_block(display + "0", partition, fit0));
            rep.models.models.push_back(make_model_block(display + "1", partition, fit1));

            const glmm::LrtResult lrt = glmm::lrt_compare(fit0, fit1);
            if (lrt.negative_chi2_warning) {
                rep.warnings.push_back("LRT for " + display + " saw a negative raw chi2");
            }
            report::LrtBlock lb;
            lb.partition = glmm::to_string(partition);
            lb.reduced = display + "0";
            lb.full = display + "1";
            lb.chi2 = lrt.chi2;
            lb.df = lrt.df;
            lb.p = lrt.p;
            const bool full_wins = lrt.p < 0.05;
            lb.winner = full_wins ? lb.full : lb.reduced;
            rep.models.lrt.push_back(lb);

            PartitionFits pf;
            pf.partition = partition;
            pf.display = display;
            pf.rows = *prows;
            pf.winner_spec = full_wins ? spec1 : spec0;
            pf.winner_fit = full_wins ? fit1 : fit0;
            pf.winner_name = lb.winner;
            winners.push_back(std::move(pf));
        }
        if (requested.count("models")) rep.models.ran = true;
        else rep.models = report::ModelsBlock{};
    }

    // --- influence ---
    if (active.count("influence")) {
        Timer t(rep, "influence");
        for (const auto& pf : winners) {
            for (const auto& grouping : pf.winner_spec.random_factors) {
                const glmm::InfluenceReport ir =
                    glmm::cooks_groups(pf.rows, pf.winner_spec, pf.winner_fit, grouping, controls);
                report::InfluenceBlock block;
                block.model = pf.winner_name;
                block.grouping = grouping;
                for (const auto& e : ir.entries) {
                    block.groups.push_back({e.group, e.cooks_d, e.flagged, e.refit_failed});
                    if (e.flagged) {
                        // Side-by-side refit with the flagged group removed.
                        std::vector<encounters::BehaviorRow> subset;
                        for (const auto& r : pf.rows) {
                            const std::string& key =
                                grouping == "participant" ? r.participant_id : r.intersection_id;
                            if (key != e.group) subset.push_back(r);
                        }
                        try {
                            const glmm::MelrFit refit = glmm::fit_melr(subset, pf.winner_spec, controls);
                            rep.influence.refits.push_back(make_model_block(
                                pf.winner_name + " (omit " + e.group + ")", pf.partition, refit));
                        } catch (const Error& err) {
                            rep.warnings.push_back("refit of " + pf.winner_name + " without " +
                                                   e.group + " failed: " + err.what());
                        }
                    }
                }
                rep.influence.blocks.push_back(std::move(block));
            }
        }
        rep.influence.ran = requested.count("influence") > 0;
        if (!requested.count("influence")) rep.influence = report::InfluenceStage{};
    }

    {
        Timer t(rep, "emit");
        report::emit_report(rep, report::Format::structured,
                            (fs::path(config.out_dir) / "report.json").string());
        report::emit_report(rep, report::Format::human,
                            (fs::path(config.out_dir) / "report.txt").string());
    }
    return rep;
}

}  // namespace pipeline
