#include "stopsafe/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace stopsafe::report {

namespace {

using nlohmann::json;

std::string fmt(double v, int prec) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

std::string fmt_p(double p) {
    if (p < 0.001) return "<0.001";
    return fmt(p, 3);
}

json or_row_json(const glmm::OrRow& r) {
    return json{{"name", r.name},
                {"or", r.odds_ratio},
                {"ci_low", r.ci_low},
                {"ci_high", r.ci_high},
                {"p", r.p}};
}

json model_json(const ModelBlock& m) {
    json j;
    j["name"] = m.name;
    j["partition"] = m.partition;
    j["random_factors"] = m.random_factors;
    j["converged"] = m.converged;
    json rows = json::array();
    for (const auto& r : m.or_table) rows.push_back(or_row_json(r));
    j["predictors"] = rows;
    j["sigma2"] = m.sigma2_residual;
    j["tau00"] = m.tau;
    j["icc"] = m.icc;
    j["n_groups"] = m.n_groups;
    j["observations"] = m.observations;
    j["r2_marginal"] = m.r2_marginal;
    j["r2_conditional"] = m.r2_conditional;
    j["loglik"] = m.loglik;
    return j;
}

std::string render_structured(const RunReport& r) {
    json j;
    j["schema_version"] = r.schema_version;

    j["ingest"] = {{"telemetry_rows", r.ingest.telemetry_rows},
                   {"drives", r.ingest.drives},
                   {"participants", r.ingest.participants},
                   {"duplicate_telemetry_rows", r.ingest.duplicate_telemetry_rows},
                   {"cgm_readings", r.ingest.cgm_readings},
                   {"duplicate_cgm_rows", r.ingest.duplicate_cgm_rows},
                   {"detections", r.ingest.detections},
                   {"stop_sign_detections", r.ingest.stop_sign_detections},
                   {"db_intersections", r.ingest.db_intersections},
                   {"annotations", r.ingest.annotations},
                   {"roster_entries", r.ingest.roster_entries}};

    if (r.intersections.ran) {
        j["intersections"] = {{"clusters", r.intersections.clusters},
                              {"noise_detections", r.intersections.noise_detections},
                              {"total", r.intersections.total},
                              {"from_database", r.intersections.from_database},
                              {"from_clustering", r.intersections.from_clustering}};
    }
    if (r.cgm.ran) {
        json rows = json::array();
        for (const auto& p : r.cgm.participants) {
            rows.push_back({{"participant_id", p.participant_id},
                            {"raw", p.raw},
                            {"retained", p.retained},
                            {"removed", p.removed},
                            {"removed_fraction", p.removed_fraction},
                            {"expected_slots", p.expected_slots},
                            {"observed_slots", p.observed_slots},
                            {"missing_fraction", p.missing_fraction},
                            {"meets_fda", p.meets_fda}});
        }
        j["cgm"] = {{"participants", rows}, {"total_removed", r.cgm.total_removed}};
    }
    if (r.fusion.ran) {
        j["fusion"] = {{"n_drives", r.fusion.n_drives},
                       {"n_discarded", r.fusion.n_discarded},
                       {"discard_fraction", r.fusion.discard_fraction}};
    }
    if (r.encounters.ran) {
        json by_episode, by_type;
        for (const auto& [k, v] : r.encounters.by_episode)
            by_episode[k] = {{"safe", v.safe}, {"unsafe", v.unsafe}};
        for (const auto& [k, v] : r.encounters.by_participant_type)
            by_type[k] = {{"safe", v.safe}, {"unsafe", v.unsafe}};
        j["encounters"] = {{"detected", r.encounters.detected},
                           {"excluded_not_primary", r.encounters.excluded_not_primary},
                           {"excluded_confound", r.encounters.excluded_confound},
                           {"selected", r.encounters.selected},
                           {"dropped_missing_episode", r.encounters.dropped_missing_episode},
                           {"rows", r.encounters.rows},
                           {"unused_annotations", r.encounters.unused_annotations},
                           {"by_behavior", r.encounters.by_behavior},
                           {"by_episode", by_episode},
                           {"by_participant_type", by_type}};
    }
    if (r.models.ran) {
        json models = json::array();
        for (const auto& m : r.models.models) models.push_back(model_json(m));
        json lrt = json::array();
        for (const auto& t : r.models.lrt) {
            lrt.push_back({{"partition", t.partition},
                           {"reduced", t.reduced},
                           {"full", t.full},
                           {"chi2", t.chi2},
                           {"df", t.df},
                           {"p", t.p},
                           {"winner", t.winner}});
        }
        j["models"] = {{"partition_sizes", r.models.partition_sizes},
                       {"fits", models},
                       {"lrt", lrt}};
    }
    if (r.influence.ran) {
        json blocks = json::array();
        for (const auto& b : r.influence.blocks) {
            json groups = json::array();
            for (const auto& g : b.groups) {
                json e = {{"group", g.group}, {"flagged", g.flagged}, {"refit_failed", g.refit_failed}};
                if (!g.refit_failed) e["cooks_d"] = g.cooks_d;
                groups.push_back(e);
            }
            blocks.push_back({{"model", b.model}, {"grouping", b.grouping}, {"groups", groups}});
        }
        json refits = json::array();
        for (const auto& m : r.influence.refits) refits.push_back(model_json(m));
        j["influence"] = {{"blocks", blocks}, {"refits", refits}};
    }
    j["warnings"] = r.warnings;
    return j.dump(2) + "\n";
}

void render_model_human(std::ostringstream& out, const ModelBlock& m) {
    out << "-- " << m.name << " (partition " << m.partition << "; random:";
    for (const auto& f : m.random_factors) out << " " << f;
    out << ")" << (m.converged ? "" : " [NOT CONVERGED]") << " --\n";
    out << "  predictor                       OR      95% CI              p\n";
    for (const auto& r : m.or_table) {
        char line[160];
        std::snprintf(line, sizeof(line), "  %-30s %6.2f  (%0.2f, %0.2f)  %s", r.name.c_str(),
                      r.odds_ratio, r.ci_low, r.ci_high, fmt_p(r.p).c_str());
        out << line << "\n";
    }
    out << "  Random Effects\n";
    out << "    sigma^2          " << fmt(m.sigma2_residual, 2) << "\n";
    for (const auto& [f, t] : m.tau) out << "    tau00 " << f << "  " << fmt(t, 2) << "\n";
    out << "    ICC              " << fmt(m.icc, 2) << "\n";
    for (const auto& [f, n] : m.n_groups) out << "    N " << f << "  " << n << "\n";
    out << "    Observations     " << m.observations << "\n";
    out << "    Marginal R2 / Conditional R2  " << fmt(m.r2_marginal, 3) << " / "
        << fmt(m.r2_conditional, 3) << "\n";
    out << "\n";
}

std::string render_human(const RunReport& r) {
    std::ostringstream out;
    out << "== stop-safety pipeline report (schema " << r.schema_version << ") ==\n\n";

    out << "[ingest]\n";
    out << "  telemetry_rows            " << r.ingest.telemetry_rows << "\n";
    out << "  drives                    " << r.ingest.drives << "\n";
    out << "  participants              " << r.ingest.participants << "\n";
    out << "  duplicate_telemetry_rows  " << r.ingest.duplicate_telemetry_rows << "\n";
    out << "  cgm_readings              " << r.ingest.cgm_readings << "\n";
    out << "  detections                " << r.ingest.detections << " ("
        << r.ingest.stop_sign_detections << " stop_sign)\n";
    out << "  db_intersections          " << r.ingest.db_intersections << "\n";
    out << "  annotations               " << r.ingest.annotations << "\n";
    out << "  roster_entries            " << r.ingest.roster_entries << "\n\n";

    if (r.intersections.ran) {
        out << "[intersections]\n";
        out << "  clusters          " << r.intersections.clusters << "\n";
        out << "  noise_detections  " << r.intersections.noise_detections << "\n";
        out << "  total             " << r.intersections.total << " (" << r.intersections.from_database
            << " database, " << r.intersections.from_clustering << " clustered)\n\n";
    }
    if (r.cgm.ran) {
        out << "[cgm]\n";
        out << "  participant  raw  retained  removed  removed_frac  missing_frac  meets_fda\n";
        for (const auto& p : r.cgm.participants) {
            char line[200];
            std::snprintf(line, sizeof(line), "  %-11s %4zu  %8zu  %7zu  %12s  %12s  %s",
                          p.participant_id.c_str(), p.raw, p.retained, p.removed,
                          fmt(p.removed_fraction, 4).c_str(), fmt(p.missing_fraction, 4).c_str(),
                          p.meets_fda ? "yes" : "no");
            out << line << "\n";
        }
        out << "  total_removed  " << r.cgm.total_removed << "\n\n";
    }
    if (r.fusion.ran) {
        out << "[fusion]\n";
        out << "  n_drives          " << r.fusion.n_drives << "\n";
        out << "  n_discarded       " << r.fusion.n_discarded << "\n";
        out << "  discard_fraction  " << fmt(r.fusion.discard_fraction, 4) << "\n\n";
    }
    if (r.encounters.ran) {
        out << "[encounters]\n";
        out << "  detected                 " << r.encounters.detected << "\n";
        out << "  excluded_not_primary     " << r.encounters.excluded_not_primary << "\n";
        out << "  excluded_confound        " << r.encounters.excluded_confound << "\n";
        out << "  selected                 " << r.encounters.selected << "\n";
        out << "  dropped_missing_episode  " << r.encounters.dropped_missing_episode << "\n";
        out << "  rows                     " << r.encounters.rows << "\n";
        out << "  behavior:";
        for (const auto& [k, v] : r.encounters.by_behavior) out << " " << k << "=" << v;
        out << "\n  episode (safe/unsafe):";
        for (const auto& [k, v] : r.encounters.by_episode)
            out << " " << k << "=" << v.safe << "/" << v.unsafe;
        out << "\n  participant_type (safe/unsafe):";
        for (const auto& [k, v] : r.encounters.by_participant_type)
            out << " " << k << "=" << v.safe << "/" << v.unsafe;
        out << "\n\n";
    }
    if (r.models.ran) {
        out << "[models]\n";
        out << "  partition sizes:";
        for (const auto& [k, v] : r.models.partition_sizes) out << " " << k << "=" << v;
        out << "\n\n";
        for (const auto& m : r.models.models) render_model_human(out, m);
        if (!r.models.lrt.empty()) {
            out << "  ANOVA random-effects comparison\n";
            for (const auto& t : r.models.lrt) {
                char line[200];
                std::snprintf(line, sizeof(line),
                              "    %-8s %s vs %s: chi2(%d) = %.2f, p = %s -> %s",
                              t.partition.c_str(), t.reduced.c_str(), t.full.c_str(), t.df, t.chi2,
                              fmt_p(t.p).c_str(), t.winner.c_str());
                out << line << "\n";
            }
            out << "\n";
        }
    }
    if (r.influence.ran) {
        out << "[influence]\n";
        for (const auto& b : r.influence.blocks) {
            out << "  " << b.model << " by " << b.grouping << ":\n";
            for (const auto& g : b.groups) {
                if (g.refit_failed) {
                    out << "    " << g.group << "  D = (refit failed)\n";
                } else {
                    out << "    " << g.group << "  D = " << fmt(g.cooks_d, 4)
                        << (g.flagged ? "  FLAGGED" : "") << "\n";
                }
            }
        }
        out << "\n";
        for (const auto& m : r.influence.refits) render_model_human(out, m);
    }
    if (!r.warnings.empty()) {
        out << "[warnings]\n";
        for (const auto& w : r.warnings) out << "  " << w << "\n";
    }
    return out.str();
}

}  // namespace

std::string render_report(const RunReport& report, Format format) {
    return format == Format::structured ? render_structured(report) : render_human(report);
}

void emit_report(const RunReport& report, Format format, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open report file for writing: " + path);
    out << render_report(report, format);
    if (!out) throw IoError("report write failed: " + path);
}

}  // namespace stopsafe::report
