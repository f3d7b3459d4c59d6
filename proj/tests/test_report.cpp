#include <doctest.h>

#include <json.hpp>

#include "stopsafe/report.hpp"

using namespace stopsafe;
using nlohmann::json;

namespace {

report::RunReport sample_report() {
    report::RunReport r;
    r.ingest.telemetry_rows = 100;
    r.ingest.drives = 4;

    r.models.ran = true;
    r.models.partition_sizes = {{"dm_all", 60}, {"dm_norm", 40}, {"all", 55}, {"dm", 30}};
    report::ModelBlock m;
    m.name = "DM-All1";
    m.partition = "dm_all";
    m.random_factors = {"participant", "intersection"};
    m.or_table = {{"(intercept)", 6.70, 2.31, 19.45, 0.0004},
                  {"participant_type:t1dm", 1.34, 0.35, 5.18, 0.673}};
    m.sigma2_residual = 3.2898681336964528;
    m.tau = {{"participant", 3.04}, {"intersection", 0.94}};
    m.icc = 0.5475;
    m.n_groups = {{"participant", 31}, {"intersection", 502}};
    m.observations = 1660;
    m.r2_marginal = 0.003;
    m.r2_conditional = 0.548;
    m.loglik = -700.25;
    r.models.models.push_back(m);
    r.models.lrt.push_back({"dm_all", "DM-All0", "DM-All1", 27.09, 1, 1.9e-7, "DM-All1"});
    return r;
}

}  // namespace

TEST_CASE("empty report renders valid documents in both formats") {
    report::RunReport r;
    const std::string structured = report::render_report(r, report::Format::structured);
    const json j = json::parse(structured);
    CHECK(j.at("schema_version") == "1");
    CHECK_FALSE(j.contains("models"));
    const std::string human = report::render_report(r, report::Format::human);
    CHECK(human.find("[ingest]") != std::string::npos);
}

TEST_CASE("human rendering shows the random-effects block with sigma^2 = 3.29") {
    const auto r = sample_report();
    const std::string human = report::render_report(r, report::Format::human);
    CHECK(human.find("Random Effects") != std::string::npos);
    CHECK(human.find("sigma^2          3.29") != std::string::npos);
    CHECK(human.find("6.70") != std::string::npos);
    CHECK(human.find("(2.31, 19.45)") != std::string::npos);
    CHECK(human.find("<0.001") != std::string::npos);
}

TEST_CASE("structured and human outputs agree on the numeric fields") {
    const auto r = sample_report();
    const json j = json::parse(report::render_report(r, report::Format::structured));
    const std::string human = report::render_report(r, report::Format::human);

    const auto& fit = j.at("models").at("fits").at(0);
    char buf[128];
    for (const auto& pred : fit.at("predictors")) {
        std::snprintf(buf, sizeof(buf), "%6.2f  (%0.2f, %0.2f)", pred.at("or").get<double>(),
                      pred.at("ci_low").get<double>(), pred.at("ci_high").get<double>());
        CHECK(human.find(buf) != std::string::npos);
    }
    std::snprintf(buf, sizeof(buf), "ICC              %.2f", fit.at("icc").get<double>());
    CHECK(human.find(buf) != std::string::npos);
    std::snprintf(buf, sizeof(buf), "Observations     %d", fit.at("observations").get<int>());
    CHECK(human.find(buf) != std::string::npos);
    std::snprintf(buf, sizeof(buf), "Marginal R2 / Conditional R2  %.3f / %.3f",
                  fit.at("r2_marginal").get<double>(), fit.at("r2_conditional").get<double>());
    CHECK(human.find(buf) != std::string::npos);
}

TEST_CASE("structured output is deterministic and omits wall-clock timings") {
    auto r = sample_report();
    r.timings_ms = {{"models", 123.4}};
    const std::string a = report::render_report(r, report::Format::structured);
    r.timings_ms = {{"models", 999.9}};
    const std::string b = report::render_report(r, report::Format::structured);
    CHECK(a == b);
    CHECK(a.find("123.4") == std::string::npos);
}
