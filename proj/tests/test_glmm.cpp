#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "stopsafe/glmm.hpp"
#include "stopsafe/rng.hpp"
#include "stopsafe/stats.hpp"

using namespace stopsafe;
using encounters::BehaviorRow;
using glmm::ModelSpec;

namespace {

BehaviorRow row(const char* pid, const char* xid, ParticipantType pt, cgm::EpisodeLabel ep,
                int unsafe) {
    BehaviorRow r;
    r.participant_id = pid;
    r.intersection_id = xid;
    r.participant_type = pt;
    r.episode = ep;
    r.unsafe = unsafe;
    return r;
}

}  // namespace

TEST_CASE("ICC identities from reported variance components") {
    glmm::MelrFit fit;
    fit.beta = Eigen::VectorXd::Zero(1);
    fit.se = Eigen::VectorXd::Ones(1);
    fit.coef_names = {"(intercept)"};
    fit.sigma2_residual = stats::kLogisticResidualVariance;
    fit.converged = true;

    fit.tau = {2.60};
    CHECK(glmm::summarize_fit(fit).icc == doctest::Approx(0.44).epsilon(0.012));
    fit.tau = {0.94, 3.04};
    CHECK(glmm::summarize_fit(fit).icc == doctest::Approx(0.55).epsilon(0.01));
    fit.tau = {0.76, 2.43};
    CHECK(glmm::summarize_fit(fit).icc == doctest::Approx(0.49).epsilon(0.01));
}

TEST_CASE("Wald construction reproduces the published OR/CI/p triple") {
    // se back-solved from the interval: ln(4.47/1.26) / (2 * 1.95996) = 0.32304.
    const double se_backsolved = std::log(4.47 / 1.26) / (2.0 * stats::kZ975);
    CHECK(se_backsolved == doctest::Approx(0.3231).epsilon(2e-3));

    glmm::MelrFit fit;
    fit.beta = Eigen::VectorXd::Constant(1, std::log(2.37));
    fit.se = Eigen::VectorXd::Constant(1, 0.3231);
    fit.coef_names = {"episode:severe_hyper"};
    fit.sigma2_residual = stats::kLogisticResidualVariance;
    fit.tau = {1.0};
    fit.converged = true;

    const auto s = glmm::summarize_fit(fit);
    CHECK(s.or_table[0].odds_ratio == doctest::Approx(2.37).epsilon(1e-6));
    CHECK(std::abs(s.or_table[0].ci_low - 1.26) < 0.01);
    CHECK(std::abs(s.or_table[0].ci_high - 4.47) < 0.01);
    CHECK(std::abs(s.or_table[0].p - 0.008) < 0.001);
}

TEST_CASE("summary identities") {
    glmm::MelrFit fit;
    fit.beta = Eigen::VectorXd::Zero(1);
    fit.se = Eigen::VectorXd::Constant(1, 0.5);
    fit.coef_names = {"(intercept)"};
    fit.sigma2_residual = stats::kLogisticResidualVariance;
    fit.tau = {1.0};
    fit.sigma2_fixed = 0.0;
    fit.converged = true;

    const auto s = glmm::summarize_fit(fit);
    CHECK(s.or_table[0].odds_ratio == doctest::Approx(1.0));
    CHECK(s.or_table[0].ci_low * s.or_table[0].ci_high == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(s.or_table[0].p == doctest::Approx(1.0));
    CHECK(s.r2_marginal == doctest::Approx(0.0));
    CHECK(s.r2_conditional > 0.0);

    // ICC strictly increases in each variance component.
    double prev = -1.0;
    for (double t : {0.0, 0.5, 1.0, 2.0, 4.0}) {
        fit.tau = {t, 0.7};
        const double icc = glmm::summarize_fit(fit).icc;
        CHECK(icc > prev);
        prev = icc;
    }

    // Marginal <= conditional with equality iff total tau is zero.
    fit.sigma2_fixed = 0.8;
    fit.tau = {0.0};
    auto s0 = glmm::summarize_fit(fit);
    CHECK(s0.r2_marginal == doctest::Approx(s0.r2_conditional));
    fit.tau = {1.5};
    auto s1 = glmm::summarize_fit(fit);
    CHECK(s1.r2_marginal < s1.r2_conditional);
    CHECK(s1.r2_marginal >= 0.0);
    CHECK(s1.r2_conditional < 1.0);
}

TEST_CASE("penalized objective gradient matches central finite differences") {
    Rng rng(99);
    auto data = oracles::simulate_single_factor(8, 12, 0.7, 1.5, rng);
    const int q = 8, p = 1;
    for (int rep = 0; rep < 10; ++rep) {
        Eigen::VectorXd beta(p), b(q);
        for (int j = 0; j < p; ++j) beta[j] = rng.uniform(-1.5, 1.5);
        for (int j = 0; j < q; ++j) b[j] = rng.uniform(-2.0, 2.0);
        const std::vector<double> tau = {rng.uniform(0.2, 3.0)};

        Eigen::VectorXd grad;
        glmm::penalized_objective(data, tau, beta, b, &grad);

        const double h = 1e-6;
        for (int j = 0; j < p + q; ++j) {
            Eigen::VectorXd bp = beta, bm = beta, up = b, um = b;
            if (j < p) {
                bp[j] += h;
                bm[j] -= h;
            } else {
                up[j - p] += h;
                um[j - p] -= h;
            }
            const double fp = glmm::penalized_objective(data, tau, bp, up);
            const double fm = glmm::penalized_objective(data, tau, bm, um);
            const double fd = (fp - fm) / (2.0 * h);
            CHECK(grad[j] == doctest::Approx(fd).epsilon(1e-5));
        }
    }
}

TEST_CASE("laplace loglik is invariant to row permutation and group relabeling") {
    Rng rng(17);
    auto data = oracles::simulate_crossed(6, 10, 200, 0.8, 1.0, 0.8, rng);
    const double base = glmm::laplace_profile_loglik(data, {1.3, 0.6});

    // Permute rows.
    glmm::Dataset shuffled = data;
    std::vector<int> perm(data.n());
    for (int i = 0; i < data.n(); ++i) perm[i] = i;
    for (int i = data.n(); i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_int(i)]);
    for (int i = 0; i < data.n(); ++i) {
        shuffled.y[i] = data.y[perm[i]];
        shuffled.X.row(i) = data.X.row(perm[i]);
        shuffled.group_index[0][i] = data.group_index[0][perm[i]];
        shuffled.group_index[1][i] = data.group_index[1][perm[i]];
    }
    const double permuted = glmm::laplace_profile_loglik(shuffled, {1.3, 0.6});
    CHECK(std::abs(permuted - base) <= 1e-10 * std::abs(base));

    // Relabel groups (rotate ids).
    glmm::Dataset relabeled = data;
    const int G = static_cast<int>(data.group_names[0].size());
    for (int i = 0; i < data.n(); ++i)
        relabeled.group_index[0][i] = (data.group_index[0][i] + 3) % G;
    const double rotated = glmm::laplace_profile_loglik(relabeled, {1.3, 0.6});
    CHECK(std::abs(rotated - base) <= 1e-10 * std::abs(base));
}

TEST_CASE("tau = 0 collapse recovers plain logistic regression") {
    Rng rng(9);
    auto data = oracles::simulate_single_factor(30, 67, 0.9, 0.0, rng);
    const auto fit = glmm::fit_melr_engine(data, {});
    const auto plain = oracles::fit_plain_logistic(data.y, data.X);
    CHECK(std::abs(fit.beta[0] - plain[0]) < 0.05);
    CHECK(fit.tau[0] < 0.01);
    CHECK(fit.converged);
}

TEST_CASE("profile objective prefers the fitted tau over zero when tau is large") {
    Rng rng(23);
    auto data = oracles::simulate_single_factor(25, 40, 1.0, 2.5, rng);
    const auto fit = glmm::fit_melr_engine(data, {});
    CHECK(fit.tau[0] >= 0.0);
    CHECK(fit.tau[0] > 0.5);
    const double at_hat = glmm::laplace_profile_loglik(data, {fit.tau[0]});
    const double at_zero = glmm::laplace_profile_loglik(data, {1e-10});
    CHECK(at_hat > at_zero);
}

TEST_CASE("laplace fit agrees with the AGH oracle") {
    Rng rng(42);
    auto data = oracles::simulate_single_factor(30, 50, 1.9, 3.0, rng);
    const auto fit = glmm::fit_melr_engine(data, {});
    REQUIRE(fit.converged);
    const auto oracle = oracles::agh_fit(data);
    CHECK(std::abs(fit.beta[0] - oracle.beta[0]) < 0.02);
    // The Laplace approximation differs from exact quadrature by O(sum 1/n_g);
    // on this design that is a few tenths of a log-likelihood unit.
    const double agh_at_fit = oracles::agh_loglik(data, fit.beta, fit.tau[0]);
    CHECK(std::abs(fit.loglik - agh_at_fit) < 1.0);
    CHECK(std::abs(fit.loglik - agh_at_fit) / std::abs(agh_at_fit) < 1e-3);
}

TEST_CASE("complete separation is reported with the offending level") {
    std::vector<BehaviorRow> rows;
    Rng rng(4);
    for (int i = 0; i < 120; ++i) {
        const bool hypo = i % 4 == 0;
        const char* pid = i % 6 == 0 ? "P01" : (i % 6 == 1 ? "P02" : (i % 6 == 2 ? "P03" : "P04"));
        char xid[8];
        std::snprintf(xid, sizeof(xid), "X%d", i % 10);
        // Every hypo row is unsafe; other rows are mixed.
        const int unsafe = hypo ? 1 : (rng.bernoulli(0.5) ? 1 : 0);
        rows.push_back(row(pid, xid, ParticipantType::t1dm,
                           hypo ? cgm::EpisodeLabel::hypo : cgm::EpisodeLabel::normal, unsafe));
    }
    ModelSpec spec = glmm::spec_for_partition(glmm::Partition::dm, false);
    try {
        glmm::fit_melr(rows, spec, {});
        FAIL("expected CompleteSeparation");
    } catch (const glmm::CompleteSeparation& e) {
        CHECK(e.level == "episode:hypo");
    }
}

TEST_CASE("degenerate random factors are rejected") {
    std::vector<BehaviorRow> rows;
    for (int i = 0; i < 20; ++i) {
        rows.push_back(row("P01", i % 2 ? "X1" : "X2", ParticipantType::t1dm,
                           i % 2 ? cgm::EpisodeLabel::hypo : cgm::EpisodeLabel::normal, i % 3 ? 1 : 0));
    }
    ModelSpec spec = glmm::spec_for_partition(glmm::Partition::dm, false);
    CHECK_THROWS_AS(glmm::fit_melr(rows, spec, {}), glmm::DegenerateGroups);
}

TEST_CASE("lrt_compare semantics") {
    Rng rng(31);
    auto data = oracles::simulate_crossed(10, 25, 400, 0.8, 1.0, 1.2, rng);
    glmm::Dataset reduced_data = data;
    reduced_data.factor_names = {"participant"};
    reduced_data.group_names.resize(1);
    reduced_data.group_index.resize(1);

    const auto full = glmm::fit_melr_engine(data, {});
    const auto reduced = glmm::fit_melr_engine(reduced_data, {});

    const auto r = glmm::lrt_compare(reduced, full);
    CHECK(r.df == 1);
    CHECK(r.chi2 >= 0.0);
    CHECK(r.p >= 0.0);
    CHECK(r.p <= 1.0);

    // Self comparison: zero statistic, p = 1.
    const auto self = glmm::lrt_compare(full, full);
    CHECK(self.chi2 == 0.0);
    CHECK(self.p == 1.0);
    CHECK(self.df == 0);

    // Swapped order is not nested.
    CHECK_THROWS_AS(glmm::lrt_compare(full, reduced), glmm::NotNested);
}

TEST_CASE("build_partitions set arithmetic") {
    std::vector<BehaviorRow> rows;
    for (int i = 0; i < 4; ++i)
        rows.push_back(row("C1", "X1", ParticipantType::control, cgm::EpisodeLabel::control, i % 2));
    for (int i = 0; i < 3; ++i)
        rows.push_back(row("T1", "X1", ParticipantType::t1dm, cgm::EpisodeLabel::normal, i % 2));
    for (int i = 0; i < 2; ++i)
        rows.push_back(row("T1", "X2", ParticipantType::t1dm, cgm::EpisodeLabel::severe_hyper, i % 2));

    const auto p = glmm::build_partitions(rows);
    CHECK(p.dm_all.size() == 9);
    CHECK(p.dm_norm.size() == 7);
    CHECK(p.all.size() == 9);
    CHECK(p.dm.size() == 5);
}

TEST_CASE("moderate hyperglycemia stays in disease partitions but not acute ones") {
    std::vector<BehaviorRow> rows;
    for (int i = 0; i < 4; ++i)
        rows.push_back(row("C1", "X1", ParticipantType::control, cgm::EpisodeLabel::control, i % 2));
    for (int i = 0; i < 3; ++i)
        rows.push_back(row("T1", "X1", ParticipantType::t1dm, cgm::EpisodeLabel::normal, i % 2));
    rows.push_back(row("T1", "X2", ParticipantType::t1dm, cgm::EpisodeLabel::moderate_hyper, 1));
    rows.push_back(row("T1", "X2", ParticipantType::t1dm, cgm::EpisodeLabel::hypo, 0));

    const auto p = glmm::build_partitions(rows);
    CHECK(p.dm_all.size() == 9);
    CHECK(p.all.size() == 8);
    CHECK(p.dm.size() == 4);
    for (const auto& r : p.all) CHECK(r.episode != cgm::EpisodeLabel::moderate_hyper);
    for (const auto& r : p.dm) CHECK(r.episode != cgm::EpisodeLabel::moderate_hyper);
}

TEST_CASE("build_partitions rejects corpora missing a partition") {
    std::vector<BehaviorRow> rows;
    for (int i = 0; i < 5; ++i)
        rows.push_back(row("C1", "X1", ParticipantType::control, cgm::EpisodeLabel::control, i % 2));
    CHECK_THROWS_AS(glmm::build_partitions(rows), glmm::EmptyPartition);
}

TEST_CASE("partition membership is nested for random corpora") {
    Rng rng(71);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<BehaviorRow> rows;
        const int n = 20 + rng.uniform_int(60);
        bool has_dm_acute = false, has_norm = false;
        for (int i = 0; i < n; ++i) {
            const bool control = rng.bernoulli(0.4);
            cgm::EpisodeLabel ep;
            if (control) {
                ep = cgm::EpisodeLabel::control;
            } else {
                const int k = rng.uniform_int(4);
                ep = k == 0   ? cgm::EpisodeLabel::hypo
                     : k == 1 ? cgm::EpisodeLabel::severe_hyper
                     : k == 2 ? cgm::EpisodeLabel::moderate_hyper
                              : cgm::EpisodeLabel::normal;
                if (ep != cgm::EpisodeLabel::moderate_hyper) has_dm_acute = true;
                if (ep == cgm::EpisodeLabel::normal) has_norm = true;
            }
            rows.push_back(row(control ? "C1" : "T1", "X1",
                               control ? ParticipantType::control : ParticipantType::t1dm, ep,
                               rng.bernoulli(0.5)));
        }
        if (!has_dm_acute || !has_norm) continue;
        const auto p = glmm::build_partitions(rows);
        CHECK(p.dm_norm.size() <= p.dm_all.size());
        CHECK(p.dm.size() <= p.all.size());
        CHECK(p.all.size() <= p.dm_all.size());
    }
}

namespace {

// Six participants with byte-identical response patterns over the same
// intersections.
std::vector<BehaviorRow> exchangeable_rows() {
    std::vector<BehaviorRow> rows;
    const char* pids[] = {"G1", "G2", "G3", "G4", "G5", "G6"};
    for (const char* pid : pids) {
        for (int k = 0; k < 4; ++k) {
            char xid[8];
            std::snprintf(xid, sizeof(xid), "X%d", k + 1);
            rows.push_back(row(pid, xid, ParticipantType::t1dm, cgm::EpisodeLabel::normal, k % 2));
            rows.push_back(row(pid, xid, ParticipantType::t1dm, cgm::EpisodeLabel::hypo, (k + 1) % 2));
            rows.push_back(
                row(pid, xid, ParticipantType::t1dm, cgm::EpisodeLabel::severe_hyper, k < 2 ? 1 : 0));
        }
    }
    return rows;
}

}  // namespace

TEST_CASE("cooks distance: exchangeable groups are indistinguishable") {
    const auto rows = exchangeable_rows();
    ModelSpec spec = glmm::spec_for_partition(glmm::Partition::dm, false);
    const auto fit = glmm::fit_melr(rows, spec, {});
    const auto rep = glmm::cooks_groups(rows, spec, fit, "participant", {});
    REQUIRE(rep.entries.size() == 6);
    for (const auto& e : rep.entries) {
        CHECK_FALSE(e.refit_failed);
        CHECK(std::abs(e.cooks_d - rep.entries[0].cooks_d) < 1e-6);
        CHECK(e.cooks_d < 0.5);
        CHECK_FALSE(e.flagged);
    }
}

TEST_CASE("cooks flag boundary is strictly greater than 0.5") {
    CHECK(glmm::flag_influential(0.51));
    CHECK_FALSE(glmm::flag_influential(0.49));
    CHECK_FALSE(glmm::flag_influential(0.5));
}

TEST_CASE("cooks refit failure is recorded, not fatal") {
    // Deleting the only control participant removes a fixed-effect level.
    std::vector<BehaviorRow> rows;
    Rng rng(12);
    for (int i = 0; i < 30; ++i)
        rows.push_back(row("C1", i % 2 ? "X1" : "X2", ParticipantType::control,
                           cgm::EpisodeLabel::control, rng.bernoulli(0.6)));
    for (const char* pid : {"T1", "T2", "T3"}) {
        for (int i = 0; i < 30; ++i)
            rows.push_back(row(pid, i % 2 ? "X1" : "X2", ParticipantType::t1dm,
                               cgm::EpisodeLabel::normal, rng.bernoulli(0.7)));
    }
    ModelSpec spec = glmm::spec_for_partition(glmm::Partition::dm_all, false);
    const auto fit = glmm::fit_melr(rows, spec, {});
    const auto rep = glmm::cooks_groups(rows, spec, fit, "participant", {});
    REQUIRE(rep.entries.size() == 4);
    int failed = 0;
    for (const auto& e : rep.entries) {
        if (e.refit_failed) {
            ++failed;
            CHECK(e.group == "C1");
            CHECK(std::isnan(e.cooks_d));
        }
    }
    CHECK(failed == 1);
}
