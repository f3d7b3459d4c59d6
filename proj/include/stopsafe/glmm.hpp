#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "stopsafe/encounters.hpp"
#include "stopsafe/errors.hpp"

namespace stopsafe::glmm {

class CompleteSeparation : public Error {
public:
    CompleteSeparation(const std::string& msg, std::string level_name)
        : Error(msg), level(std::move(level_name)) {}
    std::string level;
};

class DegenerateGroups : public Error {
public:
    using Error::Error;
};

class InsufficientLevels : public Error {
public:
    using Error::Error;
};

class NotNested : public Error {
public:
    using Error::Error;
};

class EmptyPartition : public Error {
public:
    using Error::Error;
};

class RefitFailure : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Numeric design for the fitter. Rows are Bernoulli observations with a dense
// fixed-effects matrix and one integer group index per random factor.
// ---------------------------------------------------------------------------
struct Dataset {
    Eigen::VectorXd y;                                  // 0/1 responses
    Eigen::MatrixXd X;                                  // n x p, column 0 = intercept
    std::vector<std::string> coef_names;                // p entries
    std::vector<std::string> factor_names;              // one per random factor
    std::vector<std::vector<int>> group_index;          // per factor: n indices
    std::vector<std::vector<std::string>> group_names;  // per factor: group ids

    int n() const { return static_cast<int>(y.size()); }
    int p() const { return static_cast<int>(X.cols()); }
};

struct FitControls {
    double tol = 1e-6;   // gradient norm defining convergence
    int max_iter = 600;  // outer profile evaluations across all starts
};

struct MelrFit {
    Eigen::VectorXd beta;
    Eigen::VectorXd se;
    Eigen::MatrixXd vcov;  // fixed-effects covariance (inverse profiled information)
    std::vector<std::string> coef_names;
    std::vector<std::string> random_factor_names;
    std::vector<double> tau;  // variance per random factor, latent scale
    double sigma2_residual = 0.0;
    double sigma2_fixed = 0.0;  // population variance of X*beta over rows
    double loglik = 0.0;
    bool converged = false;
    int n_obs = 0;
    std::vector<int> n_groups;
    std::vector<std::vector<double>> random_modes;  // conditional modes, latent scale
};

// Laplace-approximated ML fit of a logistic mixed model with one or two
// crossed random intercept factors. The inner loop finds the joint
// (beta, intercepts) mode by sparse penalized Newton steps; the outer loop
// searches the variance components on the log scale from the fixed starts
// tau in {0.1, 1, 4}.
MelrFit fit_melr_engine(const Dataset& data, const FitControls& controls = {});

// Profile Laplace log-likelihood at fixed variance components (beta and
// intercepts optimized out).
double laplace_profile_loglik(const Dataset& data, const std::vector<double>& tau);

// Penalized joint log-likelihood (the inner objective) and, optionally, its
// analytic gradient with respect to [beta; b] where b holds the spherical
// (unit-variance) random effects.
double penalized_objective(const Dataset& data, const std::vector<double>& tau,
                           const Eigen::VectorXd& beta, const Eigen::VectorXd& b,
                           Eigen::VectorXd* grad = nullptr);

// ---------------------------------------------------------------------------
// Spec-level API over behavior rows.
// ---------------------------------------------------------------------------
enum class Partition { dm_all, dm_norm, all, dm };
enum class FixedFactor { participant_type, episode_type };

std::string to_string(Partition p);

struct ModelSpec {
    FixedFactor fixed_factor = FixedFactor::participant_type;
    std::string reference_level = "control";
    std::vector<std::string> random_factors = {"participant"};  // must contain participant
    Partition partition = Partition::dm_all;
};

Dataset build_dataset(const std::vector<encounters::BehaviorRow>& rows, const ModelSpec& spec);

MelrFit fit_melr(const std::vector<encounters::BehaviorRow>& rows, const ModelSpec& spec,
                 const FitControls& controls = {});

struct LrtResult {
    double chi2 = 0.0;
    int df = 0;
    double p = 1.0;
    bool negative_chi2_warning = false;  // raw statistic below -1e-6
};

// ANOVA-style likelihood ratio test between nested random-effect structures
// fit to identical rows and fixed effects. No boundary correction.
LrtResult lrt_compare(const MelrFit& reduced, const MelrFit& full);

struct OrRow {
    std::string name;
    double odds_ratio = 1.0;
    double ci_low = 1.0;
    double ci_high = 1.0;
    double p = 1.0;
};

struct FitSummary {
    std::vector<OrRow> or_table;
    double icc = 0.0;
    double r2_marginal = 0.0;
    double r2_conditional = 0.0;
};

FitSummary summarize_fit(const MelrFit& fit);

struct InfluenceEntry {
    std::string group;
    double cooks_d = 0.0;
    bool flagged = false;
    bool refit_failed = false;
};

struct InfluenceReport {
    std::string grouping;
    std::vector<InfluenceEntry> entries;  // ordered by group id
};

inline constexpr double kCooksFlagThreshold = 0.5;
inline bool flag_influential(double cooks_d) { return cooks_d > kCooksFlagThreshold; }

// Group-deletion Cook's distance: refit without each group of `grouping` and
// measure the standardized shift of the fixed effects against the full-fit
// covariance, divided by the coefficient count.
InfluenceReport cooks_groups(const std::vector<encounters::BehaviorRow>& rows, const ModelSpec& spec,
                             const MelrFit& fit, const std::string& grouping,
                             const FitControls& controls = {});

struct Partitions {
    std::vector<encounters::BehaviorRow> dm_all;
    std::vector<encounters::BehaviorRow> dm_norm;
    std::vector<encounters::BehaviorRow> all;
    std::vector<encounters::BehaviorRow> dm;
};

// dm_all keeps every row (moderate hyperglycemia included: disease models use
// all T1DM data); the acute-physiology partitions (all, dm) keep only
// control/normal/hypo/severe episodes.
Partitions build_partitions(const std::vector<encounters::BehaviorRow>& rows);

// Model spec used by the pipeline for a given partition.
ModelSpec spec_for_partition(Partition partition, bool with_intersection);

// Generic Nelder-Mead minimizer (shared by the fitter and test oracles).
struct NelderMeadResult {
    Eigen::VectorXd x;
    double value = 0.0;
    int evaluations = 0;
    bool converged = false;
};

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x0, double step, int max_eval,
                             double ftol = 1e-10, double xtol = 1e-7);

}  // namespace stopsafe::glmm
