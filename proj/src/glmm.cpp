#include "stopsafe/glmm.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <set>

#include "stopsafe/stats.hpp"

namespace stopsafe::glmm {

namespace {

constexpr double kLogTauMin = -16.0;
constexpr double kLogTauMax = 8.0;
constexpr double kSeparationBound = 15.0;  // |log-odds| beyond this means separation

double log1pexp(double x) {
    if (x > 35.0) return x;
    if (x < -35.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Joint penalized Newton solver for fixed variance components. Holds the
// factor layout and reuses the sparse pattern of the random-effects block
// across factorizations.
class LaplaceSolver {
public:
    explicit LaplaceSolver(const Dataset& d) : d_(d), n_(d.n()), p_(d.p()) {
        F_ = static_cast<int>(d.factor_names.size());
        offsets_.resize(F_);
        q_all_ = 0;
        for (int f = 0; f < F_; ++f) {
            offsets_[f] = q_all_;
            q_all_ += static_cast<int>(d.group_names[f].size());
        }
        beta_ = Eigen::VectorXd::Zero(p_);
        b_ = Eigen::VectorXd::Zero(q_all_);
    }

    int q_all() const { return q_all_; }
    const Eigen::VectorXd& beta() const { return beta_; }
    const Eigen::VectorXd& b() const { return b_; }

    void reset() {
        beta_.setZero();
        b_.setZero();
    }

    struct Result {
        double loglik = 0.0;        // Laplace marginal log-likelihood
        double grad_norm = 0.0;     // final inf-norm of the joint gradient
        bool converged = false;
    };

    // Maximizes the penalized joint log-likelihood over (beta, b), warm
    // starting from the previous solution. Throws CompleteSeparation when a
    // fixed effect runs away.
    Result solve(const std::vector<double>& tau, double grad_tol, int max_newton = 60) {
        std::vector<double> sigma(F_);
        for (int f = 0; f < F_; ++f) sigma[f] = std::sqrt(std::max(tau[f], 0.0));

        Eigen::VectorXd eta(n_), mu(n_), w(n_);
        Eigen::VectorXd gbeta(p_), gb(q_all_);
        Result res;

        const auto compute_eta = [&](const Eigen::VectorXd& beta, const Eigen::VectorXd& b) {
            eta = d_.X * beta;
            for (int i = 0; i < n_; ++i) {
                double r = 0.0;
                for (int f = 0; f < F_; ++f) r += sigma[f] * b[offsets_[f] + d_.group_index[f][i]];
                eta[i] += r;
            }
        };
        const auto objective = [&](const Eigen::VectorXd& beta, const Eigen::VectorXd& b) {
            compute_eta(beta, b);
            double obj = 0.0;
            for (int i = 0; i < n_; ++i) obj += d_.y[i] * eta[i] - log1pexp(eta[i]);
            return obj - 0.5 * b.squaredNorm();
        };

        double cur = objective(beta_, b_);
        for (int it = 0; it < max_newton; ++it) {
            for (int i = 0; i < n_; ++i) {
                mu[i] = logistic(eta[i]);
                w[i] = mu[i] * (1.0 - mu[i]);
            }
            gbeta = d_.X.transpose() * (d_.y - mu);
            gb = -b_;
            for (int i = 0; i < n_; ++i) {
                const double r = d_.y[i] - mu[i];
                for (int f = 0; f < F_; ++f) gb[offsets_[f] + d_.group_index[f][i]] += sigma[f] * r;
            }
            res.grad_norm = std::max(gbeta.lpNorm<Eigen::Infinity>(), gb.lpNorm<Eigen::Infinity>());
            if (res.grad_norm < grad_tol) {
                res.converged = true;
                break;
            }

            assemble(sigma, w);
            Eigen::MatrixXd hbb = d_.X.transpose() * w.asDiagonal() * d_.X;
            factorize_current();

            const Eigen::MatrixXd sinv_ct = ldlt_.solve(C_.transpose());  // q x p
            const Eigen::VectorXd sinv_gb = ldlt_.solve(gb);
            const Eigen::MatrixXd schur = hbb - C_ * sinv_ct;
            const Eigen::VectorXd rhs = gbeta - C_ * sinv_gb;
            const Eigen::VectorXd dbeta = schur.ldlt().solve(rhs);
            const Eigen::VectorXd db = sinv_gb - sinv_ct * dbeta;

            double t = 1.0;
            double next = cur;
            bool accepted = false;
            for (int ls = 0; ls < 30; ++ls) {
                const double trial = objective(beta_ + t * dbeta, b_ + t * db);
                if (trial >= cur - 1e-12 * (1.0 + std::abs(cur))) {
                    next = trial;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if (!accepted) {
                // Objective cannot improve at floating-point resolution.
                res.converged = true;
                compute_eta(beta_, b_);
                break;
            }
            beta_ += t * dbeta;
            b_ += t * db;
            cur = next;
            compute_eta(beta_, b_);

            if (beta_.lpNorm<Eigen::Infinity>() > kSeparationBound) {
                int j = 0;
                beta_.cwiseAbs().maxCoeff(&j);
                throw CompleteSeparation(
                    "glmm: fixed effect '" + d_.coef_names[j] +
                        "' diverged; the data are completely separated on that level",
                    d_.coef_names[j]);
            }
            const double step = t * std::max(dbeta.lpNorm<Eigen::Infinity>(), db.lpNorm<Eigen::Infinity>());
            if (step < 1e-13 * (1.0 + b_.lpNorm<Eigen::Infinity>())) {
                res.converged = true;
                break;
            }
        }

        // Laplace log-likelihood at the mode, with the random-effects block
        // reassembled from the final weights.
        for (int i = 0; i < n_; ++i) {
            mu[i] = logistic(eta[i]);
            w[i] = mu[i] * (1.0 - mu[i]);
        }
        assemble(sigma, w);
        factorize_current();
        double logdet = 0.0;
        const Eigen::VectorXd dvec = ldlt_.vectorD();
        for (int i = 0; i < q_all_; ++i) logdet += std::log(dvec[i]);
        res.loglik = cur - 0.5 * logdet;
        last_sigma_ = sigma;
        last_w_ = w;
        return res;
    }

    // Laplace marginal log-likelihood at fixed (beta, tau), maximizing only
    // the random intercepts. Warm starts from the previous b.
    Result solve_u_only(const std::vector<double>& tau, const Eigen::VectorXd& beta,
                        double grad_tol, int max_newton = 60) {
        std::vector<double> sigma(F_);
        for (int f = 0; f < F_; ++f) sigma[f] = std::sqrt(std::max(tau[f], 0.0));

        const Eigen::VectorXd xb = d_.X * beta;
        Eigen::VectorXd eta(n_), mu(n_), w(n_), gb(q_all_);
        Result res;

        const auto compute_eta = [&](const Eigen::VectorXd& b) {
            eta = xb;
            for (int i = 0; i < n_; ++i) {
                double r = 0.0;
                for (int f = 0; f < F_; ++f) r += sigma[f] * b[offsets_[f] + d_.group_index[f][i]];
                eta[i] += r;
            }
        };
        const auto objective = [&](const Eigen::VectorXd& b) {
            compute_eta(b);
            double obj = 0.0;
            for (int i = 0; i < n_; ++i) obj += d_.y[i] * eta[i] - log1pexp(eta[i]);
            return obj - 0.5 * b.squaredNorm();
        };

        double cur = objective(b_);
        for (int it = 0; it < max_newton; ++it) {
            for (int i = 0; i < n_; ++i) {
                mu[i] = logistic(eta[i]);
                w[i] = mu[i] * (1.0 - mu[i]);
            }
            gb = -b_;
            for (int i = 0; i < n_; ++i) {
                const double r = d_.y[i] - mu[i];
                for (int f = 0; f < F_; ++f) gb[offsets_[f] + d_.group_index[f][i]] += sigma[f] * r;
            }
            res.grad_norm = gb.lpNorm<Eigen::Infinity>();
            if (res.grad_norm < grad_tol) {
                res.converged = true;
                break;
            }
            assemble(sigma, w);
            factorize_current();
            const Eigen::VectorXd db = ldlt_.solve(gb);

            double t = 1.0;
            double next = cur;
            bool accepted = false;
            for (int ls = 0; ls < 30; ++ls) {
                const double trial = objective(b_ + t * db);
                if (trial >= cur - 1e-12 * (1.0 + std::abs(cur))) {
                    next = trial;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if (!accepted) {
                res.converged = true;
                compute_eta(b_);
                break;
            }
            b_ += t * db;
            cur = next;
            compute_eta(b_);
            if (t * db.lpNorm<Eigen::Infinity>() < 1e-13 * (1.0 + b_.lpNorm<Eigen::Infinity>())) {
                res.converged = true;
                break;
            }
        }

        for (int i = 0; i < n_; ++i) {
            mu[i] = logistic(eta[i]);
            w[i] = mu[i] * (1.0 - mu[i]);
        }
        assemble(sigma, w);
        factorize_current();
        double logdet = 0.0;
        const Eigen::VectorXd dvec = ldlt_.vectorD();
        for (int i = 0; i < q_all_; ++i) logdet += std::log(dvec[i]);
        res.loglik = cur - 0.5 * logdet;
        last_sigma_ = sigma;
        last_w_ = w;
        return res;
    }

    void set_beta(const Eigen::VectorXd& beta) { beta_ = beta; }

    // Fixed-effects covariance: inverse Schur complement of the joint
    // Hessian at the current mode.
    Eigen::MatrixXd beta_covariance() {
        assemble(last_sigma_, last_w_);
        factorize_current();
        const Eigen::MatrixXd hbb = d_.X.transpose() * last_w_.asDiagonal() * d_.X;
        const Eigen::MatrixXd sinv_ct = ldlt_.solve(C_.transpose());
        const Eigen::MatrixXd schur = hbb - C_ * sinv_ct;
        return schur.inverse();
    }

private:
    void factorize_current() {
        if (!pattern_ready_) {
            ldlt_.analyzePattern(S_);
            pattern_ready_ = true;
        }
        ldlt_.factorize(S_);
        if (ldlt_.info() != Eigen::Success) {
            throw RefitFailure("glmm: random-effects block factorization failed");
        }
    }

    // Random-effects block S = Lambda' Z' W Z Lambda + I and the cross block
    // C = X' W Z Lambda.
    void assemble(const std::vector<double>& sigma, const Eigen::VectorXd& w) {
        triplets_.clear();
        triplets_.reserve(static_cast<std::size_t>(n_) * (F_ * F_) + q_all_);
        C_.setZero(p_, q_all_);
        for (int i = 0; i < n_; ++i) {
            for (int f = 0; f < F_; ++f) {
                const int a = offsets_[f] + d_.group_index[f][i];
                const double sa = sigma[f];
                triplets_.emplace_back(a, a, sa * sa * w[i]);
                C_.col(a) += sa * w[i] * d_.X.row(i).transpose();
                for (int g = f + 1; g < F_; ++g) {
                    const int c = offsets_[g] + d_.group_index[g][i];
                    const double v = sa * sigma[g] * w[i];
                    triplets_.emplace_back(a, c, v);
                    triplets_.emplace_back(c, a, v);
                }
            }
        }
        for (int k = 0; k < q_all_; ++k) triplets_.emplace_back(k, k, 1.0);
        S_.resize(q_all_, q_all_);
        S_.setFromTriplets(triplets_.begin(), triplets_.end());
    }

    const Dataset& d_;
    int n_, p_, F_ = 0, q_all_ = 0;
    std::vector<int> offsets_;
    Eigen::VectorXd beta_, b_;
    Eigen::SparseMatrix<double> S_;
    Eigen::MatrixXd C_;
    std::vector<Eigen::Triplet<double>> triplets_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
    bool pattern_ready_ = false;
    std::vector<double> last_sigma_;
    Eigen::VectorXd last_w_;
};

void validate_dataset(const Dataset& d) {
    if (d.n() == 0) throw EmptyPartition("glmm: no observations");
    if (d.factor_names.empty()) throw DegenerateGroups("glmm: no random factors");
    for (std::size_t f = 0; f < d.factor_names.size(); ++f) {
        if (d.group_names[f].size() < 2) {
            throw DegenerateGroups("glmm: random factor '" + d.factor_names[f] +
                                   "' has fewer than 2 groups");
        }
    }
}

}  // namespace

double penalized_objective(const Dataset& data, const std::vector<double>& tau,
                           const Eigen::VectorXd& beta, const Eigen::VectorXd& b,
                           Eigen::VectorXd* grad) {
    const int F = static_cast<int>(data.factor_names.size());
    std::vector<int> offsets(F);
    int q_all = 0;
    for (int f = 0; f < F; ++f) {
        offsets[f] = q_all;
        q_all += static_cast<int>(data.group_names[f].size());
    }
    std::vector<double> sigma(F);
    for (int f = 0; f < F; ++f) sigma[f] = std::sqrt(std::max(tau[f], 0.0));

    double obj = -0.5 * b.squaredNorm();
    if (grad) {
        grad->setZero(data.p() + q_all);
        grad->tail(q_all) = -b;
    }
    for (int i = 0; i < data.n(); ++i) {
        double eta = data.X.row(i).dot(beta);
        for (int f = 0; f < F; ++f) eta += sigma[f] * b[offsets[f] + data.group_index[f][i]];
        obj += data.y[i] * eta - log1pexp(eta);
        if (grad) {
            const double r = data.y[i] - logistic(eta);
            grad->head(data.p()) += r * data.X.row(i).transpose();
            for (int f = 0; f < F; ++f)
                (*grad)[data.p() + offsets[f] + data.group_index[f][i]] += sigma[f] * r;
        }
    }
    return obj;
}

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x0, double step, int max_eval, double ftol,
                             double xtol) {
    const int dim = static_cast<int>(x0.size());
    struct Vertex {
        Eigen::VectorXd x;
        double v;
    };
    std::vector<Vertex> simplex;
    NelderMeadResult res;
    res.evaluations = 0;
    const auto eval = [&](const Eigen::VectorXd& x) {
        ++res.evaluations;
        return f(x);
    };

    simplex.push_back({x0, eval(x0)});
    for (int k = 0; k < dim; ++k) {
        Eigen::VectorXd x = x0;
        x[k] += step;
        simplex.push_back({x, eval(x)});
    }
    const auto by_value = [](const Vertex& a, const Vertex& b) { return a.v < b.v; };

    while (res.evaluations < max_eval) {
        std::sort(simplex.begin(), simplex.end(), by_value);
        const double spread = simplex.back().v - simplex.front().v;
        double diam = 0.0;
        for (int k = 1; k <= dim; ++k)
            diam = std::max(diam, (simplex[k].x - simplex[0].x).lpNorm<Eigen::Infinity>());
        if (spread < ftol * (1.0 + std::abs(simplex.front().v)) && diam < xtol) {
            res.converged = true;
            break;
        }

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
        for (int k = 0; k < dim; ++k) centroid += simplex[k].x;
        centroid /= static_cast<double>(dim);

        Vertex& worst = simplex.back();
        const Eigen::VectorXd xr = centroid + (centroid - worst.x);
        const double vr = eval(xr);
        if (vr < simplex.front().v) {
            const Eigen::VectorXd xe = centroid + 2.0 * (centroid - worst.x);
            const double ve = eval(xe);
            worst = ve < vr ? Vertex{xe, ve} : Vertex{xr, vr};
        } else if (vr < simplex[dim - 1].v) {
            worst = {xr, vr};
        } else {
            const bool outside = vr < worst.v;
            const Eigen::VectorXd xc =
                centroid + 0.5 * ((outside ? xr : worst.x) - centroid);
            const double vc = eval(xc);
            if (vc < std::min(vr, worst.v)) {
                worst = {xc, vc};
            } else {
                for (int k = 1; k <= dim; ++k) {
                    simplex[k].x = simplex[0].x + 0.5 * (simplex[k].x - simplex[0].x);
                    simplex[k].v = eval(simplex[k].x);
                }
            }
        }
    }

    std::sort(simplex.begin(), simplex.end(), by_value);
    res.x = simplex.front().x;
    res.value = simplex.front().v;
    return res;
}

double laplace_profile_loglik(const Dataset& data, const std::vector<double>& tau) {
    validate_dataset(data);
    LaplaceSolver solver(data);
    return solver.solve(tau, 1e-7).loglik;
}

MelrFit fit_melr_engine(const Dataset& data, const FitControls& controls) {
    validate_dataset(data);
    const int F = static_cast<int>(data.factor_names.size());
    const int p = data.p();
    LaplaceSolver solver(data);

    // Stage one: lme4-style profiling. For each candidate tau the inner
    // Newton maximizes the penalized joint likelihood over (beta, u); the
    // fixed multi-start guards the tau -> 0 boundary.
    const double search_tol = std::max(controls.tol, 1e-7);
    const auto profile = [&](const Eigen::VectorXd& log_tau) {
        std::vector<double> tau(F);
        for (int f = 0; f < F; ++f)
            tau[f] = std::exp(std::clamp(log_tau[f], kLogTauMin, kLogTauMax));
        return -solver.solve(tau, search_tol).loglik;
    };

    const double starts[] = {0.1, 1.0, 4.0};
    const int budget = std::max(controls.max_iter / 3, 60);
    Eigen::VectorXd best_theta;
    double best_value = std::numeric_limits<double>::infinity();
    for (double s : starts) {
        solver.reset();
        Eigen::VectorXd theta0 = Eigen::VectorXd::Constant(F, std::log(s));
        const NelderMeadResult r = nelder_mead(profile, theta0, 1.0, budget, 1e-9, 1e-5);
        if (r.value < best_value) {
            best_value = r.value;
            best_theta = r.x;
        }
    }
    solver.reset();
    std::vector<double> tau_stage1(F);
    for (int f = 0; f < F; ++f)
        tau_stage1[f] = std::exp(std::clamp(best_theta[f], kLogTauMin, kLogTauMax));
    solver.solve(tau_stage1, search_tol, 200);
    const Eigen::VectorXd beta_stage1 = solver.beta();

    // Stage two: the profiled beta ignores how the curvature term of the
    // Laplace objective moves with beta, which biases it away from the
    // quadrature optimum. Polish (beta, log tau) jointly on the Laplace
    // objective itself, with the inner Newton now over intercepts only.
    const auto laplace_obj = [&](const Eigen::VectorXd& x) {
        std::vector<double> tau(F);
        for (int f = 0; f < F; ++f)
            tau[f] = std::exp(std::clamp(x[p + f], kLogTauMin, kLogTauMax));
        return -solver.solve_u_only(tau, x.head(p), search_tol).loglik;
    };
    Eigen::VectorXd x0(p + F);
    x0.head(p) = beta_stage1;
    x0.tail(F) = best_theta.cwiseMax(kLogTauMin).cwiseMin(kLogTauMax);
    const int polish_budget = std::max(250 * (p + F), controls.max_iter);
    NelderMeadResult polish = nelder_mead(laplace_obj, x0, 0.25, polish_budget, 1e-11, 1e-7);
    // Fresh-simplex restart; Nelder-Mead can seize up in higher dimensions.
    polish = nelder_mead(laplace_obj, polish.x, 0.02, polish_budget, 1e-11, 1e-7);

    MelrFit fit;
    fit.coef_names = data.coef_names;
    fit.random_factor_names = data.factor_names;
    fit.n_obs = data.n();
    fit.beta = polish.x.head(p);
    fit.tau.resize(F);
    for (int f = 0; f < F; ++f)
        fit.tau[f] = std::exp(std::clamp(polish.x[p + f], kLogTauMin, kLogTauMax));
    if (fit.beta.lpNorm<Eigen::Infinity>() > kSeparationBound) {
        int j = 0;
        fit.beta.cwiseAbs().maxCoeff(&j);
        throw CompleteSeparation("glmm: fixed effect '" + data.coef_names[j] +
                                     "' diverged; the data are completely separated on that level",
                                 data.coef_names[j]);
    }

    const auto final_res = solver.solve_u_only(fit.tau, fit.beta, controls.tol, 200);
    fit.loglik = final_res.loglik;
    fit.converged = final_res.converged && final_res.grad_norm < controls.tol && polish.converged;
    solver.set_beta(fit.beta);
    fit.vcov = solver.beta_covariance();
    fit.se.resize(data.p());
    for (int j = 0; j < data.p(); ++j) fit.se[j] = std::sqrt(std::max(fit.vcov(j, j), 0.0));
    fit.sigma2_residual = stats::kLogisticResidualVariance;

    const Eigen::VectorXd eta_fixed = data.X * fit.beta;
    const double mean = eta_fixed.mean();
    fit.sigma2_fixed = (eta_fixed.array() - mean).square().sum() / static_cast<double>(data.n());

    fit.n_groups.resize(F);
    fit.random_modes.resize(F);
    int off = 0;
    for (int f = 0; f < F; ++f) {
        const int qf = static_cast<int>(data.group_names[f].size());
        fit.n_groups[f] = qf;
        fit.random_modes[f].resize(qf);
        const double sigma = std::sqrt(fit.tau[f]);
        for (int g = 0; g < qf; ++g) fit.random_modes[f][g] = sigma * solver.b()[off + g];
        off += qf;
    }
    return fit;
}

// ---------------------------------------------------------------------------
// Behavior-row layer
// ---------------------------------------------------------------------------

std::string to_string(Partition p) {
    switch (p) {
        case Partition::dm_all: return "dm_all";
        case Partition::dm_norm: return "dm_norm";
        case Partition::all: return "all";
        default: return "dm";
    }
}

namespace {

std::string fixed_level_of(const encounters::BehaviorRow& row, FixedFactor factor) {
    if (factor == FixedFactor::participant_type) return stopsafe::to_string(row.participant_type);
    return cgm::to_string(row.episode);
}

// Canonical level order; dummies follow this order after dropping the
// reference level.
std::vector<std::string> canonical_levels(FixedFactor factor) {
    if (factor == FixedFactor::participant_type) return {"control", "t1dm"};
    return {"control", "normal", "hypo", "severe_hyper"};
}

}  // namespace

Dataset build_dataset(const std::vector<encounters::BehaviorRow>& rows, const ModelSpec& spec) {
    if (rows.empty()) throw EmptyPartition("glmm: no rows for partition " + to_string(spec.partition));

    Dataset d;
    const int n = static_cast<int>(rows.size());
    d.y.resize(n);

    std::set<std::string> present;
    for (const auto& r : rows) present.insert(fixed_level_of(r, spec.fixed_factor));
    if (!present.count(spec.reference_level)) {
        throw InsufficientLevels("glmm: reference level '" + spec.reference_level +
                                 "' is absent from the data");
    }
    if (present.size() < 2) {
        throw InsufficientLevels("glmm: fixed factor has fewer than 2 levels present");
    }

    std::vector<std::string> dummies;
    for (const auto& lvl : canonical_levels(spec.fixed_factor)) {
        if (lvl != spec.reference_level && present.count(lvl)) dummies.push_back(lvl);
    }
    const std::string prefix =
        spec.fixed_factor == FixedFactor::participant_type ? "participant_type:" : "episode:";

    d.X = Eigen::MatrixXd::Zero(n, 1 + static_cast<int>(dummies.size()));
    d.coef_names.push_back("(intercept)");
    for (const auto& lvl : dummies) d.coef_names.push_back(prefix + lvl);
    for (int i = 0; i < n; ++i) {
        d.y[i] = rows[i].unsafe;
        d.X(i, 0) = 1.0;
        const std::string lvl = fixed_level_of(rows[i], spec.fixed_factor);
        for (std::size_t k = 0; k < dummies.size(); ++k) {
            if (lvl == dummies[k]) d.X(i, 1 + static_cast<int>(k)) = 1.0;
        }
    }

    for (const auto& factor : spec.random_factors) {
        std::set<std::string> ids;
        for (const auto& r : rows)
            ids.insert(factor == "participant" ? r.participant_id : r.intersection_id);
        std::vector<std::string> names(ids.begin(), ids.end());
        std::map<std::string, int> index;
        for (std::size_t k = 0; k < names.size(); ++k) index[names[k]] = static_cast<int>(k);
        std::vector<int> gi(n);
        for (int i = 0; i < n; ++i) {
            gi[i] = index[factor == "participant" ? rows[i].participant_id
                                                  : rows[i].intersection_id];
        }
        d.factor_names.push_back(factor);
        d.group_names.push_back(std::move(names));
        d.group_index.push_back(std::move(gi));
    }
    return d;
}

MelrFit fit_melr(const std::vector<encounters::BehaviorRow>& rows, const ModelSpec& spec,
                 const FitControls& controls) {
    return fit_melr_engine(build_dataset(rows, spec), controls);
}

LrtResult lrt_compare(const MelrFit& reduced, const MelrFit& full) {
    const auto& rf = reduced.random_factor_names;
    const auto& ff = full.random_factor_names;
    const bool subset = std::all_of(rf.begin(), rf.end(), [&](const std::string& f) {
        return std::find(ff.begin(), ff.end(), f) != ff.end();
    });
    if (!subset || rf.size() > ff.size()) {
        throw NotNested("lrt_compare: reduced random effects are not a subset of the full model's");
    }
    if (reduced.n_obs != full.n_obs || reduced.coef_names != full.coef_names) {
        throw NotNested("lrt_compare: models were fit to different rows or fixed effects");
    }

    LrtResult r;
    r.df = static_cast<int>(ff.size() - rf.size());
    const double raw = 2.0 * (full.loglik - reduced.loglik);
    r.negative_chi2_warning = raw < -1e-6;
    r.chi2 = std::max(0.0, raw);
    r.p = (r.chi2 == 0.0 || r.df == 0) ? 1.0 : stats::chi2_sf(r.chi2, r.df);
    return r;
}

FitSummary summarize_fit(const MelrFit& fit) {
    FitSummary s;
    for (int j = 0; j < fit.beta.size(); ++j) {
        OrRow row;
        row.name = fit.coef_names[j];
        row.odds_ratio = std::exp(fit.beta[j]);
        row.ci_low = std::exp(fit.beta[j] - stats::kZ975 * fit.se[j]);
        row.ci_high = std::exp(fit.beta[j] + stats::kZ975 * fit.se[j]);
        row.p = stats::wald_p(fit.beta[j], fit.se[j]);
        s.or_table.push_back(row);
    }
    double tau_sum = 0.0;
    for (double t : fit.tau) tau_sum += t;
    const double denom = tau_sum + fit.sigma2_residual;
    s.icc = tau_sum / denom;
    s.r2_marginal = fit.sigma2_fixed / (fit.sigma2_fixed + denom);
    s.r2_conditional = (fit.sigma2_fixed + tau_sum) / (fit.sigma2_fixed + denom);
    return s;
}

InfluenceReport cooks_groups(const std::vector<encounters::BehaviorRow>& rows, const ModelSpec& spec,
                             const MelrFit& fit, const std::string& grouping,
                             const FitControls& controls) {
    if (std::find(spec.random_factors.begin(), spec.random_factors.end(), grouping) ==
        spec.random_factors.end()) {
        throw Error("cooks_groups: grouping '" + grouping + "' is not a random factor of the model");
    }

    InfluenceReport report;
    report.grouping = grouping;

    std::set<std::string> ids;
    for (const auto& r : rows)
        ids.insert(grouping == "participant" ? r.participant_id : r.intersection_id);

    const Eigen::MatrixXd info = fit.vcov.inverse();
    const double p = static_cast<double>(fit.beta.size());

    for (const auto& id : ids) {
        InfluenceEntry entry;
        entry.group = id;
        std::vector<encounters::BehaviorRow> subset;
        subset.reserve(rows.size());
        for (const auto& r : rows) {
            const std::string& key = grouping == "participant" ? r.participant_id : r.intersection_id;
            if (key != id) subset.push_back(r);
        }
        if (subset.size() == rows.size()) {
            // Deleting a group with no rows leaves the fit unchanged.
            entry.cooks_d = 0.0;
            report.entries.push_back(entry);
            continue;
        }
        try {
            const MelrFit refit = fit_melr(subset, spec, controls);
            if (refit.coef_names != fit.coef_names) {
                throw RefitFailure("refit lost fixed-effect levels");
            }
            const Eigen::VectorXd delta = fit.beta - refit.beta;
            entry.cooks_d = delta.dot(info * delta) / p;
            entry.flagged = flag_influential(entry.cooks_d);
        } catch (const Error&) {
            entry.refit_failed = true;
            entry.cooks_d = std::nan("");
        }
        report.entries.push_back(entry);
    }
    return report;
}

Partitions build_partitions(const std::vector<encounters::BehaviorRow>& rows) {
    Partitions p;
    for (const auto& r : rows) {
        if (r.episode == cgm::EpisodeLabel::missing) {
            throw Error("build_partitions: rows with missing episode must be dropped at binarize");
        }
        const bool acute = r.episode == cgm::EpisodeLabel::control ||
                           r.episode == cgm::EpisodeLabel::normal ||
                           r.episode == cgm::EpisodeLabel::hypo ||
                           r.episode == cgm::EpisodeLabel::severe_hyper;
        p.dm_all.push_back(r);
        if (r.participant_type == ParticipantType::control ||
            r.episode == cgm::EpisodeLabel::normal) {
            p.dm_norm.push_back(r);
        }
        if (acute) p.all.push_back(r);
        if (acute && r.participant_type == ParticipantType::t1dm) p.dm.push_back(r);
    }
    const auto check = [](const std::vector<encounters::BehaviorRow>& v, const char* name) {
        if (v.empty()) throw EmptyPartition(std::string("build_partitions: partition '") + name +
                                            "' is empty");
    };
    check(p.dm_all, "dm_all");
    check(p.dm_norm, "dm_norm");
    check(p.all, "all");
    check(p.dm, "dm");
    return p;
}

ModelSpec spec_for_partition(Partition partition, bool with_intersection) {
    ModelSpec spec;
    spec.partition = partition;
    spec.random_factors = with_intersection ? std::vector<std::string>{"participant", "intersection"}
                                            : std::vector<std::string>{"participant"};
    switch (partition) {
        case Partition::dm_all:
        case Partition::dm_norm:
            spec.fixed_factor = FixedFactor::participant_type;
            spec.reference_level = "control";
            break;
        case Partition::all:
            spec.fixed_factor = FixedFactor::episode_type;
            spec.reference_level = "control";
            break;
        case Partition::dm:
            spec.fixed_factor = FixedFactor::episode_type;
            spec.reference_level = "normal";
            break;
    }
    return spec;
}

}  // namespace stopsafe::glmm
