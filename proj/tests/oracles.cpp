#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace oracles {

namespace {

double log1pexp(double x) {
    if (x > 35.0) return x;
    if (x < -35.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

}  // namespace

double slc_distance_m(const GeoPoint& a, const GeoPoint& b) {
    constexpr double rad = std::numbers::pi / 180.0;
    const double p1 = a.lat * rad, p2 = b.lat * rad;
    const double dl = (b.lon - a.lon) * rad;
    double c = std::sin(p1) * std::sin(p2) + std::cos(p1) * std::cos(p2) * std::cos(dl);
    c = std::clamp(c, -1.0, 1.0);
    return 6371000.0 * std::acos(c);
}

stopsafe::intersections::ClusterAssignment brute_dbscan(const std::vector<LocalPoint>& points,
                                                        double eps, int min_pts) {
    const int n = static_cast<int>(points.size());
    const double eps2 = eps * eps;
    std::vector<std::vector<int>> adj(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double dx = points[i].x - points[j].x;
            const double dy = points[i].y - points[j].y;
            if (dx * dx + dy * dy <= eps2) adj[i].push_back(j);
        }
    }
    std::vector<bool> core(n, false);
    for (int i = 0; i < n; ++i) core[i] = static_cast<int>(adj[i].size()) >= min_pts;

    // Same canonical discovery order as the implementation under test: the
    // tie-break convention for border points is part of the contract, while
    // the clustering itself is computed by an entirely different route.
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return std::tie(points[a].x, points[a].y) < std::tie(points[b].x, points[b].y);
    });

    stopsafe::intersections::ClusterAssignment out;
    out.labels.assign(n, stopsafe::intersections::kNoise);
    int next = 0;
    // Components over core points, discovered in canonical order.
    for (int i : order) {
        if (!core[i] || out.labels[i] != stopsafe::intersections::kNoise) continue;
        const int cluster = next++;
        std::vector<int> stack = {i};
        out.labels[i] = cluster;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (int v : adj[u]) {
                if (core[v] && out.labels[v] == stopsafe::intersections::kNoise) {
                    out.labels[v] = cluster;
                    stack.push_back(v);
                }
            }
        }
    }
    // Border points: earliest-discovered cluster among adjacent cores.
    for (int i = 0; i < n; ++i) {
        if (core[i] || out.labels[i] != stopsafe::intersections::kNoise) continue;
        int best = stopsafe::intersections::kNoise;
        for (int v : adj[i]) {
            if (core[v] && (best == stopsafe::intersections::kNoise || out.labels[v] < best)) {
                best = out.labels[v];
            }
        }
        out.labels[i] = best;
    }
    out.cluster_count = next;
    out.noise_count = static_cast<int>(
        std::count(out.labels.begin(), out.labels.end(), stopsafe::intersections::kNoise));
    return out;
}

std::vector<int> canonical_labels(const std::vector<int>& labels) {
    std::map<int, int> first_index;
    for (int i = 0; i < static_cast<int>(labels.size()); ++i) {
        if (labels[i] >= 0 && !first_index.count(labels[i])) first_index[labels[i]] = i;
    }
    std::vector<std::pair<int, int>> order(first_index.begin(), first_index.end());
    std::sort(order.begin(), order.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });
    std::map<int, int> rename;
    for (int k = 0; k < static_cast<int>(order.size()); ++k) rename[order[k].first] = k;
    std::vector<int> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out[i] = labels[i] < 0 ? labels[i] : rename[labels[i]];
    }
    return out;
}

double median_objective(const std::vector<LocalPoint>& points, const LocalPoint& y) {
    double s = 0.0;
    for (const auto& p : points) s += std::hypot(p.x - y.x, p.y - y.y);
    return s;
}

LocalPoint grid_search_median(const std::vector<LocalPoint>& points) {
    double xlo = points[0].x, xhi = points[0].x, ylo = points[0].y, yhi = points[0].y;
    for (const auto& p : points) {
        xlo = std::min(xlo, p.x);
        xhi = std::max(xhi, p.x);
        ylo = std::min(ylo, p.y);
        yhi = std::max(yhi, p.y);
    }
    const auto sweep = [&](double ax, double bx, double ay, double by, double step) {
        LocalPoint best{ax, ay};
        double best_v = median_objective(points, best);
        for (double x = ax; x <= bx + step / 2; x += step) {
            for (double y = ay; y <= by + step / 2; y += step) {
                const double v = median_objective(points, {x, y});
                if (v < best_v) {
                    best_v = v;
                    best = {x, y};
                }
            }
        }
        return best;
    };
    const LocalPoint coarse = sweep(xlo - 0.01, xhi + 0.01, ylo - 0.01, yhi + 0.01, 0.01);
    return sweep(coarse.x - 0.01, coarse.x + 0.01, coarse.y - 0.01, coarse.y + 0.01, 0.0001);
}

Eigen::VectorXd fit_plain_logistic(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, int max_iter,
                                   double tol) {
    const int p = static_cast<int>(X.cols());
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    for (int it = 0; it < max_iter; ++it) {
        const Eigen::VectorXd eta = X * beta;
        Eigen::VectorXd mu(eta.size()), w(eta.size());
        for (int i = 0; i < eta.size(); ++i) {
            mu[i] = 1.0 / (1.0 + std::exp(-eta[i]));
            w[i] = mu[i] * (1.0 - mu[i]);
        }
        const Eigen::VectorXd grad = X.transpose() * (y - mu);
        if (grad.lpNorm<Eigen::Infinity>() < tol) break;
        const Eigen::MatrixXd H = X.transpose() * w.asDiagonal() * X;
        beta += H.ldlt().solve(grad);
    }
    return beta;
}

void gauss_hermite(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        const double off = std::sqrt(k / 2.0);
        J(k - 1, k) = off;
        J(k, k - 1) = off;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    nodes.resize(n);
    weights.resize(n);
    for (int k = 0; k < n; ++k) {
        nodes[k] = es.eigenvalues()[k];
        const double v0 = es.eigenvectors()(0, k);
        weights[k] = std::sqrt(std::numbers::pi) * v0 * v0;
    }
}

namespace {

struct GroupData {
    std::vector<int> rows;
};

// Mode of h(v) = sum_i [y eta - log(1+e^eta)] - v^2/2 with eta = xb + sigma v.
double group_mode(const stopsafe::glmm::Dataset& d, const std::vector<int>& rows,
                  const Eigen::VectorXd& xb, double sigma) {
    double v = 0.0;
    for (int it = 0; it < 200; ++it) {
        double g = -v, h = 1.0;
        for (int i : rows) {
            const double mu = 1.0 / (1.0 + std::exp(-(xb[i] + sigma * v)));
            g += sigma * (d.y[i] - mu);
            h += sigma * sigma * mu * (1.0 - mu);
        }
        const double step = g / h;
        v += step;
        if (std::abs(step) < 1e-13) break;
    }
    return v;
}

}  // namespace

double agh_loglik(const stopsafe::glmm::Dataset& data, const Eigen::VectorXd& beta, double tau,
                  int n_nodes) {
    if (data.factor_names.size() != 1) {
        throw stopsafe::Error("agh_loglik: oracle handles a single random factor");
    }
    std::vector<double> t, w;
    gauss_hermite(n_nodes, t, w);
    const double sigma = std::sqrt(std::max(tau, 0.0));
    const Eigen::VectorXd xb = data.X * beta;

    const int G = static_cast<int>(data.group_names[0].size());
    std::vector<std::vector<int>> rows(G);
    for (int i = 0; i < data.n(); ++i) rows[data.group_index[0][i]].push_back(i);

    double total = 0.0;
    for (int g = 0; g < G; ++g) {
        const double vhat = group_mode(data, rows[g], xb, sigma);
        double curv = 1.0;
        for (int i : rows[g]) {
            const double mu = 1.0 / (1.0 + std::exp(-(xb[i] + sigma * vhat)));
            curv += sigma * sigma * mu * (1.0 - mu);
        }
        const double scale = std::sqrt(2.0 / curv);
        double max_h = -std::numeric_limits<double>::infinity();
        std::vector<double> h(n_nodes);
        for (int k = 0; k < n_nodes; ++k) {
            const double v = vhat + scale * t[k];
            double hk = -0.5 * v * v;
            for (int i : rows[g]) {
                const double eta = xb[i] + sigma * v;
                hk += data.y[i] * eta - log1pexp(eta);
            }
            h[k] = hk + t[k] * t[k];
            max_h = std::max(max_h, h[k]);
        }
        double s = 0.0;
        for (int k = 0; k < n_nodes; ++k) s += w[k] * std::exp(h[k] - max_h);
        total += max_h + std::log(scale * s) - 0.5 * std::log(2.0 * std::numbers::pi);
    }
    return total;
}

AghFit agh_fit(const stopsafe::glmm::Dataset& data, int nodes) {
    const int p = data.p();
    const auto objective = [&](const Eigen::VectorXd& x) {
        const Eigen::VectorXd beta = x.head(p);
        const double tau = std::exp(std::clamp(x[p], -16.0, 8.0));
        return -agh_loglik(data, beta, tau, nodes);
    };
    Eigen::VectorXd best;
    double best_v = std::numeric_limits<double>::infinity();
    for (double t0 : {0.1, 1.0, 4.0}) {
        Eigen::VectorXd x0 = Eigen::VectorXd::Zero(p + 1);
        x0[p] = std::log(t0);
        auto r = stopsafe::glmm::nelder_mead(objective, x0, 0.8, 4000, 1e-11, 1e-7);
        r = stopsafe::glmm::nelder_mead(objective, r.x, 0.02, 4000, 1e-11, 1e-7);
        if (r.value < best_v) {
            best_v = r.value;
            best = r.x;
        }
    }
    AghFit fit;
    fit.beta = best.head(p);
    fit.tau = std::exp(std::clamp(best[p], -16.0, 8.0));
    fit.loglik = -best_v;
    return fit;
}

stopsafe::glmm::Dataset simulate_single_factor(int groups, int per_group, double beta0, double tau,
                                               stopsafe::Rng& rng) {
    stopsafe::glmm::Dataset d;
    const int n = groups * per_group;
    d.y.resize(n);
    d.X = Eigen::MatrixXd::Ones(n, 1);
    d.coef_names = {"(intercept)"};
    d.factor_names = {"participant"};
    d.group_names.emplace_back();
    d.group_index.emplace_back(n);
    const double sigma = std::sqrt(tau);
    for (int g = 0; g < groups; ++g) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "G%03d", g);
        d.group_names[0].push_back(buf);
        const double u = rng.normal(0.0, sigma);
        for (int j = 0; j < per_group; ++j) {
            const int i = g * per_group + j;
            d.group_index[0][i] = g;
            const double pr = 1.0 / (1.0 + std::exp(-(beta0 + u)));
            d.y[i] = rng.bernoulli(pr) ? 1.0 : 0.0;
        }
    }
    return d;
}

stopsafe::glmm::Dataset simulate_crossed(int participants, int intersections, int n_obs,
                                         double beta0, double tau_participant,
                                         double tau_intersection, stopsafe::Rng& rng) {
    stopsafe::glmm::Dataset d;
    d.y.resize(n_obs);
    d.X = Eigen::MatrixXd::Ones(n_obs, 1);
    d.coef_names = {"(intercept)"};
    d.factor_names = {"participant", "intersection"};
    d.group_names.resize(2);
    d.group_index.assign(2, std::vector<int>(n_obs));
    std::vector<double> up(participants), ui(intersections);
    for (int g = 0; g < participants; ++g) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "P%03d", g);
        d.group_names[0].push_back(buf);
        up[g] = rng.normal(0.0, std::sqrt(tau_participant));
    }
    for (int g = 0; g < intersections; ++g) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "X%04d", g);
        d.group_names[1].push_back(buf);
        ui[g] = rng.normal(0.0, std::sqrt(tau_intersection));
    }
    for (int i = 0; i < n_obs; ++i) {
        const int gp = rng.uniform_int(participants);
        const int gi = i % intersections;
        d.group_index[0][i] = gp;
        d.group_index[1][i] = gi;
        const double pr = 1.0 / (1.0 + std::exp(-(beta0 + up[gp] + ui[gi])));
        d.y[i] = rng.bernoulli(pr) ? 1.0 : 0.0;
    }
    return d;
}

}  // namespace oracles
