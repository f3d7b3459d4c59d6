#pragma once

// Independent reference implementations used only by tests. Each oracle
// deliberately takes a different computational route from the library code
// it checks.

#include <Eigen/Dense>
#include <vector>

#include "stopsafe/geo.hpp"
#include "stopsafe/glmm.hpp"
#include "stopsafe/intersections.hpp"
#include "stopsafe/rng.hpp"

namespace oracles {

using stopsafe::geo::GeoPoint;
using stopsafe::geo::LocalPoint;

// Spherical law of cosines; same sphere radius as the production haversine.
double slc_distance_m(const GeoPoint& a, const GeoPoint& b);

// DBSCAN by explicit epsilon-neighbor graph: core points from degree counts,
// clusters as connected components over core points (discovered in index
// order), border points attached to the earliest-discovered component with an
// adjacent core point.
stopsafe::intersections::ClusterAssignment brute_dbscan(const std::vector<LocalPoint>& points,
                                                        double eps, int min_pts);

// Relabels clusters by the smallest contained point index so two label
// vectors can be compared up to renaming.
std::vector<int> canonical_labels(const std::vector<int>& labels);

// Two-stage grid search for the geometric median: a 0.01-step sweep of the
// padded bounding box, then a 0.0001-step sweep around the best cell.
LocalPoint grid_search_median(const std::vector<LocalPoint>& points);

double median_objective(const std::vector<LocalPoint>& points, const LocalPoint& y);

// Plain (no random effect) logistic regression by Newton iterations.
Eigen::VectorXd fit_plain_logistic(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                   int max_iter = 100, double tol = 1e-10);

// Gauss-Hermite nodes/weights (weight exp(-t^2)) via the Golub-Welsch
// eigenvalue method.
void gauss_hermite(int n, std::vector<double>& nodes, std::vector<double>& weights);

// Adaptive Gauss-Hermite marginal log-likelihood for a single-factor logistic
// mixed model, exact up to quadrature error.
double agh_loglik(const stopsafe::glmm::Dataset& data, const Eigen::VectorXd& beta, double tau,
                  int nodes = 15);

struct AghFit {
    Eigen::VectorXd beta;
    double tau = 0.0;
    double loglik = 0.0;
};

// Maximizes the AGH log-likelihood over (beta, log tau) by Nelder-Mead.
AghFit agh_fit(const stopsafe::glmm::Dataset& data, int nodes = 15);

// Single random intercept simulation: G groups of n observations each with
// linear predictor beta0 + u_g, u_g ~ N(0, tau).
stopsafe::glmm::Dataset simulate_single_factor(int groups, int per_group, double beta0, double tau,
                                               stopsafe::Rng& rng);

// Crossed participant x intersection design: every observation draws one
// participant uniformly and one intersection round-robin.
stopsafe::glmm::Dataset simulate_crossed(int participants, int intersections, int n_obs,
                                         double beta0, double tau_participant,
                                         double tau_intersection, stopsafe::Rng& rng);

}  // namespace oracles
