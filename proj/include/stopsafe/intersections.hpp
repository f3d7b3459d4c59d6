#pragma once

#include <string>
#include <vector>

#include "stopsafe/geo.hpp"
#include "stopsafe/records.hpp"

namespace stopsafe::intersections {

class InvalidParameter : public Error {
public:
    using Error::Error;
};

class NonConvergence : public Error {
public:
    using Error::Error;
};

inline constexpr int kNoise = -1;

struct ClusterAssignment {
    std::vector<int> labels;  // per point: cluster id in [0, cluster_count) or kNoise
    int cluster_count = 0;
    int noise_count = 0;
};

// Plain DBSCAN over planar points. A point is core iff it has >= min_pts
// neighbours within eps (distance <= eps, itself included). Clusters are
// maximal density-connected sets; a border point joins the first cluster
// whose expansion reaches it in scan order.
ClusterAssignment dbscan(const std::vector<geo::LocalPoint>& points, double eps, int min_pts);

struct MedianResult {
    geo::LocalPoint point;
    int iterations = 0;
    bool converged = true;
    // Objective sum ||x_i - y|| after each iterate, starting at the mean.
    std::vector<double> objective_trace;
};

// Weiszfeld fixed-point iteration started at the coordinate-wise mean.
// When an iterate lands within tol of a data point, that point's optimality
// is decided by the subgradient condition; non-optimal anchors are escaped
// by a tol-length step along the descent direction.
MedianResult geometric_median(const std::vector<geo::LocalPoint>& points, double tol = 1e-6,
                              int max_iter = 200);

struct Intersection {
    std::string id;
    geo::GeoPoint center;
    ControlType control_type = ControlType::unknown;
    enum class Source { clustered, database } source = Source::clustered;
    int support = 0;  // stop-sign detections backing the location
};

std::string to_string(Intersection::Source s);

struct BuildResult {
    std::vector<Intersection> intersections;
    std::vector<DetectionRecord> noise_detections;
    int cluster_count = 0;
};

// Clusters stop-sign detections, centers each cluster with the geometric
// median, and reconciles against the external database: a database record
// within merge_radius of a cluster center wins (authoritative id and
// control type); unmatched database records pass through; unmatched cluster
// centers get generated ids with control type unknown.
BuildResult build_intersections(const std::vector<DetectionRecord>& detections,
                                const std::vector<IntersectionDbEntry>& db, double eps, int min_pts,
                                double merge_radius);

void write_intersections_csv(const std::string& path, const std::vector<Intersection>& list);

}  // namespace stopsafe::intersections
