#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "stopsafe/intersections.hpp"
#include "stopsafe/rng.hpp"

using namespace stopsafe;
using geo::LocalPoint;
using intersections::ClusterAssignment;
using intersections::dbscan;
using intersections::geometric_median;
using intersections::kNoise;

namespace {

DetectionRecord det(double lat, double lon, int64_t t = 0) {
    DetectionRecord d;
    d.timestamp = t;
    d.participant_id = "P";
    d.drive_id = "D";
    d.lat = lat;
    d.lon = lon;
    d.class_label = "stop_sign";
    d.confidence = 0.9;
    return d;
}

}  // namespace

TEST_CASE("dbscan rejects invalid parameters") {
    CHECK_THROWS_AS(dbscan({}, 0.0, 3), intersections::InvalidParameter);
    CHECK_THROWS_AS(dbscan({}, 10.0, 0), intersections::InvalidParameter);
}

TEST_CASE("dbscan on empty input") {
    const ClusterAssignment a = dbscan({}, 10.0, 3);
    CHECK(a.cluster_count == 0);
    CHECK(a.noise_count == 0);
    CHECK(a.labels.empty());
}

TEST_CASE("dbscan separates two far blobs with no noise") {
    Rng rng(5);
    std::vector<LocalPoint> pts;
    for (int i = 0; i < 10; ++i) pts.push_back({rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)});
    for (int i = 0; i < 10; ++i)
        pts.push_back({1000.0 + rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)});
    const ClusterAssignment a = dbscan(pts, 50.0, 5);
    CHECK(a.cluster_count == 2);
    CHECK(a.noise_count == 0);
    for (int i = 0; i < 10; ++i) CHECK(a.labels[i] == a.labels[0]);
    for (int i = 10; i < 20; ++i) CHECK(a.labels[i] == a.labels[10]);
    CHECK(a.labels[0] != a.labels[10]);
}

TEST_CASE("dbscan matches the epsilon-graph oracle on random instances") {
    Rng rng(42);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<LocalPoint> pts;
        for (int i = 0; i < 200; ++i) pts.push_back({rng.uniform(0, 500), rng.uniform(0, 500)});
        const double eps = (rep % 3 == 0) ? 10.0 : (rep % 3 == 1) ? 30.0 : 50.0;
        const int min_pts = rep % 2 == 0 ? 3 : 5;
        const auto mine = dbscan(pts, eps, min_pts);
        const auto ref = oracles::brute_dbscan(pts, eps, min_pts);
        CHECK(mine.cluster_count == ref.cluster_count);
        CHECK(mine.noise_count == ref.noise_count);
        CHECK(oracles::canonical_labels(mine.labels) == oracles::canonical_labels(ref.labels));
    }
}

TEST_CASE("dbscan labels are invariant under input permutation") {
    Rng rng(77);
    std::vector<LocalPoint> pts;
    for (int i = 0; i < 150; ++i) pts.push_back({rng.uniform(0, 300), rng.uniform(0, 300)});
    const auto base = dbscan(pts, 30.0, 4);

    std::vector<int> perm(pts.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
    for (int rep = 0; rep < 5; ++rep) {
        for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_int(static_cast<int>(i))]);
        std::vector<LocalPoint> shuffled(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) shuffled[i] = pts[perm[i]];
        const auto again = dbscan(shuffled, 30.0, 4);
        // Map back to original order before canonicalizing.
        std::vector<int> unshuffled(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) unshuffled[perm[i]] = again.labels[i];
        CHECK(again.cluster_count == base.cluster_count);
        CHECK(again.noise_count == base.noise_count);
        CHECK(oracles::canonical_labels(unshuffled) == oracles::canonical_labels(base.labels));
    }
}

TEST_CASE("geometric median of identical points is the point") {
    const std::vector<LocalPoint> pts(5, LocalPoint{3.5, -2.5});
    const auto r = geometric_median(pts, 1e-9, 100);
    CHECK(r.point.x == doctest::Approx(3.5));
    CHECK(r.point.y == doctest::Approx(-2.5));
    CHECK(r.converged);
}

TEST_CASE("geometric median of unit-square corners is the center") {
    const std::vector<LocalPoint> pts = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
    const auto r = geometric_median(pts, 1e-7, 500);
    CHECK(std::abs(r.point.x - 0.5) < 1e-6);
    CHECK(std::abs(r.point.y - 0.5) < 1e-6);
}

TEST_CASE("geometric median matches the grid-search oracle on a fixed triangle") {
    const std::vector<LocalPoint> pts = {{0, 0}, {2, 0}, {1, 5}};
    const auto r = geometric_median(pts, 1e-7, 500);
    const auto g = oracles::grid_search_median(pts);
    CHECK(std::abs(r.point.x - g.x) < 1e-3);
    CHECK(std::abs(r.point.y - g.y) < 1e-3);
}

TEST_CASE("weiszfeld objective never increases") {
    Rng rng(9);
    for (int rep = 0; rep < 25; ++rep) {
        std::vector<LocalPoint> pts;
        const int n = 3 + rng.uniform_int(18);
        for (int i = 0; i < n; ++i) pts.push_back({rng.uniform(0, 3), rng.uniform(0, 3)});
        const auto r = geometric_median(pts, 1e-8, 500);
        for (std::size_t k = 1; k < r.objective_trace.size(); ++k) {
            CHECK(r.objective_trace[k] <= r.objective_trace[k - 1] * (1.0 + 1e-12) + 1e-12);
        }
    }
}

TEST_CASE("geometric median returns an anchor data point when it is optimal") {
    // Heavy multiplicity at the origin makes it the median.
    const std::vector<LocalPoint> pts = {{0, 0}, {0, 0}, {0, 0}, {1, 0}, {0, 1}};
    const auto r = geometric_median(pts, 1e-9, 200);
    CHECK(std::abs(r.point.x) < 1e-9);
    CHECK(std::abs(r.point.y) < 1e-9);
}

TEST_CASE("geometric median is translation equivariant") {
    Rng rng(31);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<LocalPoint> pts;
        const int n = 4 + rng.uniform_int(10);
        for (int i = 0; i < n; ++i) pts.push_back({rng.uniform(0, 2), rng.uniform(0, 2)});
        const double tol = 1e-7;
        const auto base = geometric_median(pts, tol, 500);
        const double dx = 17.25, dy = -4.5;
        std::vector<LocalPoint> moved;
        for (const auto& p : pts) moved.push_back({p.x + dx, p.y + dy});
        const auto shifted = geometric_median(moved, tol, 500);
        CHECK(std::abs(shifted.point.x - dx - base.point.x) < 2 * tol + 1e-9);
        CHECK(std::abs(shifted.point.y - dy - base.point.y) < 2 * tol + 1e-9);
    }
}

TEST_CASE("build_intersections: one tight blob, empty database") {
    Rng rng(3);
    std::vector<DetectionRecord> dets;
    for (int i = 0; i < 10; ++i) {
        dets.push_back(det(41.25 + rng.normal(0, 3.0) / 111194.93,
                           -95.93 + rng.normal(0, 3.0) / 83600.0, i));
    }
    const auto r = intersections::build_intersections(dets, {}, 50.0, 5, 25.0);
    REQUIRE(r.intersections.size() == 1);
    CHECK(r.intersections[0].source == intersections::Intersection::Source::clustered);
    CHECK(r.intersections[0].support == 10);
    CHECK(r.intersections[0].control_type == ControlType::unknown);
    CHECK(r.noise_detections.empty());
}

TEST_CASE("build_intersections: database record wins within merge radius") {
    Rng rng(3);
    std::vector<DetectionRecord> dets;
    for (int i = 0; i < 10; ++i) {
        dets.push_back(det(41.25 + rng.normal(0, 3.0) / 111194.93,
                           -95.93 + rng.normal(0, 3.0) / 83600.0, i));
    }
    // 5 m north of the blob center.
    const std::vector<IntersectionDbEntry> db = {
        {"IA-042", 41.25 + 5.0 / 111194.93, -95.93, ControlType::all_way}};
    const auto r = intersections::build_intersections(dets, db, 50.0, 5, 25.0);
    REQUIRE(r.intersections.size() == 1);
    CHECK(r.intersections[0].id == "IA-042");
    CHECK(r.intersections[0].source == intersections::Intersection::Source::database);
    CHECK(r.intersections[0].control_type == ControlType::all_way);
    CHECK(r.intersections[0].support == 10);
}

TEST_CASE("build_intersections: two blobs plus one unrelated database entry") {
    Rng rng(4);
    std::vector<DetectionRecord> dets;
    for (int i = 0; i < 8; ++i)
        dets.push_back(det(41.25 + rng.normal(0, 2.0) / 111194.93, -95.93, i));
    for (int i = 0; i < 8; ++i)
        dets.push_back(det(41.259 + rng.normal(0, 2.0) / 111194.93, -95.93, 100 + i));
    const std::vector<IntersectionDbEntry> db = {
        {"IA-007", 41.295, -95.93, ControlType::minor_road_only}};  // ~5 km north
    const auto r = intersections::build_intersections(dets, db, 50.0, 5, 25.0);
    CHECK(r.intersections.size() == 3);

    // Pairwise separation invariant.
    for (std::size_t i = 0; i < r.intersections.size(); ++i) {
        for (std::size_t j = i + 1; j < r.intersections.size(); ++j) {
            CHECK(geo::haversine_m(r.intersections[i].center, r.intersections[j].center) >= 25.0);
        }
    }
}

TEST_CASE("build_intersections reports noise and filters non stop signs") {
    Rng rng(6);
    std::vector<DetectionRecord> dets;
    for (int i = 0; i < 6; ++i)
        dets.push_back(det(41.25 + rng.normal(0, 2.0) / 111194.93, -95.93, i));
    dets.push_back(det(41.31, -95.93, 50));  // lone detection -> noise
    DetectionRecord light = det(41.25, -95.93, 60);
    light.class_label = "traffic_light";
    dets.push_back(light);
    const auto r = intersections::build_intersections(dets, {}, 50.0, 5, 25.0);
    CHECK(r.intersections.size() == 1);
    CHECK(r.noise_detections.size() == 1);
    CHECK(r.intersections[0].support == 6);  // the traffic light never counts
}
