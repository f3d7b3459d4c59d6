#include "stopsafe/intersections.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>

#include "stopsafe/csv.hpp"

namespace stopsafe::intersections {

namespace {

double dist2(const geo::LocalPoint& a, const geo::LocalPoint& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return dx * dx + dy * dy;
}

// Indices of all points within eps of points[i], including i itself.
// Quadratic scan; detection sets here are a few thousand points.
std::vector<int> neighbors_of(const std::vector<geo::LocalPoint>& pts, int i, double eps2) {
    std::vector<int> out;
    for (int j = 0; j < static_cast<int>(pts.size()); ++j) {
        if (dist2(pts[i], pts[j]) <= eps2) out.push_back(j);
    }
    return out;
}

}  // namespace

ClusterAssignment dbscan(const std::vector<geo::LocalPoint>& points, double eps, int min_pts) {
    if (!(eps > 0.0)) throw InvalidParameter("dbscan: eps must be > 0");
    if (min_pts < 1) throw InvalidParameter("dbscan: min_pts must be >= 1");

    const int n = static_cast<int>(points.size());
    const double eps2 = eps * eps;
    constexpr int kUnvisited = -2;

    // Canonical scan order by coordinates: border points near two clusters
    // always attach to the same cluster regardless of input order.
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return std::tie(points[a].x, points[a].y) < std::tie(points[b].x, points[b].y);
    });

    ClusterAssignment out;
    out.labels.assign(n, kUnvisited);

    int next_cluster = 0;
    for (int i : order) {
        if (out.labels[i] != kUnvisited) continue;
        std::vector<int> nbrs = neighbors_of(points, i, eps2);
        if (static_cast<int>(nbrs.size()) < min_pts) {
            out.labels[i] = kNoise;
            continue;
        }
        const int cluster = next_cluster++;
        out.labels[i] = cluster;
        std::deque<int> seeds(nbrs.begin(), nbrs.end());
        while (!seeds.empty()) {
            const int q = seeds.front();
            seeds.pop_front();
            if (out.labels[q] == kNoise) out.labels[q] = cluster;  // border point claimed
            if (out.labels[q] != kUnvisited) continue;
            out.labels[q] = cluster;
            std::vector<int> qn = neighbors_of(points, q, eps2);
            if (static_cast<int>(qn.size()) >= min_pts) {
                for (int r : qn) seeds.push_back(r);
            }
        }
    }

    out.cluster_count = next_cluster;
    out.noise_count = static_cast<int>(std::count(out.labels.begin(), out.labels.end(), kNoise));
    return out;
}

MedianResult geometric_median(const std::vector<geo::LocalPoint>& points, double tol, int max_iter) {
    if (points.empty()) throw InvalidParameter("geometric_median: empty point set");
    if (!(tol > 0.0)) throw InvalidParameter("geometric_median: tol must be > 0");

    MedianResult res;
    const auto objective = [&](const geo::LocalPoint& y) {
        double s = 0.0;
        for (const auto& p : points) s += std::sqrt(dist2(p, y));
        return s;
    };

    geo::LocalPoint y{0.0, 0.0};
    for (const auto& p : points) {
        y.x += p.x;
        y.y += p.y;
    }
    y.x /= static_cast<double>(points.size());
    y.y /= static_cast<double>(points.size());
    res.objective_trace.push_back(objective(y));

    for (int it = 0; it < max_iter; ++it) {
        res.iterations = it + 1;

        // Anchor handling: if y sits on (or within tol of) a data point, the
        // plain update divides by ~0. Test that point's own optimality via
        // the subgradient condition ||sum_{i!=k}(x_i-x_k)/d_i|| <= 1.
        int anchor = -1;
        for (int k = 0; k < static_cast<int>(points.size()); ++k) {
            if (std::sqrt(dist2(points[k], y)) < tol) {
                anchor = k;
                break;
            }
        }
        if (anchor >= 0) {
            double gx = 0.0, gy = 0.0;
            for (int i = 0; i < static_cast<int>(points.size()); ++i) {
                if (i == anchor) continue;
                const double d = std::sqrt(dist2(points[i], points[anchor]));
                if (d == 0.0) continue;  // coincident points exert no net pull
                gx += (points[i].x - points[anchor].x) / d;
                gy += (points[i].y - points[anchor].y) / d;
            }
            const double pull = std::hypot(gx, gy);
            if (pull <= 1.0) {
                res.point = points[anchor];
                res.objective_trace.push_back(objective(res.point));
                return res;
            }
            // Escape the anchor by tol along the descent direction.
            y.x = points[anchor].x + tol * gx / pull;
            y.y = points[anchor].y + tol * gy / pull;
        }

        geo::LocalPoint next{0.0, 0.0};
        double wsum = 0.0;
        for (const auto& p : points) {
            const double d = std::sqrt(dist2(p, y));
            const double w = 1.0 / d;
            next.x += p.x * w;
            next.y += p.y * w;
            wsum += w;
        }
        next.x /= wsum;
        next.y /= wsum;

        const double moved = std::hypot(next.x - y.x, next.y - y.y);
        y = next;
        res.objective_trace.push_back(objective(y));
        if (moved < tol) {
            res.point = y;
            return res;
        }
    }

    res.point = y;
    res.converged = false;
    return res;
}

std::string to_string(Intersection::Source s) {
    return s == Intersection::Source::database ? "database" : "clustered";
}

BuildResult build_intersections(const std::vector<DetectionRecord>& detections,
                                const std::vector<IntersectionDbEntry>& db, double eps, int min_pts,
                                double merge_radius) {
    BuildResult out;

    std::vector<DetectionRecord> candidates;
    for (const auto& d : detections) {
        if (d.class_label == "stop_sign") candidates.push_back(d);
    }
    // Deterministic scan order for clustering regardless of file order.
    std::sort(candidates.begin(), candidates.end(), [](const DetectionRecord& a, const DetectionRecord& b) {
        return std::tie(a.lat, a.lon, a.timestamp) < std::tie(b.lat, b.lon, b.timestamp);
    });

    struct Cluster {
        geo::GeoPoint center;
        int support = 0;
    };
    std::vector<Cluster> clusters;

    if (!candidates.empty()) {
        geo::GeoPoint origin{0.0, 0.0};
        for (const auto& d : candidates) {
            origin.lat += d.lat;
            origin.lon += d.lon;
        }
        origin.lat /= static_cast<double>(candidates.size());
        origin.lon /= static_cast<double>(candidates.size());

        std::vector<geo::GeoPoint> geos;
        geos.reserve(candidates.size());
        for (const auto& d : candidates) geos.push_back({d.lat, d.lon});
        const std::vector<geo::LocalPoint> local = geo::to_local(geos, origin);

        const ClusterAssignment assign = dbscan(local, eps, min_pts);
        std::vector<std::vector<geo::LocalPoint>> members(assign.cluster_count);
        for (std::size_t i = 0; i < local.size(); ++i) {
            if (assign.labels[i] == kNoise) {
                out.noise_detections.push_back(candidates[i]);
            } else {
                members[assign.labels[i]].push_back(local[i]);
            }
        }
        out.cluster_count = assign.cluster_count;
        for (const auto& m : members) {
            const MedianResult med = geometric_median(m, 1e-4, 500);
            clusters.push_back({geo::from_local(med.point, origin), static_cast<int>(m.size())});
        }
    }

    // Reconcile with the database. A cluster adopts the nearest database
    // record within merge_radius; several clusters may fold into one record.
    std::map<std::string, int> db_support;  // db id -> summed detection support
    std::vector<bool> cluster_matched(clusters.size(), false);
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        double best = merge_radius;
        const IntersectionDbEntry* best_entry = nullptr;
        for (const auto& e : db) {
            const double d = geo::haversine_m(clusters[c].center, {e.lat, e.lon});
            if (d <= best) {
                best = d;
                best_entry = &e;
            }
        }
        if (best_entry) {
            cluster_matched[c] = true;
            db_support[best_entry->id] += clusters[c].support;
        }
    }

    for (const auto& e : db) {
        Intersection x;
        x.id = e.id;
        x.center = {e.lat, e.lon};
        x.control_type = e.control_type;
        x.source = Intersection::Source::database;
        auto it = db_support.find(e.id);
        x.support = it == db_support.end() ? 0 : it->second;
        out.intersections.push_back(std::move(x));
    }
    int generated = 0;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        if (cluster_matched[c]) continue;
        Intersection x;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "CL-%04d", ++generated);
        x.id = buf;
        x.center = clusters[c].center;
        x.control_type = ControlType::unknown;
        x.source = Intersection::Source::clustered;
        x.support = clusters[c].support;
        out.intersections.push_back(std::move(x));
    }

    // Enforce the pairwise separation invariant. Database entries outrank
    // clustered ones; ties break on support then id.
    std::stable_sort(out.intersections.begin(), out.intersections.end(),
                     [](const Intersection& a, const Intersection& b) {
                         const bool adb = a.source == Intersection::Source::database;
                         const bool bdb = b.source == Intersection::Source::database;
                         if (adb != bdb) return adb;
                         if (a.support != b.support) return a.support > b.support;
                         return a.id < b.id;
                     });
    std::vector<Intersection> kept;
    for (auto& x : out.intersections) {
        bool clash = false;
        for (const auto& k : kept) {
            if (geo::haversine_m(x.center, k.center) < merge_radius) {
                clash = true;
                break;
            }
        }
        if (!clash) kept.push_back(std::move(x));
    }
    std::sort(kept.begin(), kept.end(),
              [](const Intersection& a, const Intersection& b) { return a.id < b.id; });
    out.intersections = std::move(kept);
    return out;
}

void write_intersections_csv(const std::string& path, const std::vector<Intersection>& list) {
    csv::Writer w(path);
    w.write_row({"id", "lat", "lon", "control_type", "source", "support"});
    for (const auto& x : list) {
        w.write_row({x.id, csv::format_double(x.center.lat, 7), csv::format_double(x.center.lon, 7),
                     stopsafe::to_string(x.control_type), to_string(x.source),
                     std::to_string(x.support)});
    }
}

}  // namespace stopsafe::intersections
