#include "stopsafe/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace stopsafe::geo {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kEnvelopeM = 200000.0;

}  // namespace

double haversine_m(const GeoPoint& a, const GeoPoint& b) {
    const double dlat = (b.lat - a.lat) * kDegToRad;
    const double dlon = (b.lon - a.lon) * kDegToRad;
    const double lat1 = a.lat * kDegToRad;
    const double lat2 = b.lat * kDegToRad;
    const double sl = std::sin(dlat / 2.0);
    const double so = std::sin(dlon / 2.0);
    double h = sl * sl + std::cos(lat1) * std::cos(lat2) * so * so;
    h = std::clamp(h, 0.0, 1.0);
    return 2.0 * kEarthRadiusM * std::atan2(std::sqrt(h), std::sqrt(1.0 - h));
}

LocalPoint to_local_one(const GeoPoint& p, const GeoPoint& origin) {
    if (haversine_m(p, origin) > kEnvelopeM) {
        throw OutOfEnvelope("point (" + std::to_string(p.lat) + ", " + std::to_string(p.lon) +
                            ") is more than 200 km from the projection origin");
    }
    const double x = kEarthRadiusM * (p.lon - origin.lon) * kDegToRad * std::cos(origin.lat * kDegToRad);
    const double y = kEarthRadiusM * (p.lat - origin.lat) * kDegToRad;
    return LocalPoint{x, y};
}

std::vector<LocalPoint> to_local(const std::vector<GeoPoint>& points, const GeoPoint& origin) {
    std::vector<LocalPoint> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(to_local_one(p, origin));
    return out;
}

GeoPoint from_local(const LocalPoint& p, const GeoPoint& origin) {
    GeoPoint g;
    g.lat = origin.lat + (p.y / kEarthRadiusM) / kDegToRad;
    g.lon = origin.lon + (p.x / (kEarthRadiusM * std::cos(origin.lat * kDegToRad))) / kDegToRad;
    return g;
}

std::vector<double> path_distance(const std::vector<GeoPoint>& traj) {
    std::vector<double> out(traj.size(), 0.0);
    for (std::size_t i = 1; i < traj.size(); ++i) {
        out[i] = out[i - 1] + haversine_m(traj[i - 1], traj[i]);
    }
    return out;
}

}  // namespace stopsafe::geo
