#pragma once

#include <vector>

#include "stopsafe/errors.hpp"

namespace stopsafe::geo {

inline constexpr double kEarthRadiusM = 6371000.0;

class OutOfEnvelope : public Error {
public:
    using Error::Error;
};

struct GeoPoint {
    double lat = 0.0;  // degrees, [-90, 90]
    double lon = 0.0;  // degrees, [-180, 180]
};

// Planar point in meters east/north of a projection origin.
struct LocalPoint {
    double x = 0.0;
    double y = 0.0;
};

// Great-circle distance on a sphere of radius 6,371,000 m.
double haversine_m(const GeoPoint& a, const GeoPoint& b);

// Equirectangular projection about `origin`:
//   x = R * dlon_rad * cos(lat_origin), y = R * dlat_rad.
// Valid within 200 km of the origin; throws OutOfEnvelope beyond that.
std::vector<LocalPoint> to_local(const std::vector<GeoPoint>& points, const GeoPoint& origin);
LocalPoint to_local_one(const GeoPoint& point, const GeoPoint& origin);

// Inverse of to_local_one.
GeoPoint from_local(const LocalPoint& p, const GeoPoint& origin);

// Cumulative great-circle arc length per vertex; first entry is 0.
std::vector<double> path_distance(const std::vector<GeoPoint>& traj);

}  // namespace stopsafe::geo
