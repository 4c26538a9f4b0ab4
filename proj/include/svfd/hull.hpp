#pragma once

#include <array>
#include <vector>

#include "svfd/geometry.hpp"

namespace svfd {

/// Convex hull of a 3D point set as outward-oriented triangles.
struct ConvexHull {
    std::vector<std::array<int, 3>> faces;  // indices into the input points
    std::vector<Vec3> normals;              // unit, outward
    std::vector<double> offsets;            // plane: n . x = offset

    /// Largest plane violation max_f (n_f . p - d_f): negative inside, and a
    /// lower bound on the Euclidean distance outside.
    double signed_distance(const Vec3& p) const;
    bool contains(const Vec3& p, double tol = 0.0) const { return signed_distance(p) <= tol; }
};

/// Incremental hull. Throws if the points are (nearly) coplanar.
ConvexHull convex_hull(const PointMatrix& points);

}  // namespace svfd
