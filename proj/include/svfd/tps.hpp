#pragma once

#include "svfd/geometry.hpp"

namespace svfd {

/// g(x) = sum_j g_j kappa(|x - c_j|) [+ A x + b], kappa(r) = r^2 log r.
struct TpsMap {
    PointMatrix centers;
    PointMatrix coefficients;  // one row g_j per center
    double w_h = 0.0;
    bool affine = false;
    Mat3 linear = Mat3::Zero();  // used when affine
    Vec3 shift = Vec3::Zero();
};

double tps_kernel(double r);

/// Penalized least squares over the RBF span. With `affine`, a degree-one
/// polynomial is added and the coefficients are constrained orthogonal to it.
TpsMap tps_fit(const PointMatrix& centers, const PointMatrix& targets, double w_h, bool affine = false);

PointMatrix tps_apply(const TpsMap& map, const PointMatrix& points);

}  // namespace svfd
