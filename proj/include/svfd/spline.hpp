#pragma once

#include <vector>

#include "svfd/geometry.hpp"

namespace svfd {

/// Interpolating natural cubic spline through centerline knots, chord-length
/// parametrized and exposed through a normalized parameter t in [0,1].
class CenterlineSpline {
public:
    explicit CenterlineSpline(const std::vector<Vec3>& knots);

    Vec3 position(double t) const;
    /// Unit tangent.
    Vec3 tangent(double t) const;
    double length() const { return arc_.back(); }

    /// Parameter reached after walking `fraction` of the total arc length.
    double param_at_arclength(double fraction) const;

    struct Samples {
        std::vector<Vec3> points;
        std::vector<Vec3> tangents;
        std::vector<double> params;
    };
    /// n samples at uniform arclength fractions j/(n-1).
    Samples sample_uniform(int n) const;

private:
    Vec3 derivative(double u) const;
    Vec3 eval(double u) const;
    int segment(double u) const;

    std::vector<double> u_;       // knot parameters (cumulative chord)
    std::vector<Vec3> knots_;
    std::vector<Vec3> second_;    // second derivatives at knots
    std::vector<double> table_u_;  // dense arclength table
    std::vector<double> arc_;
};

/// Orthonormal moving frame: tangent plus two cross-section axes.
struct Frame {
    Vec3 tangent;
    Vec3 normal;
    Vec3 binormal;
};

/// Rotation-minimizing (Bishop) frames by double-reflection transport of the
/// initial frame built from `reference` projected off the first tangent.
std::vector<Frame> bishop_frames(const std::vector<Vec3>& points,
                                 const std::vector<Vec3>& tangents, const Vec3& reference);
/// Same, with tangents estimated by finite differences of the samples.
std::vector<Frame> bishop_frames(const std::vector<Vec3>& points, const Vec3& reference);

/// Zero-angle reference from a centerline's endpoints: the endpoint chord
/// projected orthogonally to the initial tangent.
Vec3 endpoint_reference(const std::vector<Vec3>& centerline, const Vec3& initial_tangent);

/// Linear interpolation of radius samples spread uniformly over t in [0,1].
double radius_at(const std::vector<double>& radii, double t);

}  // namespace svfd
