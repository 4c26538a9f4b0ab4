#pragma once

#include <vector>

#include "svfd/geometry.hpp"

namespace svfd {

/// x -> scale * R x + t
struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
    double scale = 1.0;

    void validate() const;
    Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
    PointMatrix apply(const PointMatrix& x) const;
    WeightedPointCloud apply(const WeightedPointCloud& c) const;
    TriangleMesh apply(const TriangleMesh& m) const;
    /// (this o other)(x) = this(other(x))
    RigidTransform compose(const RigidTransform& other) const;
    RigidTransform inverse() const;
};

Mat3 axis_angle(const Vec3& axis, double angle);

/// Landmarks for the three-step initial alignment.
struct Anchors {
    Vec3 inlet_center = Vec3::Zero();
    Vec3 outlet_normal = Vec3::UnitZ();
};

/// Inlet centre and outlet tangent of the root portion of a vessel model.
Anchors default_anchors(const VesselModel& model);

struct AdhocResult {
    RigidTransform transform;
    double angle = 0.0;  // rotation about the target outlet normal
    double chamfer = 0.0;
};

/// Barycentre + max-extent rescaling, inlet translation, then the rotation
/// about the target outlet normal (through the inlet) minimizing Chamfer.
AdhocResult adhoc_rigid_align(const WeightedPointCloud& source, const WeightedPointCloud& target,
                              const Anchors& source_anchors, const Anchors& target_anchors);

struct CpdOptions {
    double outlier_weight = 0.05;
    int max_iters = 150;
    double tolerance = 1e-10;    // on the change of sigma^2
    double sigma2_floor = 1e-12;
    bool estimate_scale = true;
};

struct CpdResult {
    RigidTransform transform;
    std::vector<double> sigma2;  // after initialization and after every iteration
    int iterations = 0;
    bool converged = false;
};

/// Rigid coherent point drift: moves `source` onto `target` starting from `init`.
CpdResult cpd_rigid(const PointMatrix& source, const PointMatrix& target, const RigidTransform& init,
                    const CpdOptions& opts = {});
RigidTransform cpd_rigid(const WeightedPointCloud& source, const WeightedPointCloud& target,
                         const RigidTransform& init, double outlier_weight);

double rotation_angle_between(const Mat3& a, const Mat3& b);

}  // namespace svfd
