#include "svfd/rigid.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "svfd/distances.hpp"
#include "svfd/error.hpp"
#include "svfd/spline.hpp"

namespace svfd {

void RigidTransform::validate() const {
    if (!(scale > 0.0)) throw_validation("rigid scale must be positive");
    if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
        throw_validation("rotation is not orthonormal");
    }
    if (rotation.determinant() < 0.0) throw_validation("rotation has negative determinant");
}

PointMatrix RigidTransform::apply(const PointMatrix& x) const {
    PointMatrix out = scale * x * rotation.transpose();
    out.rowwise() += translation.transpose();
    return out;
}

WeightedPointCloud RigidTransform::apply(const WeightedPointCloud& c) const {
    WeightedPointCloud out = c;
    out.points = apply(c.points);
    if (c.normals) out.normals = PointMatrix(*c.normals * rotation.transpose());
    return out;
}

TriangleMesh RigidTransform::apply(const TriangleMesh& m) const { return m.with_vertices(apply(m.vertices)); }

RigidTransform RigidTransform::compose(const RigidTransform& o) const {
    RigidTransform r;
    r.rotation = rotation * o.rotation;
    r.scale = scale * o.scale;
    r.translation = scale * (rotation * o.translation) + translation;
    return r;
}

RigidTransform RigidTransform::inverse() const {
    RigidTransform r;
    r.rotation = rotation.transpose();
    r.scale = 1.0 / scale;
    r.translation = -(r.scale * (r.rotation * translation));
    return r;
}

Mat3 axis_angle(const Vec3& axis, double angle) {
    const double len = axis.norm();
    if (!(len > 0.0)) throw_validation("rotation axis has zero length");
    return Eigen::AngleAxisd(angle, axis / len).toRotationMatrix();
}

double rotation_angle_between(const Mat3& a, const Mat3& b) {
    const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c);
}

Anchors default_anchors(const VesselModel& model) {
    model.validate();
    const VesselPortion* root = nullptr;
    for (const auto& p : model.portions) {
        if (p.parent.empty()) {
            root = &p;
            break;
        }
    }
    if (!root) throw_validation("vessel model has no root portion");
    const CenterlineSpline s(root->control_points);
    return {s.position(0.0), s.tangent(1.0)};
}

namespace {

Vec3 barycenter(const WeightedPointCloud& c) { return (c.points.transpose() * c.weights) / c.weights.sum(); }

double max_extent(const PointMatrix& p) {
    double best = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < p.rows(); ++j) best = std::max(best, (p.row(i) - p.row(j)).squaredNorm());
    }
    return std::sqrt(best);
}

PointMatrix stride_subset(const PointMatrix& p, Eigen::Index cap) {
    if (p.rows() <= cap) return p;
    PointMatrix out(cap, 3);
    for (Eigen::Index i = 0; i < cap; ++i) out.row(i) = p.row(i * p.rows() / cap);
    return out;
}

double plain_chamfer(const PointMatrix& a, const PointMatrix& b) {
    double s = 0.0;
    for (const auto& r : nearest_neighbors(a, b)) s += r.squared_distance;
    double t = 0.0;
    for (const auto& r : nearest_neighbors(b, a)) t += r.squared_distance;
    return s / static_cast<double>(a.rows()) + t / static_cast<double>(b.rows());
}

}  // namespace

AdhocResult adhoc_rigid_align(const WeightedPointCloud& source, const WeightedPointCloud& target,
                              const Anchors& sa, const Anchors& ta) {
    if (source.size() == 0 || target.size() == 0) throw_validation("alignment needs non-empty clouds");
    if (!(sa.outlet_normal.norm() > 0.0) || !(ta.outlet_normal.norm() > 0.0)) {
        throw_validation("missing anchors: outlet normal has zero length");
    }
    const double es = max_extent(source.points);
    const double et = max_extent(target.points);
    if (!(es > 0.0) || !(et > 0.0)) throw_validation("zero extent: cloud collapses to a point");

    // Step 1: barycentres and isotropic rescaling.
    const double s = et / es;
    const Vec3 bs = barycenter(source), bt = barycenter(target);
    RigidTransform t1;
    t1.scale = s;
    t1.translation = bt - s * bs;
    // Step 2: inlet centres.
    RigidTransform t2;
    t2.translation = ta.inlet_center - t1.apply(sa.inlet_center);
    const RigidTransform t12 = t2.compose(t1);

    // Step 3: rotation about the target outlet normal through its inlet.
    const PointMatrix moved = stride_subset(t12.apply(source.points), 1000);
    const PointMatrix tgt = stride_subset(target.points, 1000);
    const Vec3 c = ta.inlet_center;
    const Vec3 axis = ta.outlet_normal.normalized();
    auto rotated = [&](double th) {
        RigidTransform r;
        r.rotation = axis_angle(axis, th);
        r.translation = c - r.rotation * c;
        return r;
    };
    auto cost = [&](double th) { return plain_chamfer(rotated(th).apply(moved), tgt); };

    const int samples = 360;
    const double step = 2.0 * std::numbers::pi / samples;
    int best_k = 0;
    double best_f = cost(0.0);
    for (int k = 1; k < samples; ++k) {
        const double f = cost(k * step);
        if (f < best_f) best_f = f, best_k = k;
    }
    // Golden-section refinement inside the neighbouring grid cells.
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = (best_k - 1) * step, hi = (best_k + 1) * step;
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = cost(x1), f2 = cost(x2);
    while (hi - lo > 1e-4) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = cost(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = cost(x2);
        }
    }
    double angle = best_k * step;
    const double mid = 0.5 * (lo + hi);
    const double fm = cost(mid);
    if (fm < best_f) angle = mid, best_f = fm;
    angle = std::remainder(angle, 2.0 * std::numbers::pi);

    AdhocResult r;
    r.transform = rotated(angle).compose(t12);
    r.angle = angle;
    r.chamfer = best_f;
    return r;
}

CpdResult cpd_rigid(const PointMatrix& Y, const PointMatrix& X, const RigidTransform& init, const CpdOptions& o) {
    if (Y.rows() == 0 || X.rows() == 0) throw_validation("CPD needs non-empty clouds");
    if (!(o.outlier_weight >= 0.0 && o.outlier_weight < 1.0)) throw_validation("outlier weight must lie in [0, 1)");
    if (o.max_iters < 1) throw_validation("CPD needs at least one iteration");
    init.validate();
    const double N = static_cast<double>(X.rows()), M = static_cast<double>(Y.rows());
    const double D = 3.0;

    RigidTransform T = init;
    PointMatrix TY = T.apply(Y);
    double sigma2 = 0.0;
    for (Eigen::Index m = 0; m < Y.rows(); ++m) {
        sigma2 += (X.rowwise() - TY.row(m)).rowwise().squaredNorm().sum();
    }
    sigma2 /= D * N * M;
    if (!(sigma2 > o.sigma2_floor)) {
        std::ostringstream os;
        os << "CPD degenerate fit: initial sigma^2 = " << sigma2;
        throw_numeric(os.str());
    }

    CpdResult res;
    res.sigma2.push_back(sigma2);
    Eigen::MatrixXd P(Y.rows(), X.rows());
    for (int it = 0; it < o.max_iters; ++it) {
        // E-step.
        const double c = std::pow(2.0 * std::numbers::pi * sigma2, D / 2.0) * o.outlier_weight /
                          (1.0 - o.outlier_weight) * M / N;
        for (Eigen::Index n = 0; n < X.rows(); ++n) {
            double den = c;
            for (Eigen::Index m = 0; m < Y.rows(); ++m) {
                const double e = std::exp(-(X.row(n) - TY.row(m)).squaredNorm() / (2.0 * sigma2));
                P(m, n) = e;
                den += e;
            }
            if (den > 0.0) P.col(n) /= den;
        }
        // M-step.
        const Eigen::VectorXd pt1 = P.colwise().sum().transpose();  // N
        const Eigen::VectorXd p1 = P.rowwise().sum();                // M
        const double np = p1.sum();
        if (!(np > 0.0)) throw_numeric("CPD lost all correspondences (every point treated as outlier)");
        const Vec3 mux = X.transpose() * pt1 / np;
        const Vec3 muy = Y.transpose() * p1 / np;
        const PointMatrix xh = X.rowwise() - mux.transpose();
        const PointMatrix yh = Y.rowwise() - muy.transpose();
        const Mat3 A = xh.transpose() * P.transpose() * yh;
        const Eigen::JacobiSVD<Mat3> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
        Mat3 C = Mat3::Identity();
        C(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
        const Mat3 R = svd.matrixU() * C * svd.matrixV().transpose();
        const double trAR = (A.transpose() * R).trace();
        const double yy = (yh.array().square().colwise() * p1.array()).sum();
        const double xx = (xh.array().square().colwise() * pt1.array()).sum();
        const double s = o.estimate_scale ? trAR / yy : 1.0;
        T.rotation = R;
        T.scale = s;
        T.translation = mux - s * R * muy;
        const double prev = sigma2;
        sigma2 = (xx - s * trAR) / (np * D);
        if (!o.estimate_scale) sigma2 = (xx - 2.0 * trAR + yy) / (np * D);
        TY = T.apply(Y);
        res.iterations = it + 1;
        if (!(sigma2 > o.sigma2_floor)) {
            // Exact fit: nothing left to resolve.
            sigma2 = o.sigma2_floor;
            res.sigma2.push_back(sigma2);
            res.converged = true;
            break;
        }
        res.sigma2.push_back(sigma2);
        if (std::abs(prev - sigma2) < o.tolerance) {
            res.converged = true;
            break;
        }
    }
    if (!(T.scale > 0.0)) throw_numeric("CPD produced a non-positive scale");
    res.transform = T;
    return res;
}

RigidTransform cpd_rigid(const WeightedPointCloud& source, const WeightedPointCloud& target,
                         const RigidTransform& init, double outlier_weight) {
    CpdOptions o;
    o.outlier_weight = outlier_weight;
    return cpd_rigid(source.points, target.points, init, o).transform;
}

}  // namespace svfd
