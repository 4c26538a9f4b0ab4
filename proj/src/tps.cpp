#include "svfd/tps.hpp"

#include <cmath>
#include <sstream>

#include "svfd/error.hpp"

namespace svfd {

double tps_kernel(double r) { return r > 0.0 ? r * r * std::log(r) : 0.0; }

namespace {

// Hessian of kappa(|d|) with respect to x, d = x - c. kappa'' and kappa'/r
// both diverge logarithmically at the center, whose own block is left at 0.
Mat3 kernel_hessian(const Vec3& d) {
    const double r = d.norm();
    if (r == 0.0) return Mat3::Zero();
    const Vec3 u = d / r;
    const double lr = std::log(r);
    const double k2 = 2.0 * lr + 3.0;
    const double k1r = 2.0 * lr + 1.0;
    const Mat3 uu = u * u.transpose();
    return k2 * uu + k1r * (Mat3::Identity() - uu);
}

void check_centers(const PointMatrix& c) {
    const Eigen::Index n = c.rows();
    if (n < 4) throw_validation("TPS needs at least 4 centers");
    if (!c.allFinite()) throw_validation("TPS centers contain non-finite values");
    const double scale = (c.colwise().maxCoeff() - c.colwise().minCoeff()).norm();
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            if ((c.row(i) - c.row(j)).norm() <= 1e-12 * scale) {
                std::ostringstream os;
                os << "singular TPS system: duplicate centers " << i << " and " << j;
                throw_numeric(os.str());
            }
        }
    }
    const Vec3 mean = c.colwise().mean();
    const PointMatrix centred = c.rowwise() - mean.transpose();
    const Eigen::JacobiSVD<PointMatrix> svd(centred);
    if (!(svd.singularValues()(2) > 1e-9 * svd.singularValues()(0))) {
        throw_validation("TPS centers are coplanar");
    }
}

}  // namespace

TpsMap tps_fit(const PointMatrix& centers, const PointMatrix& targets, double w_h, bool affine) {
    if (centers.rows() != targets.rows()) throw_validation("TPS centers and targets differ in count");
    if (!(w_h >= 0.0) || !std::isfinite(w_h)) throw_validation("w_H must be non-negative");
    if (!targets.allFinite()) throw_validation("TPS targets contain non-finite values");
    check_centers(centers);
    const Eigen::Index n = centers.rows();

    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) K(i, j) = tps_kernel((centers.row(i) - centers.row(j)).norm());
    }
    Eigen::MatrixXd H;
    if (w_h > 0.0) {
        H.resize(9 * n, n);
        const double s = std::sqrt(w_h);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                const Mat3 hk = kernel_hessian((centers.row(i) - centers.row(j)).transpose());
                for (int a = 0; a < 3; ++a) {
                    for (int b = 0; b < 3; ++b) H(9 * i + 3 * a + b, j) = s * hk(a, b);
                }
            }
        }
    }

    TpsMap map;
    map.centers = centers;
    map.w_h = w_h;
    map.affine = affine;

    Eigen::MatrixXd A;
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + H.rows(), 3);
    rhs.topRows(n) = targets;
    Eigen::MatrixXd basis;  // coefficients = basis * unknowns (affine case)
    if (!affine) {
        A.resize(n + H.rows(), n);
        A.topRows(n) = K;
        if (H.rows() > 0) A.bottomRows(H.rows()) = H;
    } else {
        Eigen::MatrixXd P(n, 4);
        P.col(0).setOnes();
        P.rightCols(3) = centers;
        // Null space of P^T: trailing columns of the full Q of P.
        const Eigen::HouseholderQR<Eigen::MatrixXd> qr(P);
        const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
        basis = Q.rightCols(n - 4);
        A.setZero(n + H.rows(), n);
        A.topLeftCorner(n, n - 4) = K * basis;
        A.topRightCorner(n, 4) = P;
        if (H.rows() > 0) A.bottomLeftCorner(H.rows(), n - 4) = H * basis;
    }

    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> solver(A);
    if (solver.rank() < A.cols()) {
        const auto& r = solver.matrixR();
        const double big = std::abs(r(0, 0));
        const double small = std::abs(r(A.cols() - 1, A.cols() - 1));
        std::ostringstream os;
        os << "rank-deficient TPS system (rank " << solver.rank() << " of " << A.cols()
           << ", condition estimate " << (small > 0.0 ? big / small : INFINITY) << ")";
        throw_numeric(os.str());
    }
    const Eigen::MatrixXd sol = solver.solve(rhs);
    if (!sol.allFinite()) throw_numeric("TPS solve produced non-finite coefficients");
    if (!affine) {
        map.coefficients = sol;
    } else {
        map.coefficients = basis * sol.topRows(n - 4);
        map.shift = sol.row(n - 4).transpose();
        map.linear = sol.bottomRows(3).transpose();
    }
    return map;
}

PointMatrix tps_apply(const TpsMap& map, const PointMatrix& points) {
    PointMatrix out = PointMatrix::Zero(points.rows(), 3);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        Eigen::RowVector3d acc = Eigen::RowVector3d::Zero();
        for (Eigen::Index j = 0; j < map.centers.rows(); ++j) {
            acc += tps_kernel((points.row(i) - map.centers.row(j)).norm()) * map.coefficients.row(j);
        }
        if (map.affine) acc += (map.linear * points.row(i).transpose() + map.shift).transpose();
        out.row(i) = acc;
    }
    return out;
}

}  // namespace svfd
