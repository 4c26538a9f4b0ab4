#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "svfd/distances.hpp"
#include "svfd/error.hpp"

namespace svfd {

void SinkhornConfig::validate() const {
    if (!(epsilon > 0.0)) throw_validation("sinkhorn.epsilon must be positive");
    if (!(scaling > 0.0 && scaling < 1.0)) throw_validation("sinkhorn.scaling must lie in (0, 1)");
    if (max_iters < 1) throw_validation("sinkhorn.max_iters must be at least 1");
    if (!(tolerance > 0.0)) throw_validation("sinkhorn.tolerance must be positive");
}

namespace {

Eigen::MatrixXd sq_cost(const PointMatrix& x, const PointMatrix& y) {
    const Eigen::VectorXd xn = x.rowwise().squaredNorm();
    const Eigen::VectorXd yn = y.rowwise().squaredNorm();
    Eigen::MatrixXd c = -2.0 * x * y.transpose();
    c.colwise() += xn;
    c.rowwise() += yn.transpose();
    return c.cwiseMax(0.0);
}

Eigen::VectorXd safe_log(const Eigen::VectorXd& w) {
    Eigen::VectorXd out(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        out(i) = w(i) > 0.0 ? std::log(w(i)) : -std::numeric_limits<double>::infinity();
    }
    return out;
}

// out_i = -eps * log sum_j exp(logw_j + (h_j - C_ij) / eps), with C given
// column-major as (n x m) so that row i is strided; we pass Ct (m x n) and
// walk its columns instead.
void softmin(const Eigen::MatrixXd& ct, const Eigen::VectorXd& logw, const Eigen::VectorXd& h, double eps,
             Eigen::VectorXd& out) {
    const Eigen::Index n = ct.cols();
    const Eigen::Index m = ct.rows();
    out.resize(n);
    Eigen::VectorXd buf(m);
    for (Eigen::Index i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < m; ++j) {
            buf(j) = logw(j) + (h(j) - ct(j, i)) / eps;
            mx = std::max(mx, buf(j));
        }
        double s = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) s += std::exp(buf(j) - mx);
        out(i) = -eps * (mx + std::log(s));
    }
}

struct Schedule {
    std::vector<double> levels;
};

Schedule make_schedule(double diameter_sq, const SinkhornConfig& cfg) {
    Schedule s;
    double e = std::max(diameter_sq, cfg.epsilon);
    while (e > cfg.epsilon) {
        s.levels.push_back(e);
        e *= cfg.scaling;
    }
    s.levels.push_back(cfg.epsilon);
    return s;
}

struct Dual {
    Eigen::VectorXd f;
    Eigen::VectorXd g;
    int iterations = 0;
    double residual = 0.0;
};

[[noreturn]] void fail_convergence(int iters, double residual) {
    std::ostringstream os;
    os << "sinkhorn did not converge within " << iters << " iterations (final residual " << residual << ")";
    throw_numeric(os.str());
}

Dual solve_cross(const Eigen::MatrixXd& c, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                 const Schedule& sched, const SinkhornConfig& cfg) {
    const Eigen::MatrixXd ct = c.transpose();
    const Eigen::VectorXd la = safe_log(a), lb = safe_log(b);
    Dual d;
    d.f = Eigen::VectorXd::Zero(a.size());
    d.g = Eigen::VectorXd::Zero(b.size());
    Eigen::VectorXd fn, gn;
    for (std::size_t l = 0; l < sched.levels.size(); ++l) {
        const double eps = sched.levels[l];
        bool converged = false;
        for (int it = 0; it < cfg.max_iters; ++it) {
            softmin(ct, lb, d.g, eps, fn);
            softmin(c, la, fn, eps, gn);
            d.residual = std::max((fn - d.f).lpNorm<Eigen::Infinity>(), (gn - d.g).lpNorm<Eigen::Infinity>());
            d.f.swap(fn);
            d.g.swap(gn);
            ++d.iterations;
            if (d.residual < cfg.tolerance) {
                converged = true;
                break;
            }
        }
        if (!converged && l + 1 == sched.levels.size()) fail_convergence(cfg.max_iters, d.residual);
    }
    return d;
}

Dual solve_self(const Eigen::MatrixXd& c, const Eigen::VectorXd& a, const Schedule& sched,
                const SinkhornConfig& cfg) {
    const Eigen::VectorXd la = safe_log(a);
    Dual d;
    d.f = Eigen::VectorXd::Zero(a.size());
    Eigen::VectorXd fn;
    for (std::size_t l = 0; l < sched.levels.size(); ++l) {
        const double eps = sched.levels[l];
        bool converged = false;
        for (int it = 0; it < cfg.max_iters; ++it) {
            softmin(c, la, d.f, eps, fn);  // c is symmetric
            fn = 0.5 * (fn + d.f);
            d.residual = (fn - d.f).lpNorm<Eigen::Infinity>();
            d.f.swap(fn);
            ++d.iterations;
            if (d.residual < cfg.tolerance) {
                converged = true;
                break;
            }
        }
        if (!converged && l + 1 == sched.levels.size()) fail_convergence(cfg.max_iters, d.residual);
    }
    d.g = d.f;
    return d;
}

// sum_j pi_ij * 2 (x_i - y_j)
PointMatrix plan_gradient(const Eigen::MatrixXd& c, const PointMatrix& x, const PointMatrix& y,
                          const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Dual& d, double eps) {
    const Eigen::VectorXd la = safe_log(a), lb = safe_log(b);
    PointMatrix grad = PointMatrix::Zero(x.rows(), 3);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        if (a(i) <= 0.0) continue;
        Vec3 acc = Vec3::Zero();
        for (Eigen::Index j = 0; j < y.rows(); ++j) {
            if (b(j) <= 0.0) continue;
            const double pij = std::exp(la(i) + lb(j) + (d.f(i) + d.g(j) - c(i, j)) / eps);
            acc += pij * 2.0 * (x.row(i) - y.row(j)).transpose();
        }
        grad.row(i) = acc.transpose();
    }
    return grad;
}

void check_marginal(const Eigen::VectorXd& w, Eigen::Index n, const char* which) {
    if (w.size() != n) throw_validation(std::string("sinkhorn ") + which + " weight count mismatch");
    if ((w.array() < 0.0).any() || std::abs(w.sum() - 1.0) > 1e-9) {
        throw_validation(std::string("sinkhorn ") + which + " weights are not a probability vector");
    }
}

}  // namespace

SinkhornResult sinkhorn_evaluate(const PointMatrix& x, const Eigen::VectorXd& a, const PointMatrix& y,
                                 const Eigen::VectorXd& b, const SinkhornConfig& cfg, bool need_grad) {
    cfg.validate();
    if (x.rows() == 0 || y.rows() == 0) throw_validation("distance between empty clouds is undefined");
    check_marginal(a, x.rows(), "source");
    check_marginal(b, y.rows(), "target");

    const Vec3 lo = x.colwise().minCoeff().cwiseMin(y.colwise().minCoeff());
    const Vec3 hi = x.colwise().maxCoeff().cwiseMax(y.colwise().maxCoeff());
    const Schedule sched = make_schedule((hi - lo).squaredNorm(), cfg);

    const Eigen::MatrixXd cxy = sq_cost(x, y);
    const Eigen::MatrixXd cxx = sq_cost(x, x);
    const Eigen::MatrixXd cyy = sq_cost(y, y);
    const Dual dxy = solve_cross(cxy, a, b, sched, cfg);
    const Dual dxx = solve_self(cxx, a, sched, cfg);
    const Dual dyy = solve_self(cyy, b, sched, cfg);

    SinkhornResult r;
    r.ot_xy = a.dot(dxy.f) + b.dot(dxy.g);
    r.ot_xx = 2.0 * a.dot(dxx.f);
    r.ot_yy = 2.0 * b.dot(dyy.f);
    r.divergence = r.ot_xy - 0.5 * r.ot_xx - 0.5 * r.ot_yy;
    r.iterations = dxy.iterations + dxx.iterations + dyy.iterations;
    r.residual = std::max({dxy.residual, dxx.residual, dyy.residual});

    if (need_grad) {
        const double eps = cfg.epsilon;
        r.grad_y = plan_gradient(cxy, x, y, a, b, dxy, eps) - plan_gradient(cxx, x, x, a, a, dxx, eps);
        const Eigen::MatrixXd cyx = cxy.transpose();
        const Dual dyx{dxy.g, dxy.f, 0, 0.0};
        r.grad_yp = plan_gradient(cyx, y, x, b, a, dyx, eps) - plan_gradient(cyy, y, y, b, b, dyy, eps);
    }
    return r;
}

double sinkhorn_divergence(const WeightedPointCloud& y, const WeightedPointCloud& yp, const SinkhornConfig& cfg) {
    return sinkhorn_evaluate(y.points, y.weights, yp.points, yp.weights, cfg, false).divergence;
}

}  // namespace svfd
