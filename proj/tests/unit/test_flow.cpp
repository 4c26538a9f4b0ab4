#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "svfd/error.hpp"
#include "svfd/flow.hpp"

using namespace svfd;
using svfd::test::random_points;

TEST_CASE("constant fields translate exactly under every scheme") {
    Rng rng(31);
    const PointMatrix x = random_points(rng, 10);
    const Eigen::RowVector3d c(0.3, -0.2, 0.1);
    const VelocityFn v = [&](const PointMatrix& p) {
        PointMatrix out(p.rows(), 3);
        out.rowwise() = c;
        return out;
    };
    for (int K : {1, 4, 9}) {
        const FlowResult f = integrate_forward(x, v, K);
        CHECK(f.steps() == K);
        CHECK(f.states.size() == static_cast<std::size_t>(K + 1));
        CHECK(((f.mapped().rowwise() - c) - x).cwiseAbs().maxCoeff() < 1e-14);
        CHECK(f.kinetic_energy == doctest::Approx(c.squaredNorm()));
        const FlowResult b = integrate_backward_modified(x, v, K);
        CHECK(((b.mapped().rowwise() + c) - x).cwiseAbs().maxCoeff() < 1e-14);
        CHECK(b.backward);
        CHECK((b.states.back() - x).norm() == 0.0);
        const FlowResult i = integrate_backward_implicit(x, v, K);
        CHECK(((i.mapped().rowwise() + c) - x).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("forward Euler on a linear field is a matrix power") {
    Mat3 A;
    A << 0.1, -0.3, 0.0, 0.3, 0.1, 0.0, 0.0, 0.0, -0.2;
    const VelocityFn v = [&](const PointMatrix& p) -> PointMatrix { return p * A.transpose(); };
    Rng rng(32);
    const PointMatrix x = random_points(rng, 5);
    const int K = 7;
    Mat3 step = Mat3::Identity() + A / K, total = Mat3::Identity();
    for (int k = 0; k < K; ++k) total = step * total;
    CHECK((integrate_forward(x, v, K).mapped() - x * total.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    // the implicit scheme inverts forward Euler exactly
    const FlowResult back = integrate_backward_implicit(x * total.transpose(), v, K);
    CHECK((back.mapped() - x).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("geodesic snapshots and kinetic energy") {
    Rng rng(33);
    const PointMatrix x = random_points(rng, 4);
    const VelocityFn v = [](const PointMatrix& p) -> PointMatrix { return 0.5 * p; };
    const FlowResult f = integrate_forward(x, v, 4);
    CHECK(geodesic_path(f, 0) == x);
    CHECK(geodesic_path(f, 4) == f.mapped());
    CHECK_THROWS_AS(geodesic_path(f, 5), Error);
    const FlowResult b = integrate_backward_modified(x, v, 4);
    CHECK(kinetic_energy(f, b) == doctest::Approx(f.kinetic_energy + b.kinetic_energy));
    CHECK_THROWS_AS(integrate_forward(x, v, 0), Error);
}

TEST_CASE("implicit solver reports non-convergence") {
    const VelocityFn v = [](const PointMatrix& p) -> PointMatrix { return -40.0 * p; };
    PointMatrix x(1, 3);
    x << 1, 1, 1;
    FixedPointOptions o;
    o.max_iters = 5;
    CHECK_THROWS_WITH_AS(integrate_backward_implicit(x, v, 2, o), doctest::Contains("did not converge"), Error);
}

TEST_CASE("flow adjoint matches finite differences") {
    Architecture a;
    a.w_fa = 5;
    a.l_fa = 1;
    a.w_df = 6;
    a.l_df = 2;
    a.n_e = 1;
    a.n_z = 8;
    const InitResult init = init_params(a, 1, 9);
    const NetEvaluator<double> ev(init.net);
    const Mat<double> grid = reshape_code(init.codes.col(0), 2).values;
    Rng rng(34);
    const Mat<double> x0 = random_points(rng, 3, 0.3, 0.7).transpose();
    const Mat<double> w = random_points(rng, 3, -1, 1).transpose();
    const double rho = 0.2;
    for (Scheme scheme : {Scheme::ForwardEuler, Scheme::ModifiedEuler}) {
        auto loss = [&](const VelocityNet& net, const Mat<double>& g, const Mat<double>& x) {
            FlowTape<double> tape;
            const Mat<double> xk = flow_record(NetEvaluator<double>(net), x, g, 3, scheme, tape);
            return xk.cwiseProduct(w).sum() + rho * tape.speed_sum;
        };
        FlowTape<double> tape;
        flow_record(ev, x0, grid, 3, scheme, tape);
        Mat<double> d_grid = Mat<double>::Zero(grid.rows(), grid.cols());
        Eigen::VectorXd d_theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(init.net.num_params()));
        const Mat<double> dx = flow_adjoint(ev, tape, grid, w, rho, &d_grid, &d_theta);
        const double h = 1e-6;
        for (Eigen::Index i = 0; i < x0.size(); ++i) {
            Mat<double> p = x0, m = x0;
            p(i) += h;
            m(i) -= h;
            CHECK(dx(i) == doctest::Approx((loss(init.net, grid, p) - loss(init.net, grid, m)) / (2 * h)).epsilon(1e-6));
        }
        for (Eigen::Index i = 0; i < grid.size(); ++i) {
            Mat<double> p = grid, m = grid;
            p(i) += h;
            m(i) -= h;
            CHECK(d_grid(i) == doctest::Approx((loss(init.net, p, x0) - loss(init.net, m, x0)) / (2 * h)).epsilon(1e-6));
        }
        for (Eigen::Index i = 0; i < d_theta.size(); i += 3) {
            VelocityNet p = init.net, m = init.net;
            p.params()(i) += h;
            m.params()(i) -= h;
            CHECK(d_theta(i) == doctest::Approx((loss(p, grid, x0) - loss(m, grid, x0)) / (2 * h)).epsilon(1e-6));
        }
    }
}
