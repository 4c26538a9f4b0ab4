#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "svfd/error.hpp"
#include "svfd/network.hpp"

using namespace svfd;
using svfd::test::random_points;

namespace {
Architecture tiny() {
    Architecture a;
    a.w_fa = 6;
    a.l_fa = 2;
    a.w_df = 7;
    a.l_df = 3;
    a.n_e = 2;
    a.n_z = 16;
    return a;
}
}  // namespace

TEST_CASE("default architecture size") {
    const Architecture a;
    CHECK(a.parameter_count() == 331907);
    const VelocityNet net(a);
    CHECK(net.num_params() == 331907);
    CHECK(net.layers().size() == static_cast<std::size_t>(a.l_fa + a.l_df));
    CHECK_FALSE(net.layers().back().activated);
    CHECK(net.layers().back().out == 3);
    // slots tile the parameter vector
    std::size_t at = 0;
    for (const auto& l : net.layers()) {
        CHECK(l.offset == at);
        at = l.end();
    }
    CHECK(at == net.num_params());
}

TEST_CASE("architecture validation") {
    Architecture a;
    a.n_z = 250;
    CHECK_THROWS_WITH_AS(a.validate(), doctest::Contains("g_z^3"), Error);
    a = {};
    a.l_df = 1;
    CHECK_THROWS_AS(a.validate(), Error);
    a = {};
    a.negative_slope = 1.0;
    CHECK_THROWS_AS(a.validate(), Error);
}

TEST_CASE("code grid layout") {
    Eigen::VectorXd z(16);
    for (int i = 0; i < 16; ++i) z(i) = i;
    const ShapeCodeGrid g = reshape_code(z, 2);
    CHECK(g.channels == 2);
    CHECK(g.flatten() == z);
    // node (1,0,0) holds entries 2,3; node (0,1,0) entries 4,5
    CHECK(g.values(0, g.node(1, 0, 0)) == 2.0);
    CHECK(g.values(1, g.node(0, 1, 0)) == 5.0);
    CHECK_THROWS_AS(reshape_code(Eigen::VectorXd::Zero(15), 2), Error);
}

TEST_CASE("position-aware code interpolates trilinearly") {
    Rng rng(21);
    const ShapeCodeGrid g = reshape_code(Eigen::VectorXd::Random(3 * 27), 3);
    CHECK(position_aware_code(Vec3(0.5, 0, 1), g).isApprox(g.values.col(g.node(1, 0, 2))));
    // affine in each coordinate inside a cell
    const Vec3 a(0.1, 0.2, 0.3), b(0.4, 0.1, 0.45);
    for (double t : {0.25, 0.5, 0.75}) {
        const Vec3 x(a.x() + t * (b.x() - a.x()), a.y(), a.z());
        const Vec3 bx(b.x(), a.y(), a.z());
        CHECK(position_aware_code(x, g).isApprox((1 - t) * position_aware_code(a, g) + t * position_aware_code(bx, g)));
    }
}

TEST_CASE("Fourier encoding") {
    Eigen::VectorXd f(2);
    f << 0.25, -1.0;
    const Eigen::VectorXd e = fpe(f, 3);
    CHECK(e.size() == 2 * (1 + 2 * 3));
    CHECK(e.head(2) == f);
    CHECK(fpe(f, 0) == f);
}

TEST_CASE("initialization is reproducible and checksums track parameters") {
    const InitResult a = init_params(tiny(), 3, 42);
    const InitResult b = init_params(tiny(), 3, 42);
    const InitResult c = init_params(tiny(), 3, 43);
    CHECK(a.net.params() == b.net.params());
    CHECK(a.codes == b.codes);
    CHECK(a.net.checksum() == b.net.checksum());
    CHECK(a.net.checksum() != c.net.checksum());
    CHECK(a.codes.rows() == 16);
    CHECK(a.codes.cols() == 3);
    VelocityNet n = a.net;
    n.params()(5) += 1e-12;
    CHECK(n.checksum() != a.net.checksum());
}

TEST_CASE("single and double precision agree") {
    Rng rng(22);
    const InitResult init = init_params(tiny(), 1, 3);
    const auto grid = reshape_code(init.codes.col(0), 2);
    const PointMatrix x = random_points(rng, 30);
    const NetEvaluator<float> ef(init.net);
    const NetEvaluator<double> ed(init.net);
    const Mat<double> vd = ed.forward(x.transpose(), grid.values, nullptr);
    const Mat<float> vf = ef.forward(x.transpose().cast<float>(), grid.values.cast<float>(), nullptr);
    CHECK((vf.cast<double>() - vd).cwiseAbs().maxCoeff() < 1e-4 * std::max(1.0, vd.cwiseAbs().maxCoeff()));
    CHECK(velocity(x, grid, init.net).transpose().isApprox(vd));
}

TEST_CASE("vector-Jacobian products match finite differences") {
    Rng rng(23);
    const InitResult init = init_params(tiny(), 1, 4);
    const NetEvaluator<double> ev(init.net);
    const Mat<double> grid = reshape_code(init.codes.col(0), 2).values;
    const Mat<double> x = random_points(rng, 4, 0.1, 0.9).transpose();
    const Mat<double> w = random_points(rng, 4, -1, 1).transpose();  // dL/dV
    auto loss = [&](const VelocityNet& net, const Mat<double>& g, const Mat<double>& p) {
        return NetEvaluator<double>(net).forward(p, g, nullptr).cwiseProduct(w).sum();
    };
    EvalTape<double> tape;
    ev.forward(x, grid, &tape);
    Mat<double> d_grid = Mat<double>::Zero(grid.rows(), grid.cols());
    Eigen::VectorXd d_theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(init.net.num_params()));
    const Mat<double> dx = ev.backward(tape, grid, w, &d_grid, &d_theta);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Mat<double> p = x, m = x;
        p(i) += h;
        m(i) -= h;
        CHECK(dx(i) == doctest::Approx((loss(init.net, grid, p) - loss(init.net, grid, m)) / (2 * h)).epsilon(1e-6));
    }
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
        Mat<double> p = grid, m = grid;
        p(i) += h;
        m(i) -= h;
        CHECK(d_grid(i) == doctest::Approx((loss(init.net, p, x) - loss(init.net, m, x)) / (2 * h)).epsilon(1e-6));
    }
    for (Eigen::Index i = 0; i < d_theta.size(); i += 7) {
        VelocityNet p = init.net, m = init.net;
        p.params()(i) += h;
        m.params()(i) -= h;
        CHECK(d_theta(i) == doctest::Approx((loss(p, grid, x) - loss(m, grid, x)) / (2 * h)).epsilon(1e-6));
    }
}
