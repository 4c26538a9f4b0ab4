#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "support.hpp"
#include "svfd/error.hpp"
#include "svfd/optim.hpp"
#include "svfd/training.hpp"

using namespace svfd;
using svfd::test::random_points;

namespace {
TrainConfig tiny_config() {
    TrainConfig c;
    c.arch.w_fa = 8;
    c.arch.l_fa = 2;
    c.arch.w_df = 16;
    c.arch.l_df = 3;
    c.arch.n_z = 8;
    c.points = 40;
    c.steps = 4;
    c.epochs = 3;
    c.batch_size = 2;
    return c;
}

std::vector<WeightedPointCloud> tiny_shapes(Rng& rng, int n) {
    std::vector<WeightedPointCloud> s;
    for (int i = 0; i < n; ++i) s.push_back(WeightedPointCloud::uniform(random_points(rng, 60, 0.1, 0.9)));
    return s;
}
}  // namespace

TEST_CASE("batch partition covers every shape once with balanced sizes") {
    Rng rng(41);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t ns = std::uniform_int_distribution<std::size_t>(1, 60)(rng);
        const int B = std::uniform_int_distribution<int>(1, 20)(rng);
        std::vector<std::size_t> order(ns);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        const auto batches = partition_batches(order, B);
        CHECK(batches.size() == std::max<std::size_t>(1, ns / static_cast<std::size_t>(B)));
        std::vector<std::size_t> flat;
        std::size_t lo = ns, hi = 0;
        for (const auto& b : batches) {
            flat.insert(flat.end(), b.begin(), b.end());
            lo = std::min(lo, b.size());
            hi = std::max(hi, b.size());
        }
        CHECK(flat == order);
        CHECK(hi - lo <= 1);
    }
    CHECK_THROWS_AS(partition_batches({0, 1}, 0), Error);
}

TEST_CASE("adaptive sampling without a cache is uniform without replacement") {
    Rng rng(42);
    std::vector<int> hits(50, 0);
    for (int trial = 0; trial < 2000; ++trial) {
        const auto idx = adaptive_sample(50, {}, Eigen::VectorXd(), 10, 0.3, rng);
        const std::set<std::size_t> s(idx.begin(), idx.end());
        REQUIRE(s.size() == 10);
        for (auto i : idx) ++hits[i];
    }
    // every index drawn with frequency near 1/5
    for (int h : hits) CHECK(std::abs(h / 2000.0 - 0.2) < 0.05);
    CHECK_THROWS_AS(adaptive_sample(5, {}, Eigen::VectorXd(), 6, 0.1, rng), Error);
    CHECK_THROWS_AS(adaptive_sample(5, {0, 1}, Eigen::VectorXd::Ones(3), 2, 0.1, rng), Error);
}

TEST_CASE("configuration validation names the key") {
    TrainConfig c;
    c.epochs = 0;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("train.epochs"), Error);
    c = {};
    c.adaptive = 1.5;
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("train.adaptive"), Error);
    c = {};
    c.lr_theta = 0.0;
    CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("Adam's first step moves each coordinate by the learning rate") {
    Eigen::VectorXd p(3), g(3);
    p << 1, 2, 3;
    g << 0.5, -2.0, 1e-3;
    AdamState st(3);
    adam_step(p, g, st, 0.1);
    CHECK(p(0) == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(p(1) == doctest::Approx(2.1).epsilon(1e-6));
    CHECK(p(2) == doctest::Approx(2.9).epsilon(1e-4));
}

TEST_CASE("L-BFGS minimizes a convex quadratic") {
    Eigen::MatrixXd A(4, 4);
    A << 4, 1, 0, 0, 1, 3, 0.5, 0, 0, 0.5, 2, 0.1, 0, 0, 0.1, 1;
    Eigen::VectorXd b(4);
    b << 1, -2, 0.5, 3;
    const LossClosure f = [&](const Eigen::VectorXd& z, Eigen::VectorXd* g) {
        if (g) *g = A * z - b;
        return 0.5 * z.dot(A * z) - b.dot(z);
    };
    Eigen::VectorXd z = Eigen::VectorXd::Zero(4);
    LbfgsState st;
    for (int it = 0; it < 40; ++it) lbfgs_step(z, f, st);
    CHECK((z - A.ldlt().solve(b)).norm() < 1e-8);
    // two-loop recursion with empty history is steepest descent
    CHECK(lbfgs_direction(b, {}, {}) == -b);
}

TEST_CASE("training runs, reports every epoch and checkpoints periodically") {
    Rng rng(43);
    const auto shapes = tiny_shapes(rng, 3);
    const WeightedPointCloud templ = WeightedPointCloud::uniform(random_points(rng, 60, 0.1, 0.9));
    TrainConfig cfg = tiny_config();
    cfg.epochs = 4;
    cfg.checkpoint_every = 2;
    std::vector<int> epochs, checkpoints;
    TrainCallbacks cb;
    cb.on_epoch = [&](const EpochRecord& r) {
        epochs.push_back(r.epoch);
        CHECK(std::isfinite(r.loss.total));
        CHECK(r.loss.total == doctest::Approx(r.loss.direct + r.loss.inverse + r.loss.code_reg + r.loss.theta_reg +
                                              cfg.w_v * r.loss.kinetic));
    };
    cb.on_checkpoint = [&](const VelocityNet&, const Eigen::MatrixXd& codes, int e) {
        checkpoints.push_back(e);
        CHECK(codes.cols() == 3);
    };
    const TrainResult r = train(shapes, templ, cfg, cb);
    CHECK(epochs == std::vector<int>{1, 2, 3, 4});
    CHECK(checkpoints == std::vector<int>{2, 4});
    CHECK(r.history.size() == 4);
    CHECK_FALSE(r.interrupted);

    SUBCASE("same seed, same result") {
        const TrainResult again = train(shapes, templ, cfg);
        CHECK(again.net.params() == r.net.params());
        CHECK(again.codes == r.codes);
    }
    SUBCASE("stop request ends after the current epoch") {
        int seen = 0;
        TrainCallbacks stop;
        stop.on_epoch = [&](const EpochRecord&) { ++seen; };
        stop.should_stop = [&] { return seen >= 1; };
        const TrainResult s = train(shapes, templ, cfg, stop);
        CHECK(s.interrupted);
        CHECK(s.history.size() == 1);
    }
    SUBCASE("inference leaves the network untouched") {
        InferConfig icfg;
        icfg.adam_epochs = 5;
        icfg.lbfgs_epochs = 1;
        icfg.lbfgs_iterations = 3;
        const std::uint64_t before = r.net.checksum();
        const InferResult inf = infer_code(shapes[0], templ, r.net, cfg, icfg);
        CHECK(r.net.checksum() == before);
        CHECK(inf.code.size() == 8);
        CHECK(inf.loss_history.size() >= 6);
        CHECK(inf.final.max_fld >= inf.final.mean_fld);
    }
}

TEST_CASE("training input errors") {
    Rng rng(44);
    const auto shapes = tiny_shapes(rng, 2);
    TrainConfig cfg = tiny_config();
    cfg.points = 100;
    CHECK_THROWS_WITH_AS(train(shapes, shapes[0], cfg), doctest::Contains("fewer than"), Error);
    cfg = tiny_config();
    cfg.attachment = Attachment::PCD;
    CHECK_THROWS_WITH_AS(train(shapes, shapes[0], cfg), doctest::Contains("normals"), Error);
    CHECK_THROWS_AS(train({}, shapes[0], tiny_config()), Error);
}

TEST_CASE("SD training degrades adaptive sampling to uniform") {
    Rng rng(45);
    const auto shapes = tiny_shapes(rng, 1);
    TrainConfig cfg = tiny_config();
    cfg.epochs = 2;
    cfg.attachment = Attachment::SD;
    cfg.sinkhorn.epsilon = 5e-2;
    cfg.sinkhorn.max_iters = 20000;
    const TrainResult r = train(shapes, shapes[0], cfg);
    CHECK(std::isfinite(r.history.back().loss.total));
}
