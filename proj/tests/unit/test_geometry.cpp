#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "support.hpp"
#include "svfd/error.hpp"
#include "svfd/geometry.hpp"
#include "svfd/spline.hpp"

using namespace svfd;
using svfd::test::random_cloud;
using svfd::test::random_points;

TEST_CASE("cloud validation rejects broken invariants") {
    Rng rng(1);
    WeightedPointCloud c = random_cloud(rng, 10);
    CHECK_NOTHROW(c.validate());

    WeightedPointCloud bad = c;
    bad.weights(0) += 0.5;
    CHECK_THROWS_AS(bad.validate(), Error);

    bad = c;
    bad.weights(3) = -bad.weights(3);
    CHECK_THROWS_AS(bad.validate(), Error);

    bad = c;
    bad.points(2, 1) = std::nan("");
    CHECK_THROWS_AS(bad.validate(), Error);

    bad = c;
    bad.normals = PointMatrix::Zero(10, 3);
    CHECK_THROWS_AS(bad.validate(), Error);

    bad = c;
    bad.weights.resize(4);
    bad.weights.setConstant(0.25);
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("subset renormalizes weights and keeps normals") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const WeightedPointCloud c = random_cloud(rng, 30, true);
        std::vector<std::size_t> idx = subsample(c, 12, rng);
        const WeightedPointCloud s = c.subset(idx);
        CHECK(s.size() == 12);
        CHECK(s.weights.sum() == doctest::Approx(1.0).epsilon(1e-14));
        REQUIRE(s.has_normals());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const auto r = static_cast<Eigen::Index>(k);
            CHECK(s.points.row(r) == c.points.row(static_cast<Eigen::Index>(idx[k])));
            CHECK(s.normals->row(r) == c.normals->row(static_cast<Eigen::Index>(idx[k])));
        }
        // ratios between kept weights are preserved
        const double ratio = s.weights(0) / s.weights(1);
        CHECK(ratio == doctest::Approx(c.weights(static_cast<Eigen::Index>(idx[0])) /
                                       c.weights(static_cast<Eigen::Index>(idx[1]))));
    }
}

TEST_CASE("subsample draws distinct indices") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const auto n = std::uniform_int_distribution<int>(1, 200)(rng);
        const auto m = std::uniform_int_distribution<int>(1, n)(rng);
        const WeightedPointCloud c = WeightedPointCloud::uniform(random_points(rng, n));
        auto idx = subsample(c, static_cast<std::size_t>(m), rng);
        std::sort(idx.begin(), idx.end());
        CHECK(std::adjacent_find(idx.begin(), idx.end()) == idx.end());
        CHECK(idx.size() == static_cast<std::size_t>(m));
        CHECK(idx.back() < static_cast<std::size_t>(n));
    }
    const WeightedPointCloud c = WeightedPointCloud::uniform(random_points(rng, 5));
    CHECK_THROWS_AS(subsample(c, 6, rng), Error);
}

TEST_CASE("joint unit cube normalization") {
    Rng rng(4);
    std::vector<WeightedPointCloud> clouds;
    for (int k = 0; k < 3; ++k) {
        WeightedPointCloud c = random_cloud(rng, 20, true);
        c.points = c.points * 7.0;
        c.points.col(0).array() += 3.0 * k;
        clouds.push_back(c);
    }
    const NormalizedClouds nc = normalize_to_unit_cube(clouds);
    Vec3 lo = Vec3::Constant(INFINITY), hi = Vec3::Constant(-INFINITY);
    for (const auto& c : nc.clouds) {
        lo = lo.cwiseMin(c.points.colwise().minCoeff().transpose());
        hi = hi.cwiseMax(c.points.colwise().maxCoeff().transpose());
    }
    for (int k = 0; k < 3; ++k) {
        CHECK(lo(k) == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(hi(k) == doctest::Approx(1.0).epsilon(1e-12));
    }
    for (std::size_t i = 0; i < clouds.size(); ++i) {
        const WeightedPointCloud back = nc.transform.invert(nc.clouds[i]);
        CHECK((back.points - clouds[i].points).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((back.normals->rowwise().norm().array() - 1.0).abs().maxCoeff() < 1e-12);
        CHECK((back.normals.value() - clouds[i].normals.value()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(nc.clouds[i].weights == clouds[i].weights);
    }
}

TEST_CASE("normals follow the inverse transpose of an anisotropic embedding") {
    UnitCubeTransform t;
    t.scale = Vec3(2.0, 1.0, 0.5);
    WeightedPointCloud c = WeightedPointCloud::uniform(PointMatrix::Zero(1, 3));
    PointMatrix n(1, 3);
    n << 1.0, 1.0, 0.0;
    n.row(0).normalize();
    c.normals = n;
    const WeightedPointCloud m = t.apply(c);
    // a tangent (1,-1,0) maps to (2,-1,0); the mapped normal stays orthogonal to it
    CHECK(std::abs(m.normals->row(0).dot(Eigen::RowVector3d(2.0, -1.0, 0.0))) < 1e-14);
    CHECK(m.normals->row(0).norm() == doctest::Approx(1.0));
}

TEST_CASE("mesh to cloud uses area weights at face centroids") {
    TriangleMesh m;
    m.vertices.resize(5, 3);
    m.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0, 2, 0, 0, 0, 2, 0;
    m.faces = {{0, 1, 2}, {0, 3, 4}};
    const WeightedPointCloud c = mesh_to_weighted_cloud(m);
    REQUIRE(c.size() == 2);
    CHECK(c.weights(0) == doctest::Approx(0.5 / 2.5));
    CHECK(c.weights(1) == doctest::Approx(2.0 / 2.5));
    CHECK(c.points.row(0).isApprox(Eigen::RowVector3d(1.0 / 3, 1.0 / 3, 0)));
    CHECK(c.normals->row(0).isApprox(Eigen::RowVector3d(0, 0, 1)));
}

TEST_CASE("mesh validation") {
    TriangleMesh m;
    m.vertices = PointMatrix::Zero(3, 3);
    m.faces = {{0, 1, 3}};
    CHECK_THROWS_WITH_AS(m.validate(), doctest::Contains("out of range"), Error);
    m.faces = {{0, 1, 1}};
    CHECK_THROWS_AS(m.validate(), Error);
}

TEST_CASE("synthetic shapes are closed and consistently oriented") {
    for (auto kind : {ShapeKind::Ellipsoid, ShapeKind::Tube, ShapeKind::YBranch}) {
        ShapeParams p;
        const TriangleMesh m = synth_shape(kind, p, 800);
        CHECK_NOTHROW(m.validate());
        // Closed, outward surfaces enclose a positive volume by the divergence theorem.
        double volume = 0.0;
        for (const auto& f : m.faces) {
            const Vec3 a = m.vertices.row(f[0]), b = m.vertices.row(f[1]), c = m.vertices.row(f[2]);
            volume += a.dot(b.cross(c)) / 6.0;
        }
        CHECK(volume > 0.0);
    }
    ShapeParams sphere;
    const TriangleMesh s = synth_shape(ShapeKind::Ellipsoid, sphere, 4000);
    CHECK(s.total_area() == doctest::Approx(4.0 * M_PI).epsilon(0.01));
    CHECK(parse_shape_kind("y_branch") == ShapeKind::YBranch);
    CHECK_THROWS_AS(parse_shape_kind("torus"), Error);
}

TEST_CASE("PLY and OBJ round trips") {
    ShapeParams p;
    const TriangleMesh m = synth_shape(ShapeKind::Tube, p, 200);
    for (bool binary : {false, true}) {
        const std::string path = svfd::test::temp_path(binary ? "b.ply" : "a.ply");
        save_mesh_ply(m, path, binary);
        const TriangleMesh back = load_mesh(path);
        CHECK(back.faces == m.faces);
        CHECK((back.vertices - m.vertices).cwiseAbs().maxCoeff() < (binary ? 1e-6 : 1e-9));
        std::filesystem::remove(path);
    }
    const TriangleMesh obj = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\n# quad\nf 1/1 2/2 3/3 4/4\n");
    CHECK(obj.face_count() == 2);
    CHECK_THROWS_AS(parse_obj("v 0 0 0\nf 1 2 3\n"), Error);
    CHECK_THROWS_AS(load_mesh("/nonexistent/shape.ply"), Error);

    Rng rng(5);
    const WeightedPointCloud c = random_cloud(rng, 40, true);
    const std::string path = svfd::test::temp_path("cloud.ply");
    save_cloud_ply(c, path);
    const WeightedPointCloud back = load_cloud(path);
    CHECK(back.size() == 40);
    CHECK(back.has_normals());
    CHECK(back.weights.sum() == doctest::Approx(1.0));
    CHECK((back.points - c.points).cwiseAbs().maxCoeff() < 1e-6);
    std::filesystem::remove(path);
}

TEST_CASE("spline interpolates knots with unit tangents") {
    const std::vector<Vec3> knots = {{0, 0, 0}, {1, 0.5, 0}, {2, 0, 0.3}, {3, 1, 1}};
    const CenterlineSpline s(knots);
    CHECK((s.position(0.0) - knots.front()).norm() < 1e-12);
    CHECK((s.position(1.0) - knots.back()).norm() < 1e-12);
    const auto samples = s.sample_uniform(50);
    for (const auto& t : samples.tangents) CHECK(t.norm() == doctest::Approx(1.0));
    // arclength sampling is uniform
    std::vector<double> gaps;
    for (std::size_t i = 1; i < samples.points.size(); ++i) gaps.push_back((samples.points[i] - samples.points[i - 1]).norm());
    const auto [mn, mx] = std::minmax_element(gaps.begin(), gaps.end());
    CHECK(*mx / *mn < 1.05);
    CHECK_THROWS_AS(CenterlineSpline({Vec3::Zero()}), Error);
}

TEST_CASE("Bishop frames are orthonormal and twist free on a planar curve") {
    std::vector<Vec3> pts;
    for (int i = 0; i < 60; ++i) {
        const double t = i / 59.0 * M_PI;
        pts.emplace_back(std::cos(t), std::sin(t), 0.0);
    }
    const auto frames = bishop_frames(pts, Vec3::UnitZ());
    for (const auto& f : frames) {
        CHECK(f.tangent.norm() == doctest::Approx(1.0));
        CHECK(std::abs(f.tangent.dot(f.normal)) < 1e-10);
        CHECK(std::abs(f.tangent.dot(f.binormal)) < 1e-10);
        CHECK(std::abs(f.normal.dot(f.binormal)) < 1e-10);
        // rotation-minimizing on a planar curve: the out-of-plane axis stays fixed
        CHECK(std::abs(std::abs(f.normal.z()) - 1.0) < 1e-8);
    }
    CHECK(radius_at({1.0, 3.0}, 0.25) == doctest::Approx(1.5));
}
