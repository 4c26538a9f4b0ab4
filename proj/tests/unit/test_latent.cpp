#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "svfd/error.hpp"
#include "svfd/latent.hpp"

using namespace svfd;

TEST_CASE("covariance is symmetric and positive semidefinite") {
    Rng rng(51);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::MatrixXd z(12, 5);
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = g(rng);
        const Eigen::MatrixXd c = empirical_covariance(z);
        CHECK((c - c.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(c).eigenvalues().minCoeff() > -1e-10);
        // unbiased: trace equals summed per-coordinate sample variances
        double var = 0.0;
        for (Eigen::Index r = 0; r < z.rows(); ++r) {
            const double m = z.row(r).mean();
            var += (z.row(r).array() - m).square().sum() / 4.0;
        }
        CHECK(c.trace() == doctest::Approx(var));
    }
    CHECK_THROWS_AS(empirical_covariance(Eigen::MatrixXd::Zero(3, 1)), Error);
    CodeMatrix dup{Eigen::MatrixXd::Zero(2, 2), {"a", "a"}};
    CHECK_THROWS_WITH_AS(empirical_covariance(dup), doctest::Contains("unique"), Error);
}

TEST_CASE("sampled codes follow the covariance") {
    Eigen::MatrixXd cov(3, 3);
    cov << 2.0, 0.5, 0.0, 0.5, 1.0, -0.3, 0.0, -0.3, 0.5;
    const Eigen::MatrixXd s = sample_codes(cov, 40000, 7);
    const Eigen::MatrixXd est = s * s.transpose() / 40000.0;
    CHECK((est - cov).cwiseAbs().maxCoeff() < 0.05);
    CHECK(sample_codes(cov, 5, 7) == sample_codes(cov, 5, 7));
    // rank-deficient covariance is accepted, indefinite is not
    Eigen::MatrixXd low = Eigen::MatrixXd::Zero(3, 3);
    low(0, 0) = 1.0;
    CHECK(sample_codes(low, 10, 1).bottomRows(2).cwiseAbs().maxCoeff() == 0.0);
    Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(2, 2);
    bad(1, 1) = -1.0;
    CHECK_THROWS_WITH_AS(sample_codes(bad, 3, 1), doctest::Contains("semidefinite"), Error);
}

TEST_CASE("interpolation endpoints") {
    const Eigen::VectorXd a = Eigen::VectorXd::LinSpaced(4, 0, 3), b = Eigen::VectorXd::Ones(4);
    CHECK(interpolate_codes(a, b, 0.0) == a);
    CHECK(interpolate_codes(a, b, 1.0) == b);
    CHECK(interpolate_codes(a, b, 0.5).isApprox(0.5 * (a + b)));
    CHECK_THROWS_AS(interpolate_codes(a, b, 1.5), Error);
    CHECK_THROWS_AS(interpolate_codes(a, Eigen::VectorXd::Ones(3), 0.5), Error);
}

TEST_CASE("PCA") {
    Rng rng(52);
    std::normal_distribution<double> g;
    Eigen::MatrixXd z(6, 30);
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        const double t = g(rng), u = g(rng);
        for (Eigen::Index i = 0; i < 6; ++i) z(i, j) = 3.0 * t * (i + 1) + 0.5 * u * (i % 2 ? 1 : -1) + 0.01 * g(rng);
    }
    const PcaResult p = pca_project(z, 3);
    CHECK(p.projections.rows() == 30);
    CHECK(p.explained_variance(0) >= p.explained_variance(1));
    CHECK(p.explained_variance(1) >= p.explained_variance(2));
    CHECK(p.explained_variance.sum() <= p.total_variance * (1 + 1e-12));
    CHECK((p.components.transpose() * p.components - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((pca_transform(p, z) - p.projections).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(pca_project(z.leftCols(1), 1), Error);
    CHECK_THROWS_AS(pca_transform(p, Eigen::MatrixXd::Zero(5, 2)), Error);

    std::vector<std::string> ids;
    for (int i = 0; i < 30; ++i) ids.push_back(i == 0 ? "a<b&c" : "s" + std::to_string(i));
    const std::string csv = pca_csv(p, ids, 28);
    CHECK(csv.rfind("id,kind,pc1,pc2,pc3\n", 0) == 0);
    CHECK(csv.find("s28,sample,") != std::string::npos);
    CHECK(csv.find("s27,train,") != std::string::npos);
    const std::string svg = pca_svg(p, ids, 28);
    CHECK(svg.find("a&lt;b&amp;c") != std::string::npos);
    CHECK(svg.find("<rect x=") != std::string::npos);
}
