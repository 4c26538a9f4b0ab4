#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "svfd/geometry.hpp"

namespace svfd::test {

inline PointMatrix random_points(Rng& rng, Eigen::Index n, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    PointMatrix p(n, 3);
    for (Eigen::Index i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) p(i, k) = u(rng);
    return p;
}

inline PointMatrix random_unit_vectors(Rng& rng, Eigen::Index n) {
    std::normal_distribution<double> g;
    PointMatrix p(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) p.row(i) = Vec3(g(rng), g(rng), g(rng)).normalized();
    return p;
}

inline WeightedPointCloud random_cloud(Rng& rng, Eigen::Index n, bool normals = false) {
    WeightedPointCloud c;
    c.points = random_points(rng, n);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    c.weights.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) c.weights(i) = u(rng);
    c.weights /= c.weights.sum();
    if (normals) c.normals = random_unit_vectors(rng, n);
    return c;
}

inline std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("svfd_test_" + name)).string();
}

}  // namespace svfd::test
