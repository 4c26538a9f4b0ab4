#pragma once

#include <string>
#include <vector>

#include "svfd/network.hpp"

namespace svfd {

/// Shape codes as columns (N_z x N_s) with one id per shape.
struct CodeMatrix {
    Eigen::MatrixXd codes;
    std::vector<std::string> ids;

    void validate() const;
};

Eigen::MatrixXd empirical_covariance(const CodeMatrix& codes);
Eigen::MatrixXd empirical_covariance(const Eigen::MatrixXd& codes);

/// n draws from N(0, cov), one per column. Slightly negative eigenvalues are
/// floored at zero; clearly indefinite input is rejected.
Eigen::MatrixXd sample_codes(const Eigen::MatrixXd& cov, int n, std::uint64_t seed);

Eigen::VectorXd interpolate_codes(const Eigen::VectorXd& za, const Eigen::VectorXd& zb, double t);

struct PcaResult {
    Eigen::MatrixXd projections;         // N_s x dims
    Eigen::VectorXd explained_variance;  // dims, non-increasing
    Eigen::MatrixXd components;          // N_z x dims
    double total_variance = 0.0;
    Eigen::VectorXd mean;                // N_z
};

PcaResult pca_project(const CodeMatrix& codes, int dims);
PcaResult pca_project(const Eigen::MatrixXd& codes, int dims);
/// Projects further codes (N_z x n) onto a fitted basis; n x dims.
Eigen::MatrixXd pca_transform(const PcaResult& pca, const Eigen::MatrixXd& codes);

/// Inverse map of the template under `code`; weights and normals copied.
WeightedPointCloud generate_shape(const Eigen::VectorXd& code, const WeightedPointCloud& templ,
                                  const VelocityNet& net, int K);

/// CSV (id,kind,pc1,pc2,...) and a standalone SVG scatter of the first two
/// axes. Rows from `samples_from` on are marked as samples.
std::string pca_csv(const PcaResult& pca, const std::vector<std::string>& ids,
                    std::size_t samples_from = static_cast<std::size_t>(-1));
std::string pca_svg(const PcaResult& pca, const std::vector<std::string>& ids,
                    std::size_t samples_from = static_cast<std::size_t>(-1));

}  // namespace svfd
