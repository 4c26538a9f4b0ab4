#include "svfd/latent.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "svfd/error.hpp"
#include "svfd/flow.hpp"

namespace svfd {

void CodeMatrix::validate() const {
    if (!ids.empty() && ids.size() != static_cast<std::size_t>(codes.cols())) {
        throw_validation("code id count does not match the number of codes");
    }
    const std::set<std::string> unique(ids.begin(), ids.end());
    if (unique.size() != ids.size()) throw_validation("shape ids must be unique");
    if (!codes.allFinite()) throw_validation("code matrix contains non-finite values");
}

Eigen::MatrixXd empirical_covariance(const Eigen::MatrixXd& z) {
    if (z.cols() < 2) throw_validation("covariance needs at least 2 codes, got " + std::to_string(z.cols()));
    const Eigen::VectorXd mean = z.rowwise().mean();
    const Eigen::MatrixXd c = z.colwise() - mean;
    Eigen::MatrixXd cov = c * c.transpose() / static_cast<double>(z.cols() - 1);
    return 0.5 * (cov + cov.transpose());
}

Eigen::MatrixXd empirical_covariance(const CodeMatrix& codes) {
    codes.validate();
    return empirical_covariance(codes.codes);
}

Eigen::MatrixXd sample_codes(const Eigen::MatrixXd& cov, int n, std::uint64_t seed) {
    if (cov.rows() != cov.cols() || cov.rows() == 0) throw_validation("covariance must be square and non-empty");
    if (n < 0) throw_validation("sample count must be non-negative");
    if (!cov.allFinite()) throw_validation("covariance contains non-finite values");
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, cov.cwiseAbs().maxCoeff())) {
        throw_validation("covariance is not symmetric");
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (cov + cov.transpose()));
    Eigen::VectorXd lam = es.eigenvalues();
    const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
    if (lam.minCoeff() < -1e-8 * scale) {
        std::ostringstream os;
        os << "covariance is not positive semidefinite (eigenvalue " << lam.minCoeff() << ")";
        throw_validation(os.str());
    }
    lam = lam.cwiseMax(0.0);
    const Eigen::MatrixXd factor = es.eigenvectors() * lam.cwiseSqrt().asDiagonal();
    Rng rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    Eigen::MatrixXd eta(cov.rows(), n);
    for (Eigen::Index j = 0; j < eta.cols(); ++j) {
        for (Eigen::Index i = 0; i < eta.rows(); ++i) eta(i, j) = dist(rng);
    }
    return factor * eta;
}

Eigen::VectorXd interpolate_codes(const Eigen::VectorXd& za, const Eigen::VectorXd& zb, double t) {
    if (za.size() != zb.size()) throw_validation("codes differ in dimension");
    if (!(t >= 0.0 && t <= 1.0)) throw_validation("interpolation parameter must lie in [0, 1]");
    return (1.0 - t) * za + t * zb;
}

PcaResult pca_project(const Eigen::MatrixXd& z, int dims) {
    if (dims < 1) throw_validation("PCA needs at least one dimension");
    if (z.cols() < dims || z.cols() < 2) {
        throw_validation("PCA onto " + std::to_string(dims) + " dimensions needs at least " +
                         std::to_string(std::max(dims, 2)) + " codes");
    }
    if (dims > z.rows()) throw_validation("PCA dimension exceeds the code dimension");
    const Eigen::VectorXd mean = z.rowwise().mean();
    const Eigen::MatrixXd c = (z.colwise() - mean).transpose();  // N_s x N_z
    const Eigen::BDCSVD<Eigen::MatrixXd> svd(c, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double denom = static_cast<double>(z.cols() - 1);
    PcaResult r;
    r.mean = mean;
    r.total_variance = c.squaredNorm() / denom;
    r.components = Eigen::MatrixXd::Zero(z.rows(), dims);
    r.explained_variance = Eigen::VectorXd::Zero(dims);
    const Eigen::Index avail = std::min<Eigen::Index>(dims, svd.singularValues().size());
    for (Eigen::Index k = 0; k < avail; ++k) {
        Eigen::VectorXd v = svd.matrixV().col(k);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0.0) v = -v;
        r.components.col(k) = v;
        const double s = svd.singularValues()(k);
        r.explained_variance(k) = s * s / denom;
    }
    r.projections = c * r.components;
    return r;
}

PcaResult pca_project(const CodeMatrix& codes, int dims) {
    codes.validate();
    return pca_project(codes.codes, dims);
}

WeightedPointCloud generate_shape(const Eigen::VectorXd& code, const WeightedPointCloud& templ,
                                  const VelocityNet& net, int K) {
    const auto grid = reshape_code(code, net.arch().g_z);
    if (grid.channels != net.arch().code_channels()) throw_validation("code length does not match the network");
    const FlowResult f = integrate_backward_modified(templ.points, grid, net, K);
    return templ.with_points(f.mapped());
}

Eigen::MatrixXd pca_transform(const PcaResult& pca, const Eigen::MatrixXd& codes) {
    if (codes.rows() != pca.mean.size()) throw_validation("codes differ in dimension from the PCA basis");
    return (codes.colwise() - pca.mean).transpose() * pca.components;
}

namespace {
std::string id_at(const std::vector<std::string>& ids, Eigen::Index i) {
    return static_cast<std::size_t>(i) < ids.size() ? ids[static_cast<std::size_t>(i)] : std::to_string(i);
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += ch;
        }
    }
    return out;
}

bool is_sample(Eigen::Index i, std::size_t samples_from) { return static_cast<std::size_t>(i) >= samples_from; }
}  // namespace

std::string pca_csv(const PcaResult& pca, const std::vector<std::string>& ids, std::size_t samples_from) {
    std::ostringstream os;
    os << "id,kind";
    for (Eigen::Index k = 0; k < pca.projections.cols(); ++k) os << ",pc" << k + 1;
    os << "\n" << std::setprecision(17);
    for (Eigen::Index i = 0; i < pca.projections.rows(); ++i) {
        os << id_at(ids, i) << ',' << (is_sample(i, samples_from) ? "sample" : "train");
        for (Eigen::Index k = 0; k < pca.projections.cols(); ++k) os << "," << pca.projections(i, k);
        os << "\n";
    }
    return os.str();
}

std::string pca_svg(const PcaResult& pca, const std::vector<std::string>& ids, std::size_t samples_from) {
    const int size = 480, pad = 48;
    const Eigen::Index n = pca.projections.rows();
    Eigen::VectorXd x = pca.projections.col(0);
    Eigen::VectorXd y = pca.projections.cols() > 1 ? Eigen::VectorXd(pca.projections.col(1))
                                                   : Eigen::VectorXd::Zero(n);
    auto span = [](const Eigen::VectorXd& v) {
        double lo = v.minCoeff(), hi = v.maxCoeff();
        if (hi - lo < 1e-12) {
            lo -= 1.0;
            hi += 1.0;
        }
        return std::pair{lo, hi};
    };
    const auto [x0, x1] = span(x);
    const auto [y0, y1] = span(y);
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<line x1=\"" << pad << "\" y1=\"" << size - pad << "\" x2=\"" << size - pad << "\" y2=\"" << size - pad
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\"" << size - pad
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << size / 2 << "\" y=\"" << size - 12 << "\" text-anchor=\"middle\">PC1</text>\n";
    os << "<text x=\"14\" y=\"" << size / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " << size / 2
       << ")\">PC2</text>\n";
    const double w = size - 2.0 * pad;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double px = pad + (x(i) - x0) / (x1 - x0) * w;
        const double py = size - pad - (y(i) - y0) / (y1 - y0) * w;
        if (is_sample(i, samples_from)) {
            os << "<rect x=\"" << px - 4 << "\" y=\"" << py - 4 << "\" width=\"8\" height=\"8\" fill=\"darkorange\"/>\n";
        } else {
            os << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"4\" fill=\"steelblue\"/>\n";
        }
        os << "<text x=\"" << px + 6 << "\" y=\"" << py - 6 << "\" font-size=\"10\">" << xml_escape(id_at(ids, i))
           << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace svfd
