#include "svfd/network.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "svfd/error.hpp"

namespace svfd {

int Architecture::code_channels() const {
    const int nodes = g_z * g_z * g_z;
    return nodes > 0 ? n_z / nodes : 0;
}

int Architecture::fa_input() const { return 3 + code_channels(); }
int Architecture::fpe_width() const { return (2 * n_e + 1) * w_fa; }
int Architecture::df_input() const { return fpe_width() + code_channels(); }

void Architecture::validate() const {
    if (w_fa < 1 || w_df < 1) throw_validation("network.w_fa and network.w_df must be positive");
    if (l_fa < 1) throw_validation("network.l_fa must be at least 1");
    if (l_df < 2) throw_validation("network.l_df must be at least 2 (one hidden layer plus the output head)");
    if (n_e < 0) throw_validation("network.n_e must be non-negative");
    if (g_z < 2) throw_validation("network.g_z must be at least 2");
    if (n_z < 1) throw_validation("network.n_z must be positive");
    const int nodes = g_z * g_z * g_z;
    if (n_z % nodes != 0) {
        std::ostringstream os;
        os << "network.n_z = " << n_z << " is not divisible by g_z^3 = " << nodes;
        throw_validation(os.str());
    }
    if (!(negative_slope >= 0.0 && negative_slope < 1.0)) throw_validation("network.negative_slope must lie in [0, 1)");
}

namespace {

std::vector<LayerSlot> build_layers(const Architecture& a) {
    std::vector<LayerSlot> layers;
    std::size_t off = 0;
    auto add = [&](int out, int in, bool act) {
        LayerSlot s{off, out, in, act};
        off = s.end();
        layers.push_back(s);
    };
    add(a.w_fa, a.fa_input(), true);
    for (int l = 1; l < a.l_fa; ++l) add(a.w_fa, a.w_fa, true);
    add(a.w_df, a.df_input(), true);
    for (int l = 2; l < a.l_df; ++l) add(a.w_df, a.w_df, true);
    add(3, a.w_df, false);
    return layers;
}

}  // namespace

std::size_t Architecture::parameter_count() const {
    validate();
    return build_layers(*this).back().end();
}

VelocityNet::VelocityNet(const Architecture& arch) : arch_(arch) {
    arch_.validate();
    layers_ = build_layers(arch_);
    params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layers_.back().end()));
}

void VelocityNet::validate() const {
    arch_.validate();
    const auto expect = build_layers(arch_);
    if (expect.size() != layers_.size()) throw_validation("layer count does not match architecture");
    for (std::size_t l = 0; l < expect.size(); ++l) {
        if (expect[l].in != layers_[l].in || expect[l].out != layers_[l].out || expect[l].offset != layers_[l].offset) {
            throw_validation("layer " + std::to_string(l) + " width chain mismatch");
        }
    }
    if (static_cast<std::size_t>(params_.size()) != expect.back().end()) {
        throw_validation("parameter vector length does not match architecture");
    }
    if (!params_.allFinite()) throw_validation("network parameters contain non-finite values");
}

std::uint64_t VelocityNet::checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    const auto* bytes = reinterpret_cast<const unsigned char*>(params_.data());
    const std::size_t n = static_cast<std::size_t>(params_.size()) * sizeof(double);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
    }
    return h;
}

Eigen::VectorXd ShapeCodeGrid::flatten() const {
    return Eigen::Map<const Eigen::VectorXd>(values.data(), values.size());
}

ShapeCodeGrid reshape_code(const Eigen::VectorXd& z, int g_z) {
    if (g_z < 2) throw_validation("g_z must be at least 2");
    const int nodes = g_z * g_z * g_z;
    if (z.size() == 0 || z.size() % nodes != 0) {
        std::ostringstream os;
        os << "code length " << z.size() << " is not divisible by g_z^3 = " << nodes;
        throw_validation(os.str());
    }
    ShapeCodeGrid grid;
    grid.g = g_z;
    grid.channels = static_cast<int>(z.size() / nodes);
    grid.values = Eigen::Map<const Eigen::MatrixXd>(z.data(), grid.channels, nodes);
    return grid;
}

namespace {

template <class T>
void interp_weights(const InterpTape<T>& tp, Eigen::Index n, T w[8]) {
    const T tx = tp.frac(0, n), ty = tp.frac(1, n), tz = tp.frac(2, n);
    for (int b = 0; b < 8; ++b) {
        w[b] = ((b & 1) ? tx : T(1) - tx) * ((b & 2) ? ty : T(1) - ty) * ((b & 4) ? tz : T(1) - tz);
    }
}

template <class T>
InterpTape<T> locate(const Mat<T>& x, int g) {
    const Eigen::Index n = x.cols();
    InterpTape<T> tp;
    tp.nodes.resize(8, n);
    tp.frac.resize(3, n);
    tp.inside.resize(3, n);
    tp.cells = static_cast<T>(g - 1);
    for (Eigen::Index p = 0; p < n; ++p) {
        int base[3];
        for (int a = 0; a < 3; ++a) {
            const T u = x(a, p);
            const bool in = u >= T(0) && u <= T(1);
            const T uc = std::clamp(u, T(0), T(1));
            const T s = uc * tp.cells;
            const int i0 = std::min(static_cast<int>(std::floor(s)), g - 2);
            base[a] = i0;
            tp.frac(a, p) = s - static_cast<T>(i0);
            tp.inside(a, p) = in;
        }
        for (int b = 0; b < 8; ++b) {
            const int i = base[0] + (b & 1), j = base[1] + ((b >> 1) & 1), k = base[2] + ((b >> 2) & 1);
            tp.nodes(b, p) = i + g * (j + g * k);
        }
    }
    return tp;
}

template <class T>
Mat<T> interpolate(const InterpTape<T>& tp, const Mat<T>& grid) {
    const Eigen::Index n = tp.nodes.cols();
    Mat<T> out = Mat<T>::Zero(grid.rows(), n);
    T w[8];
    for (Eigen::Index p = 0; p < n; ++p) {
        interp_weights(tp, p, w);
        for (int b = 0; b < 8; ++b) out.col(p) += w[b] * grid.col(tp.nodes(b, p));
    }
    return out;
}

template <class T>
void leaky_inplace(Mat<T>& z, T slope) {
    z = z.cwiseMax(slope * z);
}

}  // namespace

Eigen::VectorXd position_aware_code(const Vec3& x, const ShapeCodeGrid& grid) {
    Mat<double> pts(3, 1);
    pts.col(0) = x;
    const auto tp = locate<double>(pts, grid.g);
    return interpolate<double>(tp, grid.values).col(0);
}

Eigen::VectorXd fpe(const Eigen::VectorXd& features, int n_e) {
    if (n_e < 0) throw_validation("n_e must be non-negative");
    const Eigen::Index w = features.size();
    Eigen::VectorXd out((2 * n_e + 1) * w);
    out.head(w) = features;
    for (int k = 0; k < n_e; ++k) {
        const double f = std::ldexp(std::numbers::pi, k);
        out.segment((1 + 2 * k) * w, w) = (f * features.array()).sin();
        out.segment((2 + 2 * k) * w, w) = (f * features.array()).cos();
    }
    return out;
}

void kaiming_init(VelocityNet& net, Rng& rng) {
    const double slope = net.arch().negative_slope;
    const double gain = std::sqrt(2.0 / (1.0 + slope * slope));
    auto& p = net.params();
    for (const auto& s : net.layers()) {
        std::normal_distribution<double> dist(0.0, gain / std::sqrt(static_cast<double>(s.in)));
        for (std::size_t i = 0; i < s.weight_count(); ++i) p(static_cast<Eigen::Index>(s.offset + i)) = dist(rng);
        for (int i = 0; i < s.out; ++i) p(static_cast<Eigen::Index>(s.bias_offset()) + i) = 0.0;
    }
}

Eigen::MatrixXd sample_initial_codes(int n_z, int count, Rng& rng) {
    if (n_z < 1 || count < 0) throw_validation("invalid code matrix shape");
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / n_z));
    Eigen::MatrixXd z(n_z, count);
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        for (Eigen::Index i = 0; i < z.rows(); ++i) z(i, j) = dist(rng);
    }
    return z;
}

InitResult init_params(const Architecture& arch, int shape_count, std::uint64_t seed) {
    Rng rng(seed);
    InitResult r{VelocityNet(arch), {}};
    kaiming_init(r.net, rng);
    r.codes = sample_initial_codes(arch.n_z, shape_count, rng);
    return r;
}

template <class T>
std::size_t EvalTape<T>::bytes() const {
    std::size_t b = static_cast<std::size_t>(interp.nodes.size()) * (sizeof(int) + sizeof(T));
    for (const auto& m : inputs) b += static_cast<std::size_t>(m.size()) * sizeof(T);
    return b;
}

template struct EvalTape<float>;
template struct EvalTape<double>;

template <class T>
NetEvaluator<T>::NetEvaluator(const VelocityNet& net)
    : arch_(net.arch()), layers_(net.layers()), num_params_(net.num_params()) {
    net.validate();
    const auto& p = net.params();
    for (const auto& s : layers_) {
        const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(
            p.data() + s.offset, s.out, s.in);
        weights_.push_back(w.template cast<T>());
        biases_.push_back(p.segment(static_cast<Eigen::Index>(s.bias_offset()), s.out).template cast<T>());
    }
}

template <class T>
Mat<T> NetEvaluator<T>::forward(const Mat<T>& x, const Mat<T>& grid, EvalTape<T>* tape) const {
    const int c = arch_.code_channels();
    const int g = arch_.g_z;
    if (x.rows() != 3) throw_validation("points must be 3 x N");
    if (grid.rows() != c || grid.cols() != g * g * g) throw_validation("code grid shape does not match architecture");
    const Eigen::Index n = x.cols();
    const T slope = static_cast<T>(arch_.negative_slope);

    InterpTape<T> tp = locate<T>(x, g);
    const Mat<T> zbar = interpolate<T>(tp, grid);

    Mat<T> h(3 + c, n);
    h.topRows(3) = x;
    h.bottomRows(c) = zbar;

    if (tape) {
        tape->interp = std::move(tp);
        tape->inputs.clear();
        tape->inputs.reserve(layers_.size());
    }

    const std::size_t nfa = static_cast<std::size_t>(arch_.l_fa);
    for (std::size_t l = 0; l < nfa; ++l) {
        Mat<T> z = weights_[l] * h;
        z.colwise() += biases_[l];
        leaky_inplace(z, slope);
        if (tape) {
            tape->inputs.push_back(std::move(h));
        }
        h = std::move(z);
    }

    // Fourier positional encoding of the FA features, then append the code.
    const int w = arch_.w_fa;
    Mat<T> d(arch_.df_input(), n);
    d.topRows(w) = h;
    for (int k = 0; k < arch_.n_e; ++k) {
        const T f = static_cast<T>(std::ldexp(std::numbers::pi, k));
        const auto arg = (f * h.array()).eval();
        d.middleRows((1 + 2 * k) * w, w) = arg.sin().matrix();
        d.middleRows((2 + 2 * k) * w, w) = arg.cos().matrix();
    }
    d.bottomRows(c) = zbar;
    h = std::move(d);

    for (std::size_t l = nfa; l < layers_.size(); ++l) {
        Mat<T> z = weights_[l] * h;
        z.colwise() += biases_[l];
        if (layers_[l].activated) leaky_inplace(z, slope);
        if (tape) {
            tape->inputs.push_back(std::move(h));
        }
        h = std::move(z);
    }
    return h;
}

template <class T>
Mat<T> NetEvaluator<T>::backward(const EvalTape<T>& tape, const Mat<T>& grid, const Mat<T>& dv, Mat<T>* d_grid,
                                 Eigen::VectorXd* d_theta) const {
    if (tape.inputs.size() != layers_.size()) throw_validation("tape does not belong to this network");
    const int c = arch_.code_channels();
    const int w = arch_.w_fa;
    const T slope = static_cast<T>(arch_.negative_slope);
    const std::size_t nfa = static_cast<std::size_t>(arch_.l_fa);
    const Eigen::Index n = dv.cols();
    if (dv.rows() != 3 || tape.inputs[0].cols() != n) throw_validation("gradient shape does not match tape");

    auto accumulate = [&](std::size_t l, const Mat<T>& gz) {
        if (!d_theta) return;
        const auto& s = layers_[l];
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> dw(
            d_theta->data() + s.offset, s.out, s.in);
        dw += (gz * tape.inputs[l].transpose()).template cast<double>();
        d_theta->segment(static_cast<Eigen::Index>(s.bias_offset()), s.out) +=
            gz.rowwise().sum().template cast<double>();
    };
    auto leaky_grad = [&](Mat<T>& gz, const auto& out) {
        gz.array() *= (out.array() > T(0)).select(T(1), Mat<T>::Constant(gz.rows(), gz.cols(), slope).array());
    };
    if (d_theta && static_cast<std::size_t>(d_theta->size()) != num_params_) {
        throw_validation("parameter gradient has the wrong length");
    }

    Mat<T> g = dv;
    for (std::size_t l = layers_.size(); l-- > nfa;) {
        if (layers_[l].activated) leaky_grad(g, tape.inputs[l + 1]);
        accumulate(l, g);
        g = weights_[l].transpose() * g;
    }

    // g is now d(DF input) = [d fpe ; d zbar].
    Mat<T> dzbar = g.bottomRows(c);
    const Mat<T>& d_in = tape.inputs[nfa];
    Mat<T> df = g.topRows(w);
    for (int k = 0; k < arch_.n_e; ++k) {
        const T f = static_cast<T>(std::ldexp(std::numbers::pi, k));
        const auto sin_k = d_in.middleRows((1 + 2 * k) * w, w).array();
        const auto cos_k = d_in.middleRows((2 + 2 * k) * w, w).array();
        df.array() += f * (g.middleRows((1 + 2 * k) * w, w).array() * cos_k -
                           g.middleRows((2 + 2 * k) * w, w).array() * sin_k);
    }

    g = std::move(df);
    for (std::size_t l = nfa; l-- > 0;) {
        if (l + 1 == nfa) {
            leaky_grad(g, d_in.topRows(w));
        } else {
            leaky_grad(g, tape.inputs[l + 1]);
        }
        accumulate(l, g);
        g = weights_[l].transpose() * g;
    }
    dzbar += g.bottomRows(c);
    Mat<T> dx = g.topRows(3);

    // Trilinear interpolation: grid values and point positions.
    const auto& tp = tape.interp;
    const int nodes = arch_.g_z * arch_.g_z * arch_.g_z;
    const bool need_grid = d_grid != nullptr;
    if (need_grid && (d_grid->rows() != c || d_grid->cols() != nodes)) {
        throw_validation("grid gradient has the wrong shape");
    }
    T wts[8];
    for (Eigen::Index p = 0; p < n; ++p) {
        interp_weights(tp, p, wts);
        const T tx = tp.frac(0, p), ty = tp.frac(1, p), tz = tp.frac(2, p);
        T dwx[8], dwy[8], dwz[8];
        for (int b = 0; b < 8; ++b) {
            const T wx = (b & 1) ? tx : T(1) - tx, sx = (b & 1) ? T(1) : T(-1);
            const T wy = (b & 2) ? ty : T(1) - ty, sy = (b & 2) ? T(1) : T(-1);
            const T wz = (b & 4) ? tz : T(1) - tz, sz = (b & 4) ? T(1) : T(-1);
            dwx[b] = sx * wy * wz;
            dwy[b] = wx * sy * wz;
            dwz[b] = wx * wy * sz;
        }
        T gx = 0, gy = 0, gzv = 0;
        for (int b = 0; b < 8; ++b) {
            const auto col = tp.nodes(b, p);
            if (need_grid) d_grid->col(col) += wts[b] * dzbar.col(p);
            const T proj = grid.col(col).dot(dzbar.col(p));
            gx += dwx[b] * proj;
            gy += dwy[b] * proj;
            gzv += dwz[b] * proj;
        }
        if (tp.inside(0, p)) dx(0, p) += tp.cells * gx;
        if (tp.inside(1, p)) dx(1, p) += tp.cells * gy;
        if (tp.inside(2, p)) dx(2, p) += tp.cells * gzv;
    }
    return dx;
}

template class NetEvaluator<float>;
template class NetEvaluator<double>;

Vec3 velocity(const Vec3& x, const ShapeCodeGrid& grid, const VelocityNet& net) {
    PointMatrix p(1, 3);
    p.row(0) = x.transpose();
    return velocity(p, grid, net).row(0).transpose();
}

PointMatrix velocity(const PointMatrix& x, const ShapeCodeGrid& grid, const VelocityNet& net) {
    const NetEvaluator<double> ev(net);
    const Mat<double> xt = x.transpose();
    return ev.forward(xt, grid.values, nullptr).transpose();
}

}  // namespace svfd
