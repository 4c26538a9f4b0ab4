#pragma once

#include <cstdint>
#include <vector>

#include "svfd/geometry.hpp"

namespace svfd {

/// Widths and depths of the velocity network. `l_df` counts the linear output
/// head, so the DF block has l_df - 1 hidden layers of width w_df.
struct Architecture {
    int w_fa = 64;
    int l_fa = 3;
    int w_df = 256;
    int l_df = 5;
    int n_e = 3;
    int g_z = 2;
    int n_z = 256;
    double negative_slope = 0.2;

    int code_channels() const;
    int fa_input() const;
    int fpe_width() const;
    int df_input() const;
    std::size_t parameter_count() const;
    void validate() const;
};

/// Location of one dense layer inside the flat parameter vector: a row-major
/// [out x in] weight block followed by `out` biases.
struct LayerSlot {
    std::size_t offset = 0;
    int out = 0;
    int in = 0;
    bool activated = true;

    std::size_t weight_count() const { return static_cast<std::size_t>(out) * static_cast<std::size_t>(in); }
    std::size_t bias_offset() const { return offset + weight_count(); }
    std::size_t end() const { return bias_offset() + static_cast<std::size_t>(out); }
};

class VelocityNet {
public:
    VelocityNet() : VelocityNet(Architecture{}) {}
    explicit VelocityNet(const Architecture& arch);

    const Architecture& arch() const { return arch_; }
    const std::vector<LayerSlot>& layers() const { return layers_; }
    /// First `fa_layer_count()` slots are FA layers, the rest DF (head last).
    std::size_t fa_layer_count() const { return static_cast<std::size_t>(arch_.l_fa); }

    Eigen::VectorXd& params() { return params_; }
    const Eigen::VectorXd& params() const { return params_; }
    std::size_t num_params() const { return static_cast<std::size_t>(params_.size()); }

    /// Throws if the stored layer chain does not match the architecture.
    void validate() const;
    std::uint64_t checksum() const;

private:
    Architecture arch_;
    std::vector<LayerSlot> layers_;
    Eigen::VectorXd params_;
};

/// Shape code grid: channels contiguous, nodes ordered x fastest, then y, then
/// z. The flat code vector is exactly this buffer.
struct ShapeCodeGrid {
    int g = 2;
    int channels = 0;
    Eigen::MatrixXd values;  // channels x g^3

    Eigen::VectorXd flatten() const;
    int node(int i, int j, int k) const { return i + g * (j + g * k); }
};

ShapeCodeGrid reshape_code(const Eigen::VectorXd& z, int g_z);
Eigen::VectorXd position_aware_code(const Vec3& x, const ShapeCodeGrid& grid);
Eigen::VectorXd fpe(const Eigen::VectorXd& features, int n_e);

struct InitResult {
    VelocityNet net;
    Eigen::MatrixXd codes;  // N_z x shapes
};

void kaiming_init(VelocityNet& net, Rng& rng);
Eigen::MatrixXd sample_initial_codes(int n_z, int count, Rng& rng);
InitResult init_params(const Architecture& arch, int shape_count, std::uint64_t seed);

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

/// Trilinear weights of a batch of points (clamped into the unit cube).
template <class T>
struct InterpTape {
    Eigen::Matrix<int, 8, Eigen::Dynamic> nodes;
    Eigen::Matrix<T, 3, Eigen::Dynamic> frac;  // local coordinates in the cell
    Eigen::Matrix<bool, 3, Eigen::Dynamic> inside;
    T cells = 1;  // g - 1
};

/// Everything the vector-Jacobian product needs from one batched evaluation.
/// Layer outputs are not stored: each one is the next layer's input (the last
/// FA output is the leading block of the first DF input).
template <class T>
struct EvalTape {
    InterpTape<T> interp;
    std::vector<Mat<T>> inputs;  // per layer input, columns are points

    std::size_t bytes() const;
};

/// Batched evaluation of the velocity field in precision T. Points are stored
/// as columns (3 x N).
template <class T>
class NetEvaluator {
public:
    explicit NetEvaluator(const VelocityNet& net);

    const Architecture& arch() const { return arch_; }
    std::size_t num_params() const { return num_params_; }

    Mat<T> forward(const Mat<T>& x, const Mat<T>& grid, EvalTape<T>* tape) const;

    /// Given dL/dV, returns dL/dX and accumulates into d_grid (c x g^3) and
    /// d_theta (flat, parameter layout) when they are non-null. `grid` must be
    /// the one used in the forward pass.
    Mat<T> backward(const EvalTape<T>& tape, const Mat<T>& grid, const Mat<T>& dv, Mat<T>* d_grid,
                    Eigen::VectorXd* d_theta) const;

private:
    Architecture arch_;
    std::vector<LayerSlot> layers_;
    std::vector<Mat<T>> weights_;
    std::vector<Eigen::Matrix<T, Eigen::Dynamic, 1>> biases_;
    std::size_t num_params_ = 0;
};

extern template class NetEvaluator<float>;
extern template class NetEvaluator<double>;

/// Single-point convenience evaluation in 64-bit arithmetic.
Vec3 velocity(const Vec3& x, const ShapeCodeGrid& grid, const VelocityNet& net);
PointMatrix velocity(const PointMatrix& x, const ShapeCodeGrid& grid, const VelocityNet& net);

}  // namespace svfd
