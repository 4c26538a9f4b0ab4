#pragma once

#include <functional>
#include <vector>

#include "svfd/network.hpp"

namespace svfd {

/// Velocity field evaluated on a batch of points (rows).
using VelocityFn = std::function<PointMatrix(const PointMatrix&)>;

VelocityFn net_field(const ShapeCodeGrid& grid, const VelocityNet& net);

struct FlowResult {
    /// K + 1 snapshots. Forward: states[0] is the input. Backward: states[K]
    /// is the input and states[0] the inverse map.
    std::vector<PointMatrix> states;
    /// K velocity samples, one per step (the outer evaluation for modified Euler).
    std::vector<PointMatrix> velocities;
    /// Mean over points and steps of |v|^2.
    double kinetic_energy = 0.0;
    bool backward = false;

    int steps() const { return static_cast<int>(velocities.size()); }
    const PointMatrix& mapped() const { return backward ? states.front() : states.back(); }
};

FlowResult integrate_forward(const PointMatrix& points, const VelocityFn& v, int K);
FlowResult integrate_forward(const PointMatrix& points, const ShapeCodeGrid& grid, const VelocityNet& net, int K);

FlowResult integrate_backward_modified(const PointMatrix& points, const VelocityFn& v, int K);
FlowResult integrate_backward_modified(const PointMatrix& points, const ShapeCodeGrid& grid,
                                       const VelocityNet& net, int K);

struct FixedPointOptions {
    double tolerance = 1e-10;
    int max_iters = 50;
};

FlowResult integrate_backward_implicit(const PointMatrix& points, const VelocityFn& v, int K,
                                       const FixedPointOptions& opts = {});
FlowResult integrate_backward_implicit(const PointMatrix& points, const ShapeCodeGrid& grid,
                                       const VelocityNet& net, int K, const FixedPointOptions& opts = {});

const PointMatrix& geodesic_path(const FlowResult& result, int step);

/// Sum of the two directions' mean squared speeds.
double kinetic_energy(const FlowResult& forward, const FlowResult& backward);
/// Averaged over the shapes of a batch.
double kinetic_energy(const std::vector<FlowResult>& forward, const std::vector<FlowResult>& backward);

enum class Scheme { ForwardEuler, ModifiedEuler };

/// Recorded flow for reverse-mode differentiation. Points are columns.
template <class T>
struct FlowTape {
    Scheme scheme = Scheme::ForwardEuler;
    int K = 0;
    std::vector<EvalTape<T>> outer;
    std::vector<EvalTape<T>> inner;  // modified Euler predictor evaluations
    std::vector<Mat<T>> velocities;  // outer velocity of each step
    double speed_sum = 0.0;          // sum over points and steps of |v|^2

    std::size_t bytes() const;
};

/// Runs K steps from x0 and returns the final state (forward Euler maps
/// forward, modified Euler maps backward).
template <class T>
Mat<T> flow_record(const NetEvaluator<T>& ev, const Mat<T>& x0, const Mat<T>& grid, int K, Scheme scheme,
                   FlowTape<T>& tape);

/// Adjoint of flow_record. `d_final` is dL/d(final state); `rho` weights the
/// kinetic term rho * sum |v|^2. Returns dL/dx0 and accumulates parameter and
/// grid gradients.
template <class T>
Mat<T> flow_adjoint(const NetEvaluator<T>& ev, const FlowTape<T>& tape, const Mat<T>& grid, const Mat<T>& d_final,
                    double rho, Mat<T>* d_grid, Eigen::VectorXd* d_theta);

}  // namespace svfd
