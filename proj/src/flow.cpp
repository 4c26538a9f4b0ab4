#include "svfd/flow.hpp"

#include <memory>
#include <sstream>

#include "svfd/error.hpp"

namespace svfd {

namespace {

void check_steps(int K) {
    if (K < 1) throw_validation("number of steps K must be at least 1");
}

void check_finite(const PointMatrix& x, int step) {
    if (!x.allFinite()) {
        std::ostringstream os;
        os << "non-finite state at step " << step << " (diverging field)";
        throw_numeric(os.str());
    }
}

double mean_speed(const std::vector<PointMatrix>& vs) {
    double s = 0.0;
    Eigen::Index count = 0;
    for (const auto& v : vs) {
        s += v.squaredNorm();
        count += v.rows();
    }
    return count > 0 ? s / static_cast<double>(count) : 0.0;
}

}  // namespace

VelocityFn net_field(const ShapeCodeGrid& grid, const VelocityNet& net) {
    auto ev = std::make_shared<NetEvaluator<double>>(net);
    auto g = std::make_shared<Mat<double>>(grid.values);
    return [ev, g](const PointMatrix& x) -> PointMatrix {
        const Mat<double> xt = x.transpose();
        return ev->forward(xt, *g, nullptr).transpose();
    };
}

FlowResult integrate_forward(const PointMatrix& points, const VelocityFn& v, int K) {
    check_steps(K);
    FlowResult r;
    const double h = 1.0 / K;
    r.states.reserve(static_cast<std::size_t>(K) + 1);
    r.states.push_back(points);
    for (int k = 0; k < K; ++k) {
        PointMatrix vel = v(r.states.back());
        PointMatrix next = r.states.back() + h * vel;
        check_finite(next, k + 1);
        r.velocities.push_back(std::move(vel));
        r.states.push_back(std::move(next));
    }
    r.kinetic_energy = mean_speed(r.velocities);
    return r;
}

FlowResult integrate_forward(const PointMatrix& points, const ShapeCodeGrid& grid, const VelocityNet& net, int K) {
    return integrate_forward(points, net_field(grid, net), K);
}

FlowResult integrate_backward_modified(const PointMatrix& points, const VelocityFn& v, int K) {
    check_steps(K);
    FlowResult r;
    r.backward = true;
    const double h = 1.0 / K;
    std::vector<PointMatrix> states{points};
    std::vector<PointMatrix> vels;
    for (int k = K; k > 0; --k) {
        const PointMatrix& x = states.back();
        const PointMatrix y = x - h * v(x);
        PointMatrix w = v(y);
        PointMatrix prev = x - h * w;
        check_finite(prev, k - 1);
        vels.push_back(std::move(w));
        states.push_back(std::move(prev));
    }
    r.states.assign(states.rbegin(), states.rend());
    r.velocities.assign(vels.rbegin(), vels.rend());
    r.kinetic_energy = mean_speed(r.velocities);
    return r;
}

FlowResult integrate_backward_modified(const PointMatrix& points, const ShapeCodeGrid& grid,
                                       const VelocityNet& net, int K) {
    return integrate_backward_modified(points, net_field(grid, net), K);
}

FlowResult integrate_backward_implicit(const PointMatrix& points, const VelocityFn& v, int K,
                                       const FixedPointOptions& opts) {
    check_steps(K);
    if (!(opts.tolerance > 0.0) || opts.max_iters < 1) throw_validation("invalid fixed-point options");
    FlowResult r;
    r.backward = true;
    const double h = 1.0 / K;
    std::vector<PointMatrix> states{points};
    std::vector<PointMatrix> vels;
    for (int k = K; k > 0; --k) {
        const PointMatrix& x = states.back();
        PointMatrix guess = x - h * v(x - h * v(x));
        PointMatrix w;
        double update = 0.0;
        bool converged = false;
        for (int it = 0; it < opts.max_iters; ++it) {
            w = v(guess);
            PointMatrix next = x - h * w;
            check_finite(next, k - 1);
            update = (next - guess).cwiseAbs().maxCoeff();
            guess = std::move(next);
            if (update < opts.tolerance) {
                converged = true;
                break;
            }
        }
        if (!converged) {
            std::ostringstream os;
            os << "implicit step " << k << " did not converge in " << opts.max_iters
               << " fixed-point iterations (last update " << update << ")";
            throw_numeric(os.str());
        }
        vels.push_back(v(guess));
        states.push_back(std::move(guess));
    }
    r.states.assign(states.rbegin(), states.rend());
    r.velocities.assign(vels.rbegin(), vels.rend());
    r.kinetic_energy = mean_speed(r.velocities);
    return r;
}

FlowResult integrate_backward_implicit(const PointMatrix& points, const ShapeCodeGrid& grid,
                                       const VelocityNet& net, int K, const FixedPointOptions& opts) {
    return integrate_backward_implicit(points, net_field(grid, net), K, opts);
}

const PointMatrix& geodesic_path(const FlowResult& result, int step) {
    if (step < 0 || step >= static_cast<int>(result.states.size())) {
        throw_validation("step " + std::to_string(step) + " out of range [0, " +
                         std::to_string(static_cast<int>(result.states.size()) - 1) + "]");
    }
    return result.states[static_cast<std::size_t>(step)];
}

double kinetic_energy(const FlowResult& forward, const FlowResult& backward) {
    return forward.kinetic_energy + backward.kinetic_energy;
}

double kinetic_energy(const std::vector<FlowResult>& forward, const std::vector<FlowResult>& backward) {
    if (forward.size() != backward.size()) throw_validation("forward and backward batches differ in size");
    if (forward.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < forward.size(); ++i) s += kinetic_energy(forward[i], backward[i]);
    return s / static_cast<double>(forward.size());
}

template <class T>
std::size_t FlowTape<T>::bytes() const {
    std::size_t b = 0;
    for (const auto& t : outer) b += t.bytes();
    for (const auto& t : inner) b += t.bytes();
    for (const auto& v : velocities) b += static_cast<std::size_t>(v.size()) * sizeof(T);
    return b;
}

template <class T>
Mat<T> flow_record(const NetEvaluator<T>& ev, const Mat<T>& x0, const Mat<T>& grid, int K, Scheme scheme,
                   FlowTape<T>& tape) {
    check_steps(K);
    tape = FlowTape<T>{};
    tape.scheme = scheme;
    tape.K = K;
    tape.outer.resize(static_cast<std::size_t>(K));
    if (scheme == Scheme::ModifiedEuler) tape.inner.resize(static_cast<std::size_t>(K));
    const T h = static_cast<T>(1.0 / K);
    Mat<T> x = x0;
    for (int k = 0; k < K; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        Mat<T> w;
        if (scheme == Scheme::ForwardEuler) {
            w = ev.forward(x, grid, &tape.outer[ks]);
            x += h * w;
        } else {
            const Mat<T> u = ev.forward(x, grid, &tape.inner[ks]);
            const Mat<T> y = x - h * u;
            w = ev.forward(y, grid, &tape.outer[ks]);
            x -= h * w;
        }
        if (!x.allFinite()) {
            std::ostringstream os;
            os << "non-finite state at step " << k + 1 << " (diverging field)";
            throw_numeric(os.str());
        }
        tape.speed_sum += static_cast<double>(w.squaredNorm());
        tape.velocities.push_back(std::move(w));
    }
    return x;
}

template <class T>
Mat<T> flow_adjoint(const NetEvaluator<T>& ev, const FlowTape<T>& tape, const Mat<T>& grid, const Mat<T>& d_final,
                    double rho, Mat<T>* d_grid, Eigen::VectorXd* d_theta) {
    const T h = static_cast<T>(1.0 / tape.K);
    const T two_rho = static_cast<T>(2.0 * rho);
    Mat<T> a = d_final;
    for (int k = tape.K; k-- > 0;) {
        const auto ks = static_cast<std::size_t>(k);
        const Mat<T>& w = tape.velocities[ks];
        if (tape.scheme == Scheme::ForwardEuler) {
            const Mat<T> dv = h * a + two_rho * w;
            a += ev.backward(tape.outer[ks], grid, dv, d_grid, d_theta);
        } else {
            const Mat<T> dw = -h * a + two_rho * w;
            const Mat<T> gy = ev.backward(tape.outer[ks], grid, dw, d_grid, d_theta);
            const Mat<T> du = -h * gy;
            a += gy;
            a += ev.backward(tape.inner[ks], grid, du, d_grid, d_theta);
        }
        if (!a.allFinite()) {
            std::ostringstream os;
            os << "non-finite adjoint at step " << k << " of the reverse pass";
            throw_numeric(os.str());
        }
    }
    return a;
}

template struct FlowTape<float>;
template struct FlowTape<double>;
template Mat<float> flow_record(const NetEvaluator<float>&, const Mat<float>&, const Mat<float>&, int, Scheme,
                                FlowTape<float>&);
template Mat<double> flow_record(const NetEvaluator<double>&, const Mat<double>&, const Mat<double>&, int, Scheme,
                                 FlowTape<double>&);
template Mat<float> flow_adjoint(const NetEvaluator<float>&, const FlowTape<float>&, const Mat<float>&,
                                 const Mat<float>&, double, Mat<float>*, Eigen::VectorXd*);
template Mat<double> flow_adjoint(const NetEvaluator<double>&, const FlowTape<double>&, const Mat<double>&,
                                  const Mat<double>&, double, Mat<double>*, Eigen::VectorXd*);

}  // namespace svfd
