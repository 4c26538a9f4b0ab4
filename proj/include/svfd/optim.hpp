#pragma once

#include <deque>
#include <functional>

#include <Eigen/Dense>

namespace svfd {

struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamState(Eigen::Index n = 0) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grads, AdamState& state, double lr);

/// Returns the loss at z and writes the gradient when `grad` is non-null.
using LossClosure = std::function<double(const Eigen::VectorXd& z, Eigen::VectorXd* grad)>;

struct LbfgsConfig {
    int history = 10;
    double armijo_c = 1e-4;
    double shrink = 0.5;
    int max_trials = 20;
    double curvature_eps = 1e-10;
};

struct LbfgsState {
    std::deque<Eigen::VectorXd> s;
    std::deque<Eigen::VectorXd> y;
    bool cached = false;  // f and g below belong to the current iterate
    double f = 0.0;
    Eigen::VectorXd g;
    int fallbacks = 0;

    void reset() {
        s.clear();
        y.clear();
        cached = false;
    }
};

struct LbfgsStepInfo {
    double loss_before = 0.0;
    double loss_after = 0.0;
    bool moved = false;
    bool fallback = false;
};

/// Two-loop recursion direction plus backtracking Armijo search. On search
/// failure retries along the negative gradient and clears the history.
LbfgsStepInfo lbfgs_step(Eigen::VectorXd& z, const LossClosure& loss, LbfgsState& state, const LbfgsConfig& cfg = {});

/// Two-loop recursion alone; exposed for tests.
Eigen::VectorXd lbfgs_direction(const Eigen::VectorXd& g, const std::deque<Eigen::VectorXd>& s,
                                const std::deque<Eigen::VectorXd>& y);

}  // namespace svfd
