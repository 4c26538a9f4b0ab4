#include "svfd/optim.hpp"

#include <cmath>
#include <vector>

#include "svfd/error.hpp"

namespace svfd {

void adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grads, AdamState& st, double lr) {
    if (grads.size() != params.size()) throw_validation("gradient length does not match parameters");
    if (st.m.size() != params.size() || st.v.size() != params.size()) {
        throw_validation("optimizer state does not match parameters");
    }
    if (!grads.allFinite()) throw_numeric("non-finite gradient passed to adam");
    ++st.step;
    st.m = st.beta1 * st.m + (1.0 - st.beta1) * grads;
    st.v = st.beta2 * st.v + (1.0 - st.beta2) * grads.cwiseAbs2();
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    params.array() -= lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + st.eps);
}

Eigen::VectorXd lbfgs_direction(const Eigen::VectorXd& g, const std::deque<Eigen::VectorXd>& s,
                                const std::deque<Eigen::VectorXd>& y) {
    Eigen::VectorXd q = g;
    const std::size_t n = s.size();
    std::vector<double> alpha(n), rho(n);
    for (std::size_t i = n; i-- > 0;) {
        rho[i] = 1.0 / s[i].dot(y[i]);
        alpha[i] = rho[i] * s[i].dot(q);
        q -= alpha[i] * y[i];
    }
    if (n > 0) q *= s.back().dot(y.back()) / y.back().squaredNorm();
    for (std::size_t i = 0; i < n; ++i) {
        const double beta = rho[i] * y[i].dot(q);
        q += (alpha[i] - beta) * s[i];
    }
    return -q;
}

namespace {

struct Search {
    bool ok = false;
    Eigen::VectorXd z;
    Eigen::VectorXd g;
    double f = 0.0;
};

Search backtrack(const Eigen::VectorXd& z, double f0, const Eigen::VectorXd& g0, const Eigen::VectorXd& d,
                 const LossClosure& loss, const LbfgsConfig& cfg) {
    Search out;
    const double slope = g0.dot(d);
    double step = 1.0;
    Eigen::VectorXd g;
    for (int t = 0; t < cfg.max_trials; ++t) {
        Eigen::VectorXd cand = z + step * d;
        const double f = loss(cand, &g);
        if (std::isfinite(f) && f <= f0 + cfg.armijo_c * step * slope) {
            out = {true, std::move(cand), g, f};
            return out;
        }
        step *= cfg.shrink;
    }
    return out;
}

}  // namespace

LbfgsStepInfo lbfgs_step(Eigen::VectorXd& z, const LossClosure& loss, LbfgsState& st, const LbfgsConfig& cfg) {
    if (cfg.history < 0 || cfg.max_trials < 1 || !(cfg.shrink > 0.0 && cfg.shrink < 1.0)) {
        throw_validation("invalid L-BFGS settings");
    }
    if (!st.cached) {
        st.f = loss(z, &st.g);
        st.cached = true;
    }
    LbfgsStepInfo info;
    info.loss_before = info.loss_after = st.f;
    if (!st.g.allFinite()) throw_numeric("non-finite gradient in L-BFGS");
    if (st.g.squaredNorm() == 0.0) return info;

    Eigen::VectorXd d = lbfgs_direction(st.g, st.s, st.y);
    if (!(st.g.dot(d) < 0.0)) {
        st.s.clear();
        st.y.clear();
        d = -st.g;
    }
    Search r = backtrack(z, st.f, st.g, d, loss, cfg);
    if (!r.ok && !st.s.empty()) {
        info.fallback = true;
        ++st.fallbacks;
        st.s.clear();
        st.y.clear();
        r = backtrack(z, st.f, st.g, -st.g, loss, cfg);
    }
    if (!r.ok) {
        info.fallback = true;
        warn("L-BFGS line search failed; iterate left unchanged");
        return info;
    }
    Eigen::VectorXd s = r.z - z;
    Eigen::VectorXd y = r.g - st.g;
    if (s.dot(y) > cfg.curvature_eps && cfg.history > 0) {
        st.s.push_back(std::move(s));
        st.y.push_back(std::move(y));
        while (static_cast<int>(st.s.size()) > cfg.history) {
            st.s.pop_front();
            st.y.pop_front();
        }
    }
    z = std::move(r.z);
    st.f = r.f;
    st.g = std::move(r.g);
    info.loss_after = st.f;
    info.moved = true;
    return info;
}

}  // namespace svfd
