#include "svfd/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "svfd/error.hpp"

namespace svfd {

void TrainConfig::validate() const {
    if (epochs < 1) throw_validation("train.epochs must be at least 1");
    if (batch_size < 1) throw_validation("train.batch_size must be at least 1");
    if (checkpoint_every < 0) throw_validation("train.checkpoint_every must be non-negative");
    if (points < 1) throw_validation("train.points must be at least 1");
    if (steps < 1) throw_validation("train.steps must be at least 1");
    if (!(adaptive >= 0.0 && adaptive < 1.0)) throw_validation("train.adaptive must lie in [0, 1)");
    if (!(lr_theta > 0.0) || !(lr_z > 0.0)) throw_validation("train.lr_theta and train.lr_z must be positive");
    if (w_z < 0.0 || w_theta < 0.0 || w_v < 0.0 || w_n < 0.0) throw_validation("train.w_z, train.w_theta, train.w_v and train.w_n must be non-negative");
    sinkhorn.validate();
    arch.validate();
}

AttachmentOptions TrainConfig::attachment_options() const {
    AttachmentOptions o;
    o.kind = attachment;
    o.w_n = w_n;
    o.sinkhorn = sinkhorn;
    return o;
}

std::vector<std::size_t> adaptive_sample(std::size_t cloud_size, const std::vector<std::size_t>& previous,
                                         const Eigen::VectorXd& losses, std::size_t M, double a, Rng& rng) {
    if (M > cloud_size) {
        throw_validation("cannot sample " + std::to_string(M) + " points from a cloud of " +
                         std::to_string(cloud_size));
    }
    if (!(a >= 0.0 && a <= 1.0)) throw_validation("adaptive fraction must lie in [0, 1]");
    std::size_t keep = 0;
    if (losses.size() > 0) {
        if (static_cast<std::size_t>(losses.size()) != previous.size()) {
            throw_validation("loss cache is not aligned with the previous sample");
        }
        keep = static_cast<std::size_t>(std::floor(a * static_cast<double>(M) + 1e-9));
        keep = std::min(keep, previous.size());
    }

    std::vector<std::size_t> out;
    out.reserve(M);
    std::vector<char> taken(cloud_size, 0);
    if (keep > 0) {
        std::vector<std::size_t> pos(previous.size());
        std::iota(pos.begin(), pos.end(), std::size_t{0});
        std::stable_sort(pos.begin(), pos.end(), [&](std::size_t l, std::size_t r) {
            return losses(static_cast<Eigen::Index>(l)) > losses(static_cast<Eigen::Index>(r));
        });
        for (std::size_t k = 0; k < keep; ++k) {
            const std::size_t idx = previous[pos[k]];
            if (idx >= cloud_size) throw_validation("cached sample index out of range");
            if (taken[idx]) continue;
            taken[idx] = 1;
            out.push_back(idx);
        }
    }
    std::vector<std::size_t> pool;
    pool.reserve(cloud_size - out.size());
    for (std::size_t i = 0; i < cloud_size; ++i) {
        if (!taken[i]) pool.push_back(i);
    }
    const std::size_t fresh = M - out.size();
    for (std::size_t i = 0; i < fresh; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
        out.push_back(pool[i]);
    }
    return out;
}

std::vector<std::vector<std::size_t>> partition_batches(const std::vector<std::size_t>& order, int batch_size) {
    if (batch_size < 1) throw_validation("batch size must be at least 1");
    const std::size_t ns = order.size();
    if (ns == 0) return {};
    const std::size_t nb = std::max<std::size_t>(1, ns / static_cast<std::size_t>(batch_size));
    const std::size_t base = ns / nb;
    const std::size_t extra = ns % nb;
    std::vector<std::vector<std::size_t>> out;
    std::size_t at = 0;
    for (std::size_t b = 0; b < nb; ++b) {
        const std::size_t len = base + (b < extra ? 1 : 0);
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                         order.begin() + static_cast<std::ptrdiff_t>(at + len));
        at += len;
    }
    return out;
}

namespace {

template <class T>
BatchResult evaluate_batch_t(const std::vector<WeightedPointCloud>& sources, const WeightedPointCloud& templ,
                             const VelocityNet& net, const std::vector<Eigen::VectorXd>& codes,
                             const LossSettings& st, bool grad_theta, bool grad_codes) {
    const NetEvaluator<T> ev(net);
    const auto& arch = net.arch();
    const std::size_t B = sources.size();
    const double inv_b = 1.0 / static_cast<double>(B);
    const int K = st.steps;
    const bool need_grad = grad_theta || grad_codes;

    BatchResult res;
    res.pointwise = attachment_is_pointwise(st.attachment.kind);
    if (grad_theta) res.d_theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.num_params()));
    Eigen::VectorXd* d_theta = grad_theta ? &res.d_theta : nullptr;
    const Mat<T> tmpl_pts = templ.points.transpose().template cast<T>();
    const double mt = static_cast<double>(templ.points.rows());

    for (std::size_t i = 0; i < B; ++i) {
        const WeightedPointCloud& src = sources[i];
        const double ms = static_cast<double>(src.points.rows());
        const Mat<T> grid = reshape_code(codes[i], arch.g_z).values.template cast<T>();
        Mat<T> d_grid;
        if (grad_codes) d_grid = Mat<T>::Zero(grid.rows(), grid.cols());
        Mat<T>* dg = grad_codes ? &d_grid : nullptr;

        AttachmentValue fwd, inv;
        double ke = 0.0;
        {
            FlowTape<T> tape;
            const Mat<T> x0 = src.points.transpose().template cast<T>();
            const Mat<T> xk = flow_record(ev, x0, grid, K, Scheme::ForwardEuler, tape);
            const WeightedPointCloud mapped = src.with_points(xk.transpose().template cast<double>());
            fwd = evaluate_attachment(mapped, templ, st.attachment, need_grad);
            ke += tape.speed_sum / (ms * K);
            if (need_grad) {
                const Mat<T> d_final = (inv_b * fwd.grad_y.transpose()).template cast<T>();
                flow_adjoint(ev, tape, grid, d_final, st.w_v * inv_b / (ms * K), dg, d_theta);
            }
        }
        {
            FlowTape<T> tape;
            const Mat<T> x0 = tmpl_pts;
            const Mat<T> xk = flow_record(ev, x0, grid, K, Scheme::ModifiedEuler, tape);
            const WeightedPointCloud mapped = templ.with_points(xk.transpose().template cast<double>());
            inv = evaluate_attachment(mapped, src, st.attachment, need_grad);
            ke += tape.speed_sum / (mt * K);
            if (need_grad) {
                const Mat<T> d_final = (inv_b * inv.grad_y.transpose()).template cast<T>();
                flow_adjoint(ev, tape, grid, d_final, st.w_v * inv_b / (mt * K), dg, d_theta);
            }
        }
        res.loss.direct += inv_b * fwd.value;
        res.loss.inverse += inv_b * inv.value;
        res.loss.kinetic += inv_b * ke;
        res.loss.code_reg += st.w_z * codes[i].squaredNorm();
        if (grad_codes) {
            const Eigen::MatrixXd dgd = d_grid.template cast<double>();
            res.d_codes.push_back(Eigen::Map<const Eigen::VectorXd>(dgd.data(), dgd.size()) + 2.0 * st.w_z * codes[i]);
        }
        if (res.pointwise) {
            res.source_losses.push_back(fwd.pointwise_y + inv.pointwise_yp);
            res.template_losses.push_back(fwd.pointwise_yp + inv.pointwise_y);
        }
    }
    if (st.w_theta > 0.0) {
        res.loss.theta_reg = st.w_theta * net.params().squaredNorm();
        if (grad_theta) res.d_theta += 2.0 * st.w_theta * net.params();
    }
    res.loss.total = res.loss.direct + res.loss.inverse + res.loss.code_reg + res.loss.theta_reg +
                     st.w_v * res.loss.kinetic;
    if (!std::isfinite(res.loss.total)) throw_numeric("loss evaluated to a non-finite value");
    return res;
}

LossSettings settings_from(const TrainConfig& cfg) {
    LossSettings s;
    s.steps = cfg.steps;
    s.w_z = cfg.w_z;
    s.w_theta = cfg.w_theta;
    s.w_v = cfg.w_v;
    s.attachment = cfg.attachment_options();
    s.double_precision = cfg.double_precision;
    return s;
}

void check_cloud(const WeightedPointCloud& c, std::size_t m, bool normals, const std::string& what) {
    c.validate();
    if (c.size() < m) {
        throw_validation(what + " has " + std::to_string(c.size()) + " points, fewer than the " +
                         std::to_string(m) + " requested per sample");
    }
    if (normals && !c.has_normals()) throw_validation(what + " lacks normals required by the attachment measure");
}

}  // namespace

BatchResult evaluate_batch(const std::vector<WeightedPointCloud>& sources, const WeightedPointCloud& templ,
                           const VelocityNet& net, const std::vector<Eigen::VectorXd>& codes,
                           const LossSettings& settings, bool grad_theta, bool grad_codes) {
    if (sources.empty()) throw_validation("batch is empty");
    if (codes.size() != sources.size()) throw_validation("one code per batch shape is required");
    for (const auto& z : codes) {
        if (z.size() != net.arch().n_z) throw_validation("code length does not match the architecture");
    }
    if (settings.steps < 1) throw_validation("steps K must be at least 1");
    if (settings.double_precision) {
        return evaluate_batch_t<double>(sources, templ, net, codes, settings, grad_theta, grad_codes);
    }
    return evaluate_batch_t<float>(sources, templ, net, codes, settings, grad_theta, grad_codes);
}

std::pair<double, LossCache> total_loss(const std::vector<WeightedPointCloud>& sources,
                                        const WeightedPointCloud& templ, const VelocityNet& net,
                                        const std::vector<Eigen::VectorXd>& codes, const TrainConfig& cfg) {
    const BatchResult r = evaluate_batch(sources, templ, net, codes, settings_from(cfg), false, false);
    LossCache cache;
    cache.available = r.pointwise;
    if (r.pointwise) {
        cache.source = r.source_losses;
        for (const auto& s : sources) {
            std::vector<std::size_t> idx(s.size());
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            cache.source_index.push_back(std::move(idx));
        }
        cache.templ = Eigen::VectorXd::Zero(templ.points.rows());
        for (const auto& t : r.template_losses) cache.templ += t;
        cache.templ /= static_cast<double>(r.template_losses.size());
        cache.template_index.resize(templ.size());
        std::iota(cache.template_index.begin(), cache.template_index.end(), std::size_t{0});
    }
    return {r.loss.total, cache};
}

TrainResult train(const std::vector<WeightedPointCloud>& sources, const WeightedPointCloud& templ,
                  const TrainConfig& cfg, const TrainCallbacks& callbacks, const TrainInit& init) {
    cfg.validate();
    if (sources.empty()) throw_validation("training needs at least one source shape");
    const std::size_t M = static_cast<std::size_t>(cfg.points);
    const bool normals = attachment_needs_normals(cfg.attachment);
    check_cloud(templ, M, normals, "template");
    for (std::size_t i = 0; i < sources.size(); ++i) check_cloud(sources[i], M, normals, "source " + std::to_string(i));

    const std::size_t ns = sources.size();
    Rng rng(cfg.seed);
    TrainResult out{VelocityNet(cfg.arch), {}, {}, false};
    kaiming_init(out.net, rng);
    out.codes = sample_initial_codes(cfg.arch.n_z, static_cast<int>(ns), rng);
    if (init.net) {
        if (init.net->num_params() != out.net.num_params()) throw_validation("warm-start network does not match");
        out.net.params() = init.net->params();
    }
    if (init.codes) {
        if (init.codes->rows() != cfg.arch.n_z || init.codes->cols() != static_cast<Eigen::Index>(ns)) {
            throw_validation("warm-start code matrix does not match");
        }
        out.codes = *init.codes;
    }

    const LossSettings settings = settings_from(cfg);
    AdamState theta_state(static_cast<Eigen::Index>(out.net.num_params()));
    std::vector<AdamState> code_states(ns, AdamState(cfg.arch.n_z));
    LossCache cache;
    cache.source.resize(ns);
    cache.source_index.resize(ns);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto t_idx = adaptive_sample(templ.size(), cache.template_index, cache.templ, M, cfg.adaptive, rng);
        const WeightedPointCloud t_sample = templ.subset(t_idx);

        std::vector<std::size_t> order(ns);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        const auto batches = partition_batches(order, cfg.batch_size);

        Eigen::VectorXd t_accum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(M));
        std::size_t t_count = 0;
        LossTerms epoch_loss;
        for (const auto& batch : batches) {
            std::vector<WeightedPointCloud> samples;
            std::vector<std::vector<std::size_t>> idxs;
            std::vector<Eigen::VectorXd> codes;
            for (std::size_t i : batch) {
                idxs.push_back(adaptive_sample(sources[i].size(), cache.source_index[i], cache.source[i], M,
                                               cfg.adaptive, rng));
                samples.push_back(sources[i].subset(idxs.back()));
                codes.push_back(out.codes.col(static_cast<Eigen::Index>(i)));
            }
            BatchResult r = evaluate_batch(samples, t_sample, out.net, codes, settings, true, true);
            adam_step(out.net.params(), r.d_theta, theta_state, cfg.lr_theta);
            for (std::size_t k = 0; k < batch.size(); ++k) {
                const std::size_t i = batch[k];
                adam_step(out.codes.col(static_cast<Eigen::Index>(i)), r.d_codes[k], code_states[i], cfg.lr_z);
                if (r.pointwise) {
                    cache.source[i] = std::move(r.source_losses[k]);
                    cache.source_index[i] = std::move(idxs[k]);
                    t_accum += r.template_losses[k];
                    ++t_count;
                }
            }
            const double wb = 1.0 / static_cast<double>(batches.size());
            epoch_loss.total += wb * r.loss.total;
            epoch_loss.direct += wb * r.loss.direct;
            epoch_loss.inverse += wb * r.loss.inverse;
            epoch_loss.code_reg += wb * r.loss.code_reg;
            epoch_loss.theta_reg += wb * r.loss.theta_reg;
            epoch_loss.kinetic += wb * r.loss.kinetic;
        }
        if (t_count > 0) {
            cache.templ = t_accum / static_cast<double>(t_count);
            cache.template_index = t_idx;
            cache.available = true;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.loss = epoch_loss;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.history.push_back(rec);
        if (callbacks.on_epoch) callbacks.on_epoch(rec);
        if (callbacks.on_checkpoint && cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
            callbacks.on_checkpoint(out.net, out.codes, epoch);
        }
        if (callbacks.should_stop && callbacks.should_stop()) {
            out.interrupted = epoch < cfg.epochs;
            break;
        }
    }
    return out;
}

Diagnostics map_diagnostics(const WeightedPointCloud& shape, const WeightedPointCloud& templ, const VelocityNet& net,
                            const Eigen::VectorXd& code, int steps) {
    const auto grid = reshape_code(code, net.arch().g_z);
    const FlowResult f = integrate_forward(shape.points, grid, net, steps);
    const LocalDistances ld = local_distances(f.mapped(), templ.points);
    return {ld.mean_fld(), ld.max_fld(), ld.mean_bld(), ld.max_bld()};
}

InferResult infer_code(const WeightedPointCloud& shape, const WeightedPointCloud& templ, const VelocityNet& net,
                       const TrainConfig& cfg, const InferConfig& icfg, const std::function<bool()>& should_stop) {
    cfg.validate();
    if (icfg.adam_epochs < 0 || icfg.lbfgs_epochs < 0 || icfg.lbfgs_iterations < 1 || !(icfg.lr_multiplier > 0.0)) {
        throw_validation("invalid inference settings");
    }
    if (net.arch().n_z != cfg.arch.n_z) throw_validation("configuration does not match the trained network");
    LossSettings settings = settings_from(cfg);
    settings.w_theta = 0.0;
    if (icfg.ncd_falls_back_to_cd &&
        (settings.attachment.kind == Attachment::NCD || settings.attachment.kind == Attachment::NCDW)) {
        settings.attachment.kind = Attachment::CD;
    }
    const bool normals = attachment_needs_normals(settings.attachment.kind);
    const std::size_t ms = std::min(static_cast<std::size_t>(cfg.points), shape.size());
    const std::size_t mt = std::min(static_cast<std::size_t>(cfg.points), templ.size());
    check_cloud(shape, ms, normals, "shape");
    check_cloud(templ, mt, normals, "template");

    Rng rng(cfg.seed);
    InferResult out;
    out.code = sample_initial_codes(net.arch().n_z, 1, rng).col(0);
    out.initial = map_diagnostics(shape, templ, net, out.code, cfg.steps);

    const Eigen::VectorXd no_loss;
    auto draw = [&]() {
        const auto si = adaptive_sample(shape.size(), {}, no_loss, ms, 0.0, rng);
        const auto ti = adaptive_sample(templ.size(), {}, no_loss, mt, 0.0, rng);
        return std::pair{shape.subset(si), templ.subset(ti)};
    };

    AdamState st(net.arch().n_z);
    const double lr = cfg.lr_z * icfg.lr_multiplier;
    for (int e = 0; e < icfg.adam_epochs; ++e) {
        auto [s, t] = draw();
        const BatchResult r = evaluate_batch({s}, t, net, {out.code}, settings, false, true);
        adam_step(out.code, r.d_codes[0], st, lr);
        out.loss_history.push_back(r.loss.total);
        if (should_stop && should_stop()) {
            out.final = map_diagnostics(shape, templ, net, out.code, cfg.steps);
            return out;
        }
    }
    for (int e = 0; e < icfg.lbfgs_epochs; ++e) {
        auto [s, t] = draw();
        const std::vector<WeightedPointCloud> batch{s};
        LossClosure closure = [&](const Eigen::VectorXd& z, Eigen::VectorXd* grad) {
            const BatchResult r = evaluate_batch(batch, t, net, {z}, settings, false, grad != nullptr);
            if (grad) *grad = r.d_codes[0];
            return r.loss.total;
        };
        LbfgsState ls;
        double last = 0.0;
        for (int it = 0; it < icfg.lbfgs_iterations; ++it) {
            const LbfgsStepInfo info = lbfgs_step(out.code, closure, ls, icfg.lbfgs);
            last = info.loss_after;
            if (!info.moved) break;
        }
        out.loss_history.push_back(last);
        if (should_stop && should_stop()) break;
    }
    out.final = map_diagnostics(shape, templ, net, out.code, cfg.steps);
    return out;
}

}  // namespace svfd
