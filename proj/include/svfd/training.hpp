#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "svfd/distances.hpp"
#include "svfd/flow.hpp"
#include "svfd/network.hpp"
#include "svfd/optim.hpp"

namespace svfd {

struct TrainConfig {
    int epochs = 500;
    int batch_size = 8;
    int points = 2000;
    int steps = 10;
    double adaptive = 0.15;
    double lr_theta = 1e-3;
    double lr_z = 1e-3;
    double w_z = 1e-3;
    double w_theta = 0.0;
    double w_v = 1e-4;
    double w_n = 1e-2;
    Attachment attachment = Attachment::CD;
    SinkhornConfig sinkhorn;
    std::uint64_t seed = 0;
    /// 64-bit evaluation of the network (32-bit otherwise).
    bool double_precision = false;
    /// Period of the on_checkpoint callback in epochs (0: never).
    int checkpoint_every = 0;
    Architecture arch;

    void validate() const;
    AttachmentOptions attachment_options() const;
};

/// Per-point losses from the last epoch, aligned to the indices sampled then.
struct LossCache {
    bool available = false;
    std::vector<std::vector<std::size_t>> source_index;
    std::vector<Eigen::VectorXd> source;
    std::vector<std::size_t> template_index;
    Eigen::VectorXd templ;
};

/// Keeps the floor(a*M) highest-loss entries of the previous sample and draws
/// the rest uniformly without replacement from the other points. With an
/// empty cache (or a = 0) this is plain uniform sampling.
std::vector<std::size_t> adaptive_sample(std::size_t cloud_size, const std::vector<std::size_t>& previous,
                                         const Eigen::VectorXd& losses, std::size_t M, double a, Rng& rng);

struct LossTerms {
    double total = 0.0;
    double direct = 0.0;
    double inverse = 0.0;
    double code_reg = 0.0;
    double theta_reg = 0.0;
    double kinetic = 0.0;
};

struct LossSettings {
    int steps = 10;
    double w_z = 1e-3;
    double w_theta = 0.0;
    double w_v = 1e-4;
    AttachmentOptions attachment;
    bool double_precision = false;
};

struct BatchResult {
    LossTerms loss;
    /// dL/dTheta (empty unless requested).
    Eigen::VectorXd d_theta;
    /// dL/dz for each shape of the batch, in batch order.
    std::vector<Eigen::VectorXd> d_codes;
    bool pointwise = false;
    std::vector<Eigen::VectorXd> source_losses;    // per shape, length M
    std::vector<Eigen::VectorXd> template_losses;  // per shape, length of template sample
};

/// Bidirectional loss of a batch of (already sampled) shapes against the
/// sampled template, plus regularizers, with optional reverse-mode gradients.
BatchResult evaluate_batch(const std::vector<WeightedPointCloud>& sources, const WeightedPointCloud& templ,
                           const VelocityNet& net, const std::vector<Eigen::VectorXd>& codes,
                           const LossSettings& settings, bool grad_theta, bool grad_codes);

/// Loss value and pointwise cache for one batch.
std::pair<double, LossCache> total_loss(const std::vector<WeightedPointCloud>& sources,
                                        const WeightedPointCloud& templ, const VelocityNet& net,
                                        const std::vector<Eigen::VectorXd>& codes, const TrainConfig& cfg);

/// Batch partition of one epoch: nb = max(1, floor(Ns/B)) batches, the first
/// Ns mod nb of them one shape larger.
std::vector<std::vector<std::size_t>> partition_batches(const std::vector<std::size_t>& order, int batch_size);

struct EpochRecord {
    int epoch = 0;
    LossTerms loss;
    double seconds = 0.0;
};

struct TrainCallbacks {
    std::function<void(const EpochRecord&)> on_epoch;
    std::function<bool()> should_stop;
    std::function<void(const VelocityNet&, const Eigen::MatrixXd& codes, int epoch)> on_checkpoint;
};

struct TrainResult {
    VelocityNet net;
    Eigen::MatrixXd codes;  // N_z x shapes
    std::vector<EpochRecord> history;
    bool interrupted = false;
};

/// Optional warm start (e.g. resuming from a checkpoint).
struct TrainInit {
    const VelocityNet* net = nullptr;
    const Eigen::MatrixXd* codes = nullptr;
};

TrainResult train(const std::vector<WeightedPointCloud>& sources, const WeightedPointCloud& templ,
                  const TrainConfig& cfg, const TrainCallbacks& callbacks = {}, const TrainInit& init = {});

struct InferConfig {
    int adam_epochs = 100;
    int lbfgs_epochs = 10;
    int lbfgs_iterations = 20;
    double lr_multiplier = 50.0;
    LbfgsConfig lbfgs;
    /// NCD-trained models are fitted with plain CD at inference.
    bool ncd_falls_back_to_cd = true;
};

struct Diagnostics {
    double mean_fld = 0.0;
    double max_fld = 0.0;
    double mean_bld = 0.0;
    double max_bld = 0.0;
};

struct InferResult {
    Eigen::VectorXd code;
    Diagnostics initial;
    Diagnostics final;
    std::vector<double> loss_history;
};

/// Diagnostics of the direct map of `shape` onto `templ` under `code`.
Diagnostics map_diagnostics(const WeightedPointCloud& shape, const WeightedPointCloud& templ, const VelocityNet& net,
                            const Eigen::VectorXd& code, int steps);

/// Fits a latent code for a new shape with the network frozen.
InferResult infer_code(const WeightedPointCloud& shape, const WeightedPointCloud& templ, const VelocityNet& net,
                       const TrainConfig& cfg, const InferConfig& icfg = {},
                       const std::function<bool()>& should_stop = {});

}  // namespace svfd
