#pragma once

#include <string>
#include <vector>

#include "svfd/geometry.hpp"

namespace svfd {

struct NearestResult {
    std::size_t index = 0;
    double squared_distance = 0.0;
};

/// For every row of `query`, its closest row of `reference` (ties go to the
/// lowest index). Exhaustive below kGridThreshold reference points, uniform
/// grid above; both give identical answers.
std::vector<NearestResult> nearest_neighbors(const PointMatrix& query, const PointMatrix& reference);
std::vector<NearestResult> nearest_neighbors(const WeightedPointCloud& y, const WeightedPointCloud& yp);
inline constexpr std::size_t kGridThreshold = 4096;

/// Exhaustive scan only; the oracle used to check the grid backend.
std::vector<NearestResult> nearest_neighbors_exhaustive(const PointMatrix& query,
                                                        const PointMatrix& reference);

double chamfer(const WeightedPointCloud& y, const WeightedPointCloud& yp);
/// Area-weighted Chamfer: sum_i w_i d_i + sum_j w'_j d'_j.
double chamfer_weighted(const WeightedPointCloud& y, const WeightedPointCloud& yp);
double chamfer_normals(const WeightedPointCloud& y, const WeightedPointCloud& yp, double w_n,
                       bool weighted = false);
double chamfer_point_to_plane(const WeightedPointCloud& y, const WeightedPointCloud& yp,
                              bool weighted = false);

struct SinkhornConfig {
    double epsilon = 1e-4;
    double scaling = 0.9;
    int max_iters = 500;      // per temperature level
    double tolerance = 1e-9;  // sup-norm change of the dual potentials

    void validate() const;
};

struct SinkhornResult {
    double divergence = 0.0;
    double ot_xy = 0.0;
    double ot_xx = 0.0;
    double ot_yy = 0.0;
    int iterations = 0;
    double residual = 0.0;
    /// d divergence / d positions (filled when requested).
    PointMatrix grad_y;
    PointMatrix grad_yp;
};

/// Debiased entropic OT with quadratic cost, log-domain with epsilon scaling.
/// Uses the clouds' weights as the marginals.
double sinkhorn_divergence(const WeightedPointCloud& y, const WeightedPointCloud& yp,
                           const SinkhornConfig& cfg);
SinkhornResult sinkhorn_evaluate(const PointMatrix& x, const Eigen::VectorXd& a, const PointMatrix& y,
                                 const Eigen::VectorXd& b, const SinkhornConfig& cfg, bool need_grad);

struct LocalDistances {
    std::vector<double> fld;  // mapped -> target, Euclidean
    std::vector<double> bld;  // target -> mapped

    double mean_fld() const;
    double max_fld() const;
    double mean_bld() const;
    double max_bld() const;
};

LocalDistances local_distances(const WeightedPointCloud& mapped, const WeightedPointCloud& target);
LocalDistances local_distances(const PointMatrix& mapped, const PointMatrix& target);

/// Data attachment measures usable as training losses.
enum class Attachment { CD, CDW, PCD, PCDW, NCD, NCDW, SD, SDW };

Attachment parse_attachment(const std::string& name);
std::string attachment_name(Attachment a);
bool attachment_is_pointwise(Attachment a);
bool attachment_needs_normals(Attachment a);

struct AttachmentOptions {
    Attachment kind = Attachment::CD;
    double w_n = 1e-2;
    SinkhornConfig sinkhorn;
};

struct AttachmentValue {
    double value = 0.0;
    /// Gradients with respect to the positions of y and yp; nearest-neighbour
    /// assignments are held fixed.
    PointMatrix grad_y;
    PointMatrix grad_yp;
    /// Each point's own nearest squared distance (empty for SD variants).
    Eigen::VectorXd pointwise_y;
    Eigen::VectorXd pointwise_yp;
    bool pointwise_available = false;
};

AttachmentValue evaluate_attachment(const WeightedPointCloud& y, const WeightedPointCloud& yp,
                                    const AttachmentOptions& opts, bool need_grad);

}  // namespace svfd
