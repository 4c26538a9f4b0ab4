#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "svfd/geometry.hpp"
#include "svfd/rigid.hpp"
#include "svfd/tps.hpp"

namespace svfd {

/// Paired samples of two vessel models; row j of `xa` matches row j of `xb`.
struct CorrespondenceSet {
    PointMatrix xa;
    PointMatrix xb;
    std::vector<int> labels;  // portion index (in the first model)

    std::size_t size() const { return labels.size(); }
    void validate() const;
    /// Rows whose label is in `portions`.
    std::vector<std::size_t> rows_of(const std::vector<int>& portions) const;
};

struct CorrespondenceOptions {
    int m_p = 250;
    int m_c = 4;
    double tau = 5e-3;
    /// Neighbours of the parent surface used to build each local hull.
    int hull_neighbors = 1000;
    int parent_ring_vertices = 32;
};

/// Samples of one portion before pruning: n_c centerline points followed by
/// n_c rings of m_c contour points.
PointMatrix sample_portion(const VesselPortion& portion, int m_p, int m_c);

/// Pruning flags for the samples of child `portion` against its parent.
std::vector<bool> prune_flags(const VesselModel& model, int portion, const PointMatrix& samples,
                              const CorrespondenceOptions& opts);

CorrespondenceSet sample_correspondences(const VesselModel& a, const VesselModel& b,
                                         const CorrespondenceOptions& opts = {});

struct QualityReport {
    double min_jacobian = 0.0;
    double decile_mean = 0.0;
    bool pass = false;
};

/// Scaled Jacobian |e1 x e2| / (product of the two longest edges) of one
/// triangle.
double scaled_jacobian(const Vec3& a, const Vec3& b, const Vec3& c);

/// Per-face scaled Jacobians. With a reference mesh of the same connectivity,
/// faces whose normal flipped relative to it get a negative sign.
Eigen::VectorXd scaled_jacobians(const TriangleMesh& mesh, const TriangleMesh* reference = nullptr);
QualityReport mesh_quality(const TriangleMesh& mesh, const TriangleMesh* reference = nullptr);

struct AugmentInput {
    VesselModel model;
    TriangleMesh mesh;
    Anchors anchors;
};

struct AugmentConfig {
    int count = 0;
    CorrespondenceOptions correspondences;
    double w_h = 1e-6;
    bool tps_affine = true;
    double outlier_weight = 0.05;
    bool use_rigid = true;
    /// Portions not selected in an attempt stay fixed (factor 0) instead of
    /// leaving the fit unconstrained there.
    bool anchor_unselected = true;
    int cpd_points = 400;
    int max_attempts = 0;  // 0: 20 * count
    std::uint64_t seed = 0;

    void validate() const;
};

struct AttemptRecord {
    int attempt = 0;
    int alpha = 0;
    int beta = 0;
    std::vector<int> portions;
    std::vector<double> factors;
    QualityReport quality;
    bool accepted = false;
    std::string error;
};

struct AugmentResult {
    std::vector<TriangleMesh> dataset;  // inputs first, then accepted meshes
    std::vector<AttemptRecord> attempts;
    int accepted = 0;
    bool budget_exhausted = false;
};

/// TPS deformation of `mesh_a` moving the correspondences of each portion p
/// towards model b by factors[p] (0 keeps it in place). `transform` maps
/// model a into the frame of model b.
TriangleMesh deform_pair(const VesselModel& a, const TriangleMesh& mesh_a, const VesselModel& b,
                         const std::vector<double>& factors, const RigidTransform& transform,
                         const AugmentConfig& cfg);
TriangleMesh deform_pair(const CorrespondenceSet& corr, const TriangleMesh& mesh_a, const std::vector<double>& factors,
                         const RigidTransform& transform, const AugmentConfig& cfg);

/// Ad-hoc then CPD alignment of mesh a onto mesh b.
RigidTransform align_meshes(const AugmentInput& a, const AugmentInput& b, const AugmentConfig& cfg);

AugmentResult augment_dataset(const std::vector<AugmentInput>& inputs, const AugmentConfig& cfg,
                              const std::function<bool()>& should_stop = {});

std::string attempts_csv(const AugmentResult& result);

}  // namespace svfd
