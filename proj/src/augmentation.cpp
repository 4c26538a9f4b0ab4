#include "svfd/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include "svfd/error.hpp"
#include "svfd/hull.hpp"
#include "svfd/spline.hpp"

namespace svfd {

void CorrespondenceSet::validate() const {
    if (xa.rows() != xb.rows() || static_cast<std::size_t>(xa.rows()) != labels.size()) {
        throw_validation("correspondence sets differ in size");
    }
}

std::vector<std::size_t> CorrespondenceSet::rows_of(const std::vector<int>& portions) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (std::find(portions.begin(), portions.end(), labels[i]) != portions.end()) rows.push_back(i);
    }
    return rows;
}

PointMatrix sample_portion(const VesselPortion& portion, int m_p, int m_c) {
    if (m_c < 0 || m_p < m_c + 1) throw_validation("need m_p >= m_c + 1 and m_c >= 0");
    const int n_c = m_p / (m_c + 1);
    if (n_c < 2) throw_validation("fewer than 2 centerline samples per portion");
    const CenterlineSpline spline(portion.control_points);
    const auto s = spline.sample_uniform(n_c);
    const auto frames = bishop_frames(s.points, s.tangents, portion.reference);
    PointMatrix out(static_cast<Eigen::Index>(n_c) * (m_c + 1), 3);
    Eigen::Index row = 0;
    for (int i = 0; i < n_c; ++i) out.row(row++) = s.points[static_cast<std::size_t>(i)];
    for (int i = 0; i < n_c; ++i) {
        const auto is = static_cast<std::size_t>(i);
        const double r = radius_at(portion.radii, s.params[is]);
        for (int k = 0; k < m_c; ++k) {
            const double th = 2.0 * std::numbers::pi * k / m_c;
            out.row(row++) = s.points[is] + r * (std::cos(th) * frames[is].normal + std::sin(th) * frames[is].binormal);
        }
    }
    return out;
}

namespace {

PointMatrix parent_surface(const VesselModel& model, int parent, int ring_vertices) {
    VesselModel alone;
    alone.portions.push_back(model.portions[static_cast<std::size_t>(parent)]);
    alone.portions[0].parent.clear();
    return sweep_vessel_mesh(alone, ring_vertices).vertices;
}

double max_pairwise(const PointMatrix& p) {
    double best = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < p.rows(); ++j) best = std::max(best, (p.row(i) - p.row(j)).squaredNorm());
    }
    return std::sqrt(best);
}

void check_topology(const VesselModel& a, const VesselModel& b) {
    if (a.portions.size() != b.portions.size()) throw_validation("topology mismatch: different portion counts");
    for (const auto& p : a.portions) {
        const VesselPortion* q = b.find(p.name);
        if (!q) throw_validation("topology mismatch: portion '" + p.name + "' missing in second model");
        if (q->parent != p.parent) throw_validation("topology mismatch: portion '" + p.name + "' has different parents");
    }
}

}  // namespace

std::vector<bool> prune_flags(const VesselModel& model, int portion, const PointMatrix& samples,
                              const CorrespondenceOptions& opts) {
    std::vector<bool> flags(static_cast<std::size_t>(samples.rows()), false);
    const VesselPortion& child = model.portions[static_cast<std::size_t>(portion)];
    if (child.parent.empty()) return flags;
    const PointMatrix surf = parent_surface(model, model.index_of(child.parent), opts.parent_ring_vertices);
    const double threshold = opts.tau * max_pairwise(samples);
    const auto k = static_cast<std::size_t>(std::min<Eigen::Index>(opts.hull_neighbors, surf.rows()));
    std::vector<std::pair<double, Eigen::Index>> dist(static_cast<std::size_t>(surf.rows()));
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
        for (Eigen::Index j = 0; j < surf.rows(); ++j) {
            dist[static_cast<std::size_t>(j)] = {(surf.row(j) - samples.row(i)).squaredNorm(), j};
        }
        std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k - 1), dist.end());
        PointMatrix local(static_cast<Eigen::Index>(k), 3);
        for (std::size_t j = 0; j < k; ++j) local.row(static_cast<Eigen::Index>(j)) = surf.row(dist[j].second);
        const ConvexHull hull = convex_hull(local);
        flags[static_cast<std::size_t>(i)] = hull.signed_distance(samples.row(i).transpose()) <= threshold;
    }
    return flags;
}

CorrespondenceSet sample_correspondences(const VesselModel& a, const VesselModel& b,
                                         const CorrespondenceOptions& opts) {
    a.validate();
    b.validate();
    check_topology(a, b);
    if (!(opts.tau >= 0.0)) throw_validation("tau must be non-negative");
    if (opts.hull_neighbors < 4) throw_validation("hull needs at least 4 neighbours");
    std::vector<Eigen::RowVector3d> ra, rb;
    CorrespondenceSet out;
    for (std::size_t p = 0; p < a.portions.size(); ++p) {
        const VesselPortion& pa = a.portions[p];
        const int pb = b.index_of(pa.name);
        const PointMatrix sa = sample_portion(pa, opts.m_p, opts.m_c);
        const PointMatrix sb = sample_portion(b.portions[static_cast<std::size_t>(pb)], opts.m_p, opts.m_c);
        const auto fa = prune_flags(a, static_cast<int>(p), sa, opts);
        const auto fb = prune_flags(b, pb, sb, opts);
        for (Eigen::Index i = 0; i < sa.rows(); ++i) {
            const auto is = static_cast<std::size_t>(i);
            if (fa[is] || fb[is]) continue;
            ra.push_back(sa.row(i));
            rb.push_back(sb.row(i));
            out.labels.push_back(static_cast<int>(p));
        }
    }
    out.xa.resize(static_cast<Eigen::Index>(ra.size()), 3);
    out.xb.resize(static_cast<Eigen::Index>(rb.size()), 3);
    for (std::size_t i = 0; i < ra.size(); ++i) {
        out.xa.row(static_cast<Eigen::Index>(i)) = ra[i];
        out.xb.row(static_cast<Eigen::Index>(i)) = rb[i];
    }
    return out;
}

double scaled_jacobian(const Vec3& a, const Vec3& b, const Vec3& c) {
    std::array<double, 3> e{(b - a).norm(), (c - b).norm(), (a - c).norm()};
    std::sort(e.begin(), e.end());
    const double den = e[1] * e[2];
    if (!(den > 0.0)) return 0.0;
    return (b - a).cross(c - a).norm() / den;
}

Eigen::VectorXd scaled_jacobians(const TriangleMesh& mesh, const TriangleMesh* reference) {
    if (mesh.faces.empty()) throw_validation("mesh has no faces");
    if (reference && (reference->faces.size() != mesh.faces.size())) {
        throw_validation("reference mesh has a different face count");
    }
    Eigen::VectorXd out(static_cast<Eigen::Index>(mesh.faces.size()));
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& t = mesh.faces[f];
        const Vec3 a = mesh.vertices.row(t[0]), b = mesh.vertices.row(t[1]), c = mesh.vertices.row(t[2]);
        double j = scaled_jacobian(a, b, c);
        if (reference) {
            const auto& r = reference->faces[f];
            const Vec3 ra = reference->vertices.row(r[0]), rb = reference->vertices.row(r[1]),
                       rc = reference->vertices.row(r[2]);
            if ((b - a).cross(c - a).dot((rb - ra).cross(rc - ra)) < 0.0) j = -j;
        }
        out(static_cast<Eigen::Index>(f)) = j;
    }
    return out;
}

QualityReport mesh_quality(const TriangleMesh& mesh, const TriangleMesh* reference) {
    Eigen::VectorXd j = scaled_jacobians(mesh, reference);
    std::sort(j.begin(), j.end());
    const auto n = static_cast<std::size_t>(j.size());
    const std::size_t decile = (n + 9) / 10;
    QualityReport q;
    q.min_jacobian = j(0);
    q.decile_mean = j.head(static_cast<Eigen::Index>(decile)).mean();
    q.pass = q.min_jacobian > 0.0 && q.decile_mean > 0.1;
    return q;
}

void AugmentConfig::validate() const {
    if (count < 0) throw_validation("augmentation count must be non-negative");
    if (!(w_h >= 0.0)) throw_validation("w_H must be non-negative");
    if (!(outlier_weight >= 0.0 && outlier_weight < 1.0)) throw_validation("outlier weight must lie in [0, 1)");
    if (max_attempts < 0) throw_validation("max_attempts must be non-negative");
    if (cpd_points < 4) throw_validation("cpd_points must be at least 4");
}

TriangleMesh deform_pair(const CorrespondenceSet& corr, const TriangleMesh& mesh_a, const std::vector<double>& factors,
                         const RigidTransform& transform, const AugmentConfig& cfg) {
    corr.validate();
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < corr.size(); ++i) {
        const auto p = static_cast<std::size_t>(corr.labels[i]);
        if (p >= factors.size()) throw_validation("missing matching factor for a portion");
        if (factors[p] > 0.0 || cfg.anchor_unselected) rows.push_back(i);
    }
    const PointMatrix xa_all = transform.apply(corr.xa);
    PointMatrix centers(static_cast<Eigen::Index>(rows.size()), 3), targets(centers.rows(), 3);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto i = static_cast<Eigen::Index>(rows[r]);
        const double c = factors[static_cast<std::size_t>(corr.labels[rows[r]])];
        centers.row(static_cast<Eigen::Index>(r)) = xa_all.row(i);
        targets.row(static_cast<Eigen::Index>(r)) = (1.0 - c) * xa_all.row(i) + c * corr.xb.row(i);
    }
    const TpsMap map = tps_fit(centers, targets, cfg.w_h, cfg.tps_affine);
    return mesh_a.with_vertices(tps_apply(map, transform.apply(mesh_a.vertices)));
}

TriangleMesh deform_pair(const VesselModel& a, const TriangleMesh& mesh_a, const VesselModel& b,
                         const std::vector<double>& factors, const RigidTransform& transform,
                         const AugmentConfig& cfg) {
    if (factors.size() != a.portions.size()) throw_validation("one matching factor per portion is required");
    return deform_pair(sample_correspondences(a, b, cfg.correspondences), mesh_a, factors, transform, cfg);
}

namespace {

PointMatrix strided(const PointMatrix& p, int cap) {
    if (p.rows() <= cap) return p;
    PointMatrix out(cap, 3);
    for (Eigen::Index i = 0; i < cap; ++i) out.row(i) = p.row(i * p.rows() / cap);
    return out;
}

}  // namespace

RigidTransform align_meshes(const AugmentInput& a, const AugmentInput& b, const AugmentConfig& cfg) {
    const WeightedPointCloud ca = mesh_to_weighted_cloud(a.mesh);
    const WeightedPointCloud cb = mesh_to_weighted_cloud(b.mesh);
    const AdhocResult adhoc = adhoc_rigid_align(ca, cb, a.anchors, b.anchors);
    CpdOptions o;
    o.outlier_weight = cfg.outlier_weight;
    return cpd_rigid(strided(ca.points, cfg.cpd_points), strided(cb.points, cfg.cpd_points), adhoc.transform, o)
        .transform;
}

AugmentResult augment_dataset(const std::vector<AugmentInput>& inputs, const AugmentConfig& cfg,
                              const std::function<bool()>& should_stop) {
    cfg.validate();
    AugmentResult res;
    for (const auto& in : inputs) res.dataset.push_back(in.mesh);
    if (cfg.count == 0) return res;
    if (inputs.size() < 2) throw_validation("augmentation needs at least 2 input shapes");
    for (const auto& in : inputs) {
        in.model.validate();
        in.mesh.validate();
    }
    const int budget = cfg.max_attempts > 0 ? cfg.max_attempts : 20 * cfg.count;
    const int G = static_cast<int>(inputs.size());
    std::map<std::pair<int, int>, CorrespondenceSet> corr_cache;
    std::map<std::pair<int, int>, RigidTransform> rigid_cache;

    for (int attempt = 0; attempt < budget && res.accepted < cfg.count; ++attempt) {
        std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                          static_cast<std::uint32_t>(attempt)};
        Rng rng(seq);
        AttemptRecord rec;
        rec.attempt = attempt;
        rec.alpha = std::uniform_int_distribution<int>(0, G - 1)(rng);
        rec.beta = std::uniform_int_distribution<int>(0, G - 2)(rng);
        if (rec.beta >= rec.alpha) ++rec.beta;
        const AugmentInput& a = inputs[static_cast<std::size_t>(rec.alpha)];
        const AugmentInput& b = inputs[static_cast<std::size_t>(rec.beta)];
        const int P = static_cast<int>(a.model.portions.size());
        const int L = std::min(P, std::uniform_int_distribution<int>(1, 2)(rng));
        std::vector<int> order(static_cast<std::size_t>(P));
        for (int i = 0; i < P; ++i) order[static_cast<std::size_t>(i)] = i;
        for (int i = 0; i < L; ++i) {
            const int j = std::uniform_int_distribution<int>(i, P - 1)(rng);
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }
        std::vector<double> factors(static_cast<std::size_t>(P), 0.0);
        std::uniform_real_distribution<double> cdist(0.5, 1.0);
        for (int i = 0; i < L; ++i) {
            const int p = order[static_cast<std::size_t>(i)];
            rec.portions.push_back(p);
            const double c = cdist(rng);
            rec.factors.push_back(c);
            factors[static_cast<std::size_t>(p)] = c;
        }
        try {
            const auto key = std::make_pair(rec.alpha, rec.beta);
            if (!corr_cache.count(key)) {
                corr_cache[key] = sample_correspondences(a.model, b.model, cfg.correspondences);
                rigid_cache[key] = cfg.use_rigid ? align_meshes(a, b, cfg) : RigidTransform{};
            }
            const RigidTransform& T = rigid_cache[key];
            TriangleMesh out = deform_pair(corr_cache[key], a.mesh, factors, T, cfg);
            const TriangleMesh ref = T.apply(a.mesh);
            rec.quality = mesh_quality(out, &ref);
            rec.accepted = rec.quality.pass;
            if (rec.accepted) {
                res.dataset.push_back(std::move(out));
                ++res.accepted;
            }
        } catch (const std::exception& e) {
            rec.error = e.what();
        }
        res.attempts.push_back(std::move(rec));
        if (should_stop && should_stop()) break;
    }
    if (res.accepted < cfg.count) {
        res.budget_exhausted = true;
        std::ostringstream os;
        os << "augmentation budget exhausted: " << res.accepted << " of " << cfg.count << " meshes accepted after "
           << res.attempts.size() << " attempts";
        warn(os.str());
    }
    return res;
}

std::string attempts_csv(const AugmentResult& result) {
    std::ostringstream os;
    os << "attempt,alpha,beta,L,portions,factors,min_jacobian,decile_mean,accepted,error\n";
    for (const auto& r : result.attempts) {
        os << r.attempt << ',' << r.alpha << ',' << r.beta << ',' << r.portions.size() << ',';
        for (std::size_t i = 0; i < r.portions.size(); ++i) os << (i ? ";" : "") << r.portions[i];
        os << ',';
        for (std::size_t i = 0; i < r.factors.size(); ++i) os << (i ? ";" : "") << r.factors[i];
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        os << ',' << r.quality.min_jacobian << ',' << r.quality.decile_mean << ',' << (r.accepted ? 1 : 0) << ','
           << err << '\n';
    }
    return os.str();
}

}  // namespace svfd
