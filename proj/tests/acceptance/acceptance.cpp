// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status is
// the number of failures. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "svfd/augmentation.hpp"
#include "svfd/distances.hpp"
#include "svfd/error.hpp"
#include "svfd/flow.hpp"
#include "svfd/latent.hpp"
#include "svfd/rigid.hpp"
#include "svfd/tps.hpp"
#include "svfd/training.hpp"

using namespace svfd;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(3) << v;
    return os.str();
}

PointMatrix random_points(Rng& rng, int n, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    PointMatrix p(n, 3);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) p(i, k) = u(rng);
    return p;
}

WeightedPointCloud random_cloud(Rng& rng, int n) {
    WeightedPointCloud c;
    c.points = random_points(rng, n);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    c.weights.resize(n);
    for (int i = 0; i < n; ++i) c.weights(i) = u(rng);
    c.weights /= c.weights.sum();
    std::normal_distribution<double> g;
    PointMatrix nrm(n, 3);
    for (int i = 0; i < n; ++i) {
        Vec3 v(g(rng), g(rng), g(rng));
        nrm.row(i) = v.normalized();
    }
    c.normals = nrm;
    return c;
}

Mat3 random_rotation(Rng& rng, double max_angle) {
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(0.0, max_angle);
    return axis_angle(Vec3(g(rng), g(rng), g(rng)).normalized(), u(rng));
}

// ---- 1. distance oracles --------------------------------------------------

enum class Kind { CD, CDW, NCD, NCDW, PCD, PCDW };

// Independent brute force: for each point scan every point of the other cloud.
double brute_measure(const WeightedPointCloud& y, const WeightedPointCloud& yp, Kind kind, double w_n) {
    const bool weighted = kind == Kind::CDW || kind == Kind::NCDW || kind == Kind::PCDW;
    const bool plane = kind == Kind::PCD || kind == Kind::PCDW;
    const bool normals = kind == Kind::NCD || kind == Kind::NCDW;
    auto side = [&](const WeightedPointCloud& a, const WeightedPointCloud& b) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < a.points.rows(); ++i) {
            double best = INFINITY;
            Eigen::Index arg = 0;
            for (Eigen::Index j = 0; j < b.points.rows(); ++j) {
                const double d = (a.points.row(i) - b.points.row(j)).squaredNorm();
                if (d < best) {
                    best = d;
                    arg = j;
                }
            }
            const double w = weighted ? a.weights(i) : 1.0 / static_cast<double>(a.points.rows());
            double term = best;
            if (plane) {
                const double r = (a.points.row(i) - b.points.row(arg)).dot(a.normals->row(i));
                term = r * r;
            }
            if (normals) {
                const double c = 1.0 - a.normals->row(i).dot(b.normals->row(arg));
                term += 0.5 * w_n * c * c;
            }
            total += w * term;
        }
        return total;
    };
    return side(y, yp) + side(yp, y);
}

double assignment_oracle(const PointMatrix& x, const PointMatrix& y) {
    std::vector<int> perm(static_cast<std::size_t>(x.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    double best = INFINITY;
    do {
        double c = 0.0;
        for (std::size_t i = 0; i < perm.size(); ++i) {
            c += (x.row(static_cast<Eigen::Index>(i)) - y.row(perm[i])).squaredNorm();
        }
        best = std::min(best, c / static_cast<double>(perm.size()));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

Outcome criterion_distances() {
    Rng rng(101);
    std::uniform_int_distribution<int> size(1, 50);
    const double w_n = 0.37;
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const WeightedPointCloud y = random_cloud(rng, size(rng));
        const WeightedPointCloud yp = random_cloud(rng, size(rng));
        const std::pair<Kind, double> cases[] = {
            {Kind::CD, chamfer(y, yp)},
            {Kind::CDW, chamfer_weighted(y, yp)},
            {Kind::NCD, chamfer_normals(y, yp, w_n, false)},
            {Kind::NCDW, chamfer_normals(y, yp, w_n, true)},
            {Kind::PCD, chamfer_point_to_plane(y, yp, false)},
            {Kind::PCDW, chamfer_point_to_plane(y, yp, true)},
        };
        for (const auto& [kind, value] : cases) {
            const double ref = brute_measure(y, yp, kind, w_n);
            const double rel = std::abs(value - ref) / std::max(std::abs(ref), 1e-300);
            worst = std::max(worst, rel);
        }
    }
    SinkhornConfig cfg;
    cfg.epsilon = 1e-5;
    double worst_sd = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const WeightedPointCloud x = WeightedPointCloud::uniform(random_points(rng, 4));
        const WeightedPointCloud y = WeightedPointCloud::uniform(random_points(rng, 4));
        const double sd = sinkhorn_divergence(x, y, cfg);
        worst_sd = std::max(worst_sd, std::abs(sd - assignment_oracle(x.points, y.points)));
    }
    return {worst <= 1e-12 && worst_sd <= 1e-4,
            "chamfer family max rel err " + fmt(worst) + ", sinkhorn max abs err " + fmt(worst_sd)};
}

// ---- 2. gradients ---------------------------------------------------------

Architecture small_arch() {
    Architecture a;
    a.w_fa = 8;
    a.l_fa = 2;
    a.w_df = 8;
    a.l_df = 3;
    a.n_e = 2;
    a.g_z = 2;
    a.n_z = 16;
    return a;
}

Outcome criterion_gradients() {
    Rng rng(202);
    InitResult init = init_params(small_arch(), 2, 7);
    std::vector<WeightedPointCloud> sources = {WeightedPointCloud::uniform(random_points(rng, 6, 0.2, 0.8)),
                                               WeightedPointCloud::uniform(random_points(rng, 5, 0.2, 0.8))};
    const WeightedPointCloud templ = WeightedPointCloud::uniform(random_points(rng, 7, 0.2, 0.8));
    std::vector<Eigen::VectorXd> codes = {init.codes.col(0), init.codes.col(1)};
    LossSettings st;
    st.steps = 3;
    st.w_z = 1e-2;
    st.w_theta = 1e-3;
    st.w_v = 0.1;
    st.attachment.kind = Attachment::CD;
    st.double_precision = true;

    VelocityNet net = init.net;
    const BatchResult g = evaluate_batch(sources, templ, net, codes, st, true, true);
    const double h = 1e-6;
    // Relative error with an absolute floor so that entries at round-off level
    // are compared on the scale of the gradient rather than of themselves.
    const double floor = 1e-6;
    double worst = 0.0;
    std::size_t checked = 0;
    auto check = [&](double analytic, const std::function<double(double)>& loss_at) {
        const double fd = (loss_at(h) - loss_at(-h)) / (2.0 * h);
        worst = std::max(worst, std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), floor}));
        ++checked;
    };
    for (Eigen::Index p = 0; p < net.params().size(); ++p) {
        const double orig = net.params()(p);
        check(g.d_theta(p), [&](double d) {
            net.params()(p) = orig + d;
            const double v = evaluate_batch(sources, templ, net, codes, st, false, false).loss.total;
            net.params()(p) = orig;
            return v;
        });
    }
    for (std::size_t s = 0; s < codes.size(); ++s) {
        for (Eigen::Index k = 0; k < codes[s].size(); ++k) {
            const double orig = codes[s](k);
            check(g.d_codes[s](k), [&](double d) {
                codes[s](k) = orig + d;
                const double v = evaluate_batch(sources, templ, net, codes, st, false, false).loss.total;
                codes[s](k) = orig;
                return v;
            });
        }
    }
    return {worst < 1e-5, std::to_string(checked) + " entries, max rel err " + fmt(worst)};
}

// ---- 3. integrators -------------------------------------------------------

// Scales the linear output head so that the largest speed over `x` is `speed`.
// The field keeps its shape; only its magnitude moves into the range of
// registration displacements, where every Euler step is invertible.
void rescale_head(VelocityNet& net, const ShapeCodeGrid& grid, const PointMatrix& x, double speed) {
    const double vmax = velocity(x, grid, net).rowwise().norm().maxCoeff();
    const LayerSlot& head = net.layers().back();
    net.params().segment(static_cast<Eigen::Index>(head.offset),
                         static_cast<Eigen::Index>(head.end() - head.offset)) *= speed / vmax;
}

Outcome criterion_integrators() {
    const Architecture a;
    Rng rng(303);
    double worst_implicit = 0.0;
    int monotone = 0;
    std::string first_failure;
    for (int trial = 0; trial < 20; ++trial) {
        InitResult init = init_params(a, 1, 1000 + static_cast<std::uint64_t>(trial));
        const ShapeCodeGrid grid = reshape_code(init.codes.col(0), a.g_z);
        const PointMatrix x = random_points(rng, 200);
        rescale_head(init.net, grid, x, 0.5);
        const VelocityFn v = net_field(grid, init.net);

        const FlowResult fwd = integrate_forward(x, v, 10);
        const FlowResult back = integrate_backward_implicit(fwd.mapped(), v, 10);
        worst_implicit = std::max(worst_implicit, (back.mapped() - x).rowwise().norm().maxCoeff());

        std::vector<double> errs;
        for (int K : {5, 10, 20, 40}) {
            const FlowResult f = integrate_forward(x, v, K);
            const FlowResult b = integrate_backward_modified(f.mapped(), v, K);
            errs.push_back((b.mapped() - x).rowwise().norm().maxCoeff());
        }
        const bool dec = errs[0] > errs[1] && errs[1] > errs[2] && errs[2] > errs[3];
        if (dec) {
            ++monotone;
        } else if (first_failure.empty()) {
            first_failure = ", net " + std::to_string(trial) + " errors " + fmt(errs[0]) + " " + fmt(errs[1]) + " " +
                            fmt(errs[2]) + " " + fmt(errs[3]);
        }
    }
    return {worst_implicit <= 1e-8 && monotone == 20,
            "implicit round trip max err " + fmt(worst_implicit) + ", modified error decreasing on " +
                std::to_string(monotone) + "/20 nets" + first_failure};
}

// ---- 4. single-shape registration -----------------------------------------

WeightedPointCloud ellipsoid_cloud(const Vec3& axes, int faces, const Vec3& center = Vec3::Zero()) {
    ShapeParams p;
    p.axes = axes;
    p.center = center;
    return mesh_to_weighted_cloud(synth_shape(ShapeKind::Ellipsoid, p, faces));
}

Outcome criterion_single_shape() {
    const WeightedPointCloud sphere = ellipsoid_cloud({1.0, 1.0, 1.0}, 500);
    const WeightedPointCloud ellipsoid = ellipsoid_cloud({1.2, 1.0, 0.8}, 500);
    const NormalizedClouds nc = normalize_to_unit_cube({sphere, ellipsoid});
    const WeightedPointCloud& src = nc.clouds[0];
    const WeightedPointCloud& tgt = nc.clouds[1];

    TrainConfig cfg;
    cfg.epochs = 300;
    cfg.points = static_cast<int>(std::min(src.size(), tgt.size()));
    cfg.arch.n_z = 256;
    const TrainResult r = train({src}, tgt, cfg);
    const auto grid = reshape_code(r.codes.col(0), cfg.arch.g_z);
    const FlowResult direct = integrate_forward(src.points, grid, r.net, cfg.steps);
    const FlowResult inverse = integrate_backward_modified(tgt.points, grid, r.net, cfg.steps);
    const LocalDistances d = local_distances(direct.mapped(), tgt.points);
    const LocalDistances i = local_distances(inverse.mapped(), src.points);
    const double rd = std::max(d.max_fld(), d.max_bld()) / tgt.bounding_diameter();
    const double ri = std::max(i.max_fld(), i.max_bld()) / src.bounding_diameter();
    return {rd < 0.05 && ri < 0.05, std::to_string(src.size()) + " points, direct max " + fmt(rd) +
                                        " of diameter, inverse max " + fmt(ri) + " of diameter"};
}

// ---- 5 and 6. cohort ------------------------------------------------------

struct Cohort {
    std::vector<WeightedPointCloud> shapes;  // unit cube
    WeightedPointCloud templ;
    UnitCubeTransform transform;
    VesselModel parent_model;
    TriangleMesh parent_mesh;
    std::size_t parent_index = 0;
};

constexpr int kCohortEpochs = 250;
constexpr int kCohortPoints = 300;

Cohort make_cohort() {
    Cohort c;
    std::vector<WeightedPointCloud> raw;
    raw.push_back(ellipsoid_cloud({1.0, 1.0, 1.0}, 720));
    raw.push_back(ellipsoid_cloud({1.2, 1.0, 0.8}, 720));
    raw.push_back(ellipsoid_cloud({0.9, 0.8, 1.15}, 720));
    raw.push_back(ellipsoid_cloud({1.05, 0.9, 1.0}, 720));
    for (double radius : {0.55, 0.65, 0.75}) {
        const VesselModel m = straight_tube_model(Vec3(0, 0, -1.0), 2.0, radius);
        const TriangleMesh mesh = sweep_vessel_mesh(m, 24, 16);
        if (radius == 0.65) {
            c.parent_model = m;
            c.parent_mesh = mesh;
            c.parent_index = raw.size() - 1;
        }
        raw.push_back(mesh_to_weighted_cloud(mesh));
    }
    // Shape 0 is the template; the six others are training shapes.
    NormalizedClouds nc = normalize_to_unit_cube(raw);
    c.transform = nc.transform;
    c.templ = nc.clouds[0];
    c.shapes.assign(nc.clouds.begin() + 1, nc.clouds.end());
    return c;
}

struct CohortRun {
    TrainResult result;
    TrainConfig cfg;
    double mean_fld = 0.0;
    std::vector<Diagnostics> per_shape;
};

CohortRun train_cohort(const Cohort& c, int n_z) {
    CohortRun run;
    run.cfg.epochs = kCohortEpochs;
    run.cfg.points = kCohortPoints;
    run.cfg.arch.n_z = n_z;
    run.cfg.seed = 5;
    run.result = train(c.shapes, c.templ, run.cfg);
    for (std::size_t s = 0; s < c.shapes.size(); ++s) {
        run.per_shape.push_back(map_diagnostics(c.shapes[s], c.templ, run.result.net,
                                                run.result.codes.col(static_cast<Eigen::Index>(s)), run.cfg.steps));
        run.mean_fld += run.per_shape.back().mean_fld / static_cast<double>(c.shapes.size());
    }
    return run;
}

std::optional<Cohort> g_cohort;
std::optional<CohortRun> g_run256;

const Cohort& cohort() {
    if (!g_cohort) g_cohort = make_cohort();
    return *g_cohort;
}

const CohortRun& run256() {
    if (!g_run256) g_run256 = train_cohort(cohort(), 256);
    return *g_run256;
}

Outcome criterion_cohort() {
    const CohortRun small = train_cohort(cohort(), 8);
    const CohortRun& large = run256();
    return {large.mean_fld <= small.mean_fld,
            "mean FLD N_z=256 " + fmt(large.mean_fld) + " vs N_z=8 " + fmt(small.mean_fld)};
}

Outcome criterion_inference() {
    const Cohort& c = cohort();
    const CohortRun& run = run256();
    // Held-out variant: the parent tube pulled halfway towards a wider tube.
    const VesselModel wider = straight_tube_model(Vec3(0, 0, -1.0), 2.0, 0.8);
    AugmentConfig acfg;
    const TriangleMesh variant = deform_pair(c.parent_model, c.parent_mesh, wider, {0.5}, RigidTransform{}, acfg);
    const QualityReport q = mesh_quality(variant);
    const WeightedPointCloud held_out = c.transform.apply(mesh_to_weighted_cloud(variant));

    const std::uint64_t before = run.result.net.checksum();
    const InferResult inf = infer_code(held_out, c.templ, run.result.net, run.cfg);
    const std::uint64_t after = run.result.net.checksum();
    const double parent_max = run.per_shape[c.parent_index].max_fld;
    const double variant_max = inf.final.max_fld;
    return {before == after && q.pass && variant_max <= 2.0 * parent_max,
            std::string("checksum ") + (before == after ? "unchanged" : "CHANGED") + ", held-out max FLD " +
                fmt(variant_max) + " vs parent " + fmt(parent_max) + " (variant quality " +
                (q.pass ? "ok" : "FAILED") + ")"};
}

// ---- 7. TPS ---------------------------------------------------------------

PointMatrix separated_centers(Rng& rng, int n, double min_dist) {
    std::vector<Vec3> pts;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    while (static_cast<int>(pts.size()) < n) {
        const Vec3 p(u(rng), u(rng), u(rng));
        bool ok = true;
        for (const auto& q : pts) ok = ok && (p - q).norm() >= min_dist;
        if (ok) pts.push_back(p);
    }
    PointMatrix out(n, 3);
    for (int i = 0; i < n; ++i) out.row(i) = pts[static_cast<std::size_t>(i)];
    return out;
}

Outcome criterion_tps() {
    Rng rng(707);
    double worst_interp = 0.0;
    bool monotone = true;
    for (int trial = 0; trial < 10; ++trial) {
        const PointMatrix centers = separated_centers(rng, 20, 0.15);
        const PointMatrix targets = centers + 0.1 * random_points(rng, 20, -1.0, 1.0);
        for (bool affine : {false, true}) {
            const double scale = targets.cwiseAbs().maxCoeff();
            const TpsMap m0 = tps_fit(centers, targets, 0.0, affine);
            worst_interp = std::max(worst_interp, (tps_apply(m0, centers) - targets).cwiseAbs().maxCoeff() / scale);
            double prev = -1.0;
            for (double w : {0.0, 1e-6, 1e-4, 1e-2}) {
                const double res = (tps_apply(tps_fit(centers, targets, w, affine), centers) - targets).norm();
                // Equal residuals up to round-off count as non-decreasing.
                if (res < prev - 1e-12 * std::max(1.0, prev)) monotone = false;
                prev = res;
            }
        }
    }
    const VesselModel thin = straight_tube_model(Vec3::Zero(), 1.0, 0.1);
    const VesselModel thick = straight_tube_model(Vec3::Zero(), 1.0, 0.12);
    const TriangleMesh thin_mesh = sweep_vessel_mesh(thin, 24, 24);
    const TriangleMesh thick_mesh = sweep_vessel_mesh(thick, 24, 24);
    const TriangleMesh deformed = deform_pair(thin, thin_mesh, thick, {1.0}, RigidTransform{}, AugmentConfig{});
    const LocalDistances d = local_distances(deformed.vertices, thick_mesh.vertices);
    const WeightedPointCloud target_cloud = WeightedPointCloud::uniform(thick_mesh.vertices);
    const double rel = d.mean_fld() / target_cloud.bounding_diameter();
    return {worst_interp < 1e-8 && monotone && rel <= 0.02,
            "interpolation residual " + fmt(worst_interp) + ", residual monotone " + (monotone ? "yes" : "no") +
                ", two-tube mean FLD " + fmt(rel) + " of diameter"};
}

// ---- 8. CPD ---------------------------------------------------------------

Outcome criterion_cpd() {
    Rng rng(808);
    double worst_clean = 0.0;
    double worst_outlier_deg = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        const PointMatrix src = random_points(rng, 300, -1.0, 1.0);
        RigidTransform truth;
        truth.rotation = random_rotation(rng, 0.6);
        truth.translation = 0.3 * random_points(rng, 1, -1.0, 1.0).row(0).transpose();
        const PointMatrix tgt = truth.apply(src);
        const CpdResult clean = cpd_rigid(src, tgt, RigidTransform{});
        worst_clean = std::max(worst_clean, (clean.transform.rotation - truth.rotation).norm());

        // 5% of the target replaced by uniform clutter.
        PointMatrix noisy = tgt;
        const int outliers = static_cast<int>(0.05 * static_cast<double>(tgt.rows()));
        std::vector<int> rows(static_cast<std::size_t>(tgt.rows()));
        std::iota(rows.begin(), rows.end(), 0);
        std::shuffle(rows.begin(), rows.end(), rng);
        const PointMatrix clutter = random_points(rng, outliers, -1.6, 1.6);
        for (int k = 0; k < outliers; ++k) noisy.row(rows[static_cast<std::size_t>(k)]) = clutter.row(k);
        CpdOptions o;
        o.outlier_weight = 0.1;
        const CpdResult dirty = cpd_rigid(src, noisy, RigidTransform{}, o);
        worst_outlier_deg = std::max(
            worst_outlier_deg, rotation_angle_between(dirty.transform.rotation, truth.rotation) * 180.0 / M_PI);
    }
    return {worst_clean < 1e-3 && worst_outlier_deg < 2.0,
            "noise-free Frobenius err " + fmt(worst_clean) + ", 5% outliers angle err " + fmt(worst_outlier_deg) +
                " deg"};
}

// ---- 9. adaptive sampling -------------------------------------------------

Outcome criterion_adaptive() {
    Rng rng(909);
    int failures = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 400)(rng);
        const std::size_t M = std::uniform_int_distribution<std::size_t>(1, n)(rng);
        const int permille = std::uniform_int_distribution<int>(0, 999)(rng);
        const double a = permille / 1000.0;
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), std::size_t{0});
        std::shuffle(all.begin(), all.end(), rng);
        const std::vector<std::size_t> previous(all.begin(), all.begin() + static_cast<long>(M));
        Eigen::VectorXd losses(static_cast<Eigen::Index>(M));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (Eigen::Index i = 0; i < losses.size(); ++i) losses(i) = u(rng);

        const std::size_t keep = static_cast<std::size_t>(permille) * M / 1000;
        std::vector<std::pair<double, std::size_t>> sorted;
        for (std::size_t i = 0; i < M; ++i) sorted.emplace_back(losses(static_cast<Eigen::Index>(i)), previous[i]);
        std::sort(sorted.begin(), sorted.end(), std::greater<>());
        std::set<std::size_t> expected;
        for (std::size_t k = 0; k < keep; ++k) expected.insert(sorted[k].second);

        const auto out = adaptive_sample(n, previous, losses, M, a, rng);
        const std::set<std::size_t> head(out.begin(), out.begin() + static_cast<long>(std::min(keep, out.size())));
        const std::set<std::size_t> distinct(out.begin(), out.end());
        const bool ok = out.size() == M && distinct.size() == M && *distinct.rbegin() < n && head == expected;
        if (!ok) ++failures;
    }
    return {failures == 0, std::to_string(1000 - failures) + "/1000 cases match the full-sort oracle"};
}

// ---- 10. quality gate -----------------------------------------------------

TriangleMesh triangle_soup(const std::vector<std::array<Vec3, 3>>& tris) {
    TriangleMesh m;
    m.vertices.resize(static_cast<Eigen::Index>(3 * tris.size()), 3);
    for (std::size_t t = 0; t < tris.size(); ++t) {
        for (int k = 0; k < 3; ++k) m.vertices.row(static_cast<Eigen::Index>(3 * t + k)) = tris[t][static_cast<std::size_t>(k)];
        const int b = static_cast<int>(3 * t);
        m.faces.push_back({b, b + 1, b + 2});
    }
    return m;
}

// Isosceles triangle whose two long edges meet at `angle` (scaled Jacobian sin(angle)).
std::array<Vec3, 3> wedge(double angle, const Vec3& offset) {
    return {offset, offset + Vec3(1, 0, 0), offset + Vec3(std::cos(angle), std::sin(angle), 0)};
}

Outcome criterion_quality() {
    std::vector<std::string> bad;
    const double eq = scaled_jacobian(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0.5, std::sqrt(3.0) / 2.0, 0));
    if (std::abs(eq - std::sqrt(3.0) / 2.0) > 1e-12) bad.push_back("equilateral " + fmt(eq));
    const double deg = scaled_jacobian(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0));
    if (deg != 0.0) bad.push_back("collinear " + fmt(deg));
    const double point = scaled_jacobian(Vec3(1, 1, 1), Vec3(1, 1, 1), Vec3(1, 1, 1));
    if (point != 0.0) bad.push_back("coincident " + fmt(point));

    // Gate oracle over random soups with values straddling both thresholds.
    Rng rng(1010);
    int mismatches = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const int F = std::uniform_int_distribution<int>(1, 40)(rng);
        std::vector<std::array<Vec3, 3>> tris;
        std::uniform_real_distribution<double> ang(0.0, M_PI / 3.0);
        std::uniform_real_distribution<double> near(-1e-3, 1e-3);
        for (int f = 0; f < F; ++f) {
            const int mode = std::uniform_int_distribution<int>(0, 3)(rng);
            double angle = ang(rng);
            if (mode == 1) angle = std::asin(0.1) + near(rng);
            if (mode == 2) angle = 0.0;
            tris.push_back(wedge(angle, Vec3(3.0 * f, 0, 0)));
        }
        const TriangleMesh m = triangle_soup(tris);
        Eigen::VectorXd sj(F);
        for (int f = 0; f < F; ++f) sj(f) = scaled_jacobian(tris[f][0], tris[f][1], tris[f][2]);
        std::vector<double> v(sj.data(), sj.data() + F);
        std::sort(v.begin(), v.end());
        const std::size_t decile = static_cast<std::size_t>((F + 9) / 10);
        const double mean = std::accumulate(v.begin(), v.begin() + static_cast<long>(decile), 0.0) / decile;
        const bool expected = v.front() > 0.0 && mean > 0.1;
        const QualityReport q = mesh_quality(m);
        if (q.pass != expected || std::abs(q.decile_mean - mean) > 1e-15 || q.min_jacobian != v.front()) ++mismatches;
    }
    if (mismatches) bad.push_back(std::to_string(mismatches) + " gate mismatches");

    // A single degenerate face fails the gate even when the decile mean is high.
    std::vector<std::array<Vec3, 3>> tris;
    for (int f = 0; f < 19; ++f) tris.push_back(wedge(M_PI / 3.0, Vec3(3.0 * f, 0, 0)));
    tris.push_back(wedge(0.0, Vec3(60, 0, 0)));
    const QualityReport q = mesh_quality(triangle_soup(tris));
    if (q.pass || !(q.decile_mean > 0.1)) bad.push_back("degenerate face not rejected");

    // Inverted face relative to a reference mesh.
    const TriangleMesh ref = triangle_soup({wedge(M_PI / 3.0, Vec3::Zero()), wedge(M_PI / 3.0, Vec3(3, 0, 0))});
    TriangleMesh flipped = ref;
    flipped.vertices(2, 1) = -flipped.vertices(2, 1);
    const QualityReport qf = mesh_quality(flipped, &ref);
    if (qf.pass || !(qf.min_jacobian < 0.0)) bad.push_back("inverted face not rejected");

    std::string detail = "equilateral " + fmt(eq) + ", degenerate " + fmt(deg) + ", 300 gate cases";
    for (const auto& b : bad) detail += "; " + b;
    return {bad.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
    set_warning_sink([](const std::string&) {});
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"distance measures match brute-force oracles", criterion_distances},
        {"loss gradients match central finite differences", criterion_gradients},
        {"integrator round trips", criterion_integrators},
        {"sphere to ellipsoid registration", criterion_single_shape},
        {"code length 256 fits the cohort at least as well as 8", criterion_cohort},
        {"inference keeps the network fixed and generalizes", criterion_inference},
        {"thin-plate spline fitting", criterion_tps},
        {"rigid coherent point drift", criterion_cpd},
        {"adaptive sampling keeps the exact top losses", criterion_adaptive},
        {"mesh quality gate", criterion_quality},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!o.pass) ++failures;
        std::printf("[%s] criterion %d: %s (%s; %.1f s)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first,
                    o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failures;
}
