#include "svfd/distances.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "svfd/error.hpp"

namespace svfd {

namespace {

void require_nonempty(const PointMatrix& a, const PointMatrix& b) {
    if (a.rows() == 0 || b.rows() == 0) throw_validation("distance between empty clouds is undefined");
}

class UniformGrid {
public:
    explicit UniformGrid(const PointMatrix& pts) : pts_(pts) {
        lo_ = pts.colwise().minCoeff();
        const Vec3 hi = pts.colwise().maxCoeff();
        const Vec3 ext = (hi - lo_).cwiseMax(1e-12);
        const double n = static_cast<double>(pts.rows());
        // Roughly two points per cell on a surface-like set.
        const double vol = ext.prod();
        cell_ = std::max(std::cbrt(vol / n * 2.0), ext.maxCoeff() / 256.0);
        for (int a = 0; a < 3; ++a) {
            dims_[a] = std::max(1, static_cast<int>(std::ceil(ext(a) / cell_)));
        }
        const std::size_t ncell = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
        start_.assign(ncell + 1, 0);
        std::vector<std::size_t> cell_of(static_cast<std::size_t>(pts.rows()));
        for (Eigen::Index i = 0; i < pts.rows(); ++i) {
            int c[3];
            for (int a = 0; a < 3; ++a) {
                c[a] = std::clamp(static_cast<int>(std::floor((pts(i, a) - lo_(a)) / cell_)), 0, dims_[a] - 1);
            }
            cell_of[static_cast<std::size_t>(i)] = flat(c[0], c[1], c[2]);
            ++start_[cell_of[static_cast<std::size_t>(i)] + 1];
        }
        for (std::size_t c = 0; c < ncell; ++c) start_[c + 1] += start_[c];
        items_.resize(static_cast<std::size_t>(pts.rows()));
        std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
        // Ascending point order inside each cell.
        for (std::size_t i = 0; i < cell_of.size(); ++i) items_[fill[cell_of[i]]++] = i;
    }

    NearestResult query(const Vec3& q) const {
        long qc[3];
        for (int a = 0; a < 3; ++a) qc[a] = static_cast<long>(std::floor((q(a) - lo_(a)) / cell_));
        long max_r = 0;
        for (int a = 0; a < 3; ++a) {
            max_r = std::max({max_r, std::labs(qc[a]), std::labs(qc[a] - (dims_[a] - 1))});
        }
        NearestResult best{0, std::numeric_limits<double>::infinity()};
        for (long r = 0; r <= max_r; ++r) {
            if (std::isfinite(best.squared_distance)) {
                const double bound = (static_cast<double>(r) - 1.0) * cell_;
                if (bound > 0.0 && bound * bound > best.squared_distance) break;
            }
            visit_shell(qc, r, q, best);
        }
        return best;
    }

private:
    std::size_t flat(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * dims_[1] + static_cast<std::size_t>(y)) * dims_[0] +
               static_cast<std::size_t>(x);
    }

    void visit_cell(long x, long y, long z, const Vec3& q, NearestResult& best) const {
        if (x < 0 || y < 0 || z < 0 || x >= dims_[0] || y >= dims_[1] || z >= dims_[2]) return;
        const std::size_t c = flat(static_cast<int>(x), static_cast<int>(y), static_cast<int>(z));
        for (std::size_t k = start_[c]; k < start_[c + 1]; ++k) {
            const std::size_t i = items_[k];
            const auto r = static_cast<Eigen::Index>(i);
            const double dx = q.x() - pts_(r, 0);
            const double dy = q.y() - pts_(r, 1);
            const double dz = q.z() - pts_(r, 2);
            const double d = dx * dx + dy * dy + dz * dz;
            if (d < best.squared_distance || (d == best.squared_distance && i < best.index)) {
                best = {i, d};
            }
        }
    }

    void visit_shell(const long* qc, long r, const Vec3& q, NearestResult& best) const {
        for (long dz = -r; dz <= r; ++dz) {
            for (long dy = -r; dy <= r; ++dy) {
                const bool face = std::labs(dz) == r || std::labs(dy) == r;
                if (face) {
                    for (long dx = -r; dx <= r; ++dx) visit_cell(qc[0] + dx, qc[1] + dy, qc[2] + dz, q, best);
                } else {
                    visit_cell(qc[0] - r, qc[1] + dy, qc[2] + dz, q, best);
                    if (r > 0) visit_cell(qc[0] + r, qc[1] + dy, qc[2] + dz, q, best);
                }
            }
        }
    }

    const PointMatrix& pts_;
    Vec3 lo_;
    double cell_ = 1.0;
    int dims_[3] = {1, 1, 1};
    std::vector<std::size_t> start_;
    std::vector<std::size_t> items_;
};

}  // namespace

std::vector<NearestResult> nearest_neighbors_exhaustive(const PointMatrix& query,
                                                        const PointMatrix& reference) {
    require_nonempty(query, reference);
    std::vector<NearestResult> out(static_cast<std::size_t>(query.rows()));
    for (Eigen::Index i = 0; i < query.rows(); ++i) {
        const double qx = query(i, 0), qy = query(i, 1), qz = query(i, 2);
        NearestResult best{0, std::numeric_limits<double>::infinity()};
        for (Eigen::Index j = 0; j < reference.rows(); ++j) {
            const double dx = qx - reference(j, 0);
            const double dy = qy - reference(j, 1);
            const double dz = qz - reference(j, 2);
            const double d = dx * dx + dy * dy + dz * dz;
            if (d < best.squared_distance) best = {static_cast<std::size_t>(j), d};
        }
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

std::vector<NearestResult> nearest_neighbors(const PointMatrix& query, const PointMatrix& reference) {
    require_nonempty(query, reference);
    if (static_cast<std::size_t>(reference.rows()) < kGridThreshold) {
        return nearest_neighbors_exhaustive(query, reference);
    }
    const UniformGrid grid(reference);
    std::vector<NearestResult> out(static_cast<std::size_t>(query.rows()));
    for (Eigen::Index i = 0; i < query.rows(); ++i) {
        out[static_cast<std::size_t>(i)] = grid.query(query.row(i).transpose());
    }
    return out;
}

std::vector<NearestResult> nearest_neighbors(const WeightedPointCloud& y, const WeightedPointCloud& yp) {
    return nearest_neighbors(y.points, yp.points);
}

namespace {

struct ChamferParts {
    std::vector<NearestResult> fwd;  // y -> yp
    std::vector<NearestResult> bwd;  // yp -> y
};

ChamferParts chamfer_parts(const PointMatrix& y, const PointMatrix& yp) {
    return {nearest_neighbors(y, yp), nearest_neighbors(yp, y)};
}

Eigen::VectorXd side_weights(const WeightedPointCloud& c, bool weighted) {
    if (weighted) return c.weights;
    return Eigen::VectorXd::Constant(c.points.rows(), 1.0 / static_cast<double>(c.points.rows()));
}

void require_normals(const WeightedPointCloud& y, const WeightedPointCloud& yp, const char* what) {
    if (!y.has_normals() || !yp.has_normals()) {
        throw_validation(std::string(what) + " requires normals on both clouds");
    }
}

}  // namespace

AttachmentValue evaluate_attachment(const WeightedPointCloud& y, const WeightedPointCloud& yp,
                                    const AttachmentOptions& opts, bool need_grad) {
    require_nonempty(y.points, yp.points);
    AttachmentValue out;
    const Attachment kind = opts.kind;

    if (kind == Attachment::SD || kind == Attachment::SDW) {
        const bool weighted = kind == Attachment::SDW;
        const auto r = sinkhorn_evaluate(y.points, side_weights(y, weighted), yp.points,
                                         side_weights(yp, weighted), opts.sinkhorn, need_grad);
        out.value = r.divergence;
        if (need_grad) {
            out.grad_y = r.grad_y;
            out.grad_yp = r.grad_yp;
        }
        return out;
    }

    const bool weighted = kind == Attachment::CDW || kind == Attachment::PCDW || kind == Attachment::NCDW;
    const bool plane = kind == Attachment::PCD || kind == Attachment::PCDW;
    const bool with_normals = kind == Attachment::NCD || kind == Attachment::NCDW;
    if (plane) require_normals(y, yp, "point-to-plane Chamfer");
    if (with_normals) require_normals(y, yp, "normal-penalized Chamfer");

    const auto parts = chamfer_parts(y.points, yp.points);
    const Eigen::VectorXd wy = side_weights(y, weighted);
    const Eigen::VectorXd wyp = side_weights(yp, weighted);
    const Eigen::Index m = y.points.rows();
    const Eigen::Index mp = yp.points.rows();

    out.pointwise_available = true;
    out.pointwise_y.resize(m);
    out.pointwise_yp.resize(mp);
    if (need_grad) {
        out.grad_y = PointMatrix::Zero(m, 3);
        out.grad_yp = PointMatrix::Zero(mp, 3);
    }

    double value = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto& nn = parts.fwd[static_cast<std::size_t>(i)];
        const auto j = static_cast<Eigen::Index>(nn.index);
        out.pointwise_y(i) = nn.squared_distance;
        const Vec3 diff = (y.points.row(i) - yp.points.row(j)).transpose();
        if (plane) {
            const Vec3 n = y.normals->row(i).transpose();
            const double r = diff.dot(n);
            value += wy(i) * r * r;
            if (need_grad) {
                const Vec3 g = 2.0 * wy(i) * r * n;
                out.grad_y.row(i) += g.transpose();
                out.grad_yp.row(j) -= g.transpose();
            }
        } else {
            value += wy(i) * nn.squared_distance;
            if (need_grad) {
                const Vec3 g = 2.0 * wy(i) * diff;
                out.grad_y.row(i) += g.transpose();
                out.grad_yp.row(j) -= g.transpose();
            }
            if (with_normals) {
                const double c = 1.0 - y.normals->row(i).dot(yp.normals->row(j));
                value += 0.5 * opts.w_n * wy(i) * c * c;
            }
        }
    }
    for (Eigen::Index j = 0; j < mp; ++j) {
        const auto& nn = parts.bwd[static_cast<std::size_t>(j)];
        const auto i = static_cast<Eigen::Index>(nn.index);
        out.pointwise_yp(j) = nn.squared_distance;
        const Vec3 diff = (y.points.row(i) - yp.points.row(j)).transpose();
        if (plane) {
            const Vec3 n = yp.normals->row(j).transpose();
            const double r = diff.dot(n);
            value += wyp(j) * r * r;
            if (need_grad) {
                const Vec3 g = 2.0 * wyp(j) * r * n;
                out.grad_y.row(i) += g.transpose();
                out.grad_yp.row(j) -= g.transpose();
            }
        } else {
            value += wyp(j) * nn.squared_distance;
            if (need_grad) {
                const Vec3 g = 2.0 * wyp(j) * diff;
                out.grad_y.row(i) += g.transpose();
                out.grad_yp.row(j) -= g.transpose();
            }
            if (with_normals) {
                const double c = 1.0 - yp.normals->row(j).dot(y.normals->row(i));
                value += 0.5 * opts.w_n * wyp(j) * c * c;
            }
        }
    }
    out.value = value;
    return out;
}

double chamfer(const WeightedPointCloud& y, const WeightedPointCloud& yp) {
    return evaluate_attachment(y, yp, {Attachment::CD, 0.0, {}}, false).value;
}

double chamfer_weighted(const WeightedPointCloud& y, const WeightedPointCloud& yp) {
    return evaluate_attachment(y, yp, {Attachment::CDW, 0.0, {}}, false).value;
}

double chamfer_normals(const WeightedPointCloud& y, const WeightedPointCloud& yp, double w_n, bool weighted) {
    if (w_n < 0.0) throw_validation("w_n must be non-negative");
    return evaluate_attachment(y, yp, {weighted ? Attachment::NCDW : Attachment::NCD, w_n, {}}, false).value;
}

double chamfer_point_to_plane(const WeightedPointCloud& y, const WeightedPointCloud& yp, bool weighted) {
    return evaluate_attachment(y, yp, {weighted ? Attachment::PCDW : Attachment::PCD, 0.0, {}}, false).value;
}

double LocalDistances::mean_fld() const {
    double s = 0.0;
    for (double v : fld) s += v;
    return fld.empty() ? 0.0 : s / static_cast<double>(fld.size());
}
double LocalDistances::max_fld() const { return fld.empty() ? 0.0 : *std::max_element(fld.begin(), fld.end()); }
double LocalDistances::mean_bld() const {
    double s = 0.0;
    for (double v : bld) s += v;
    return bld.empty() ? 0.0 : s / static_cast<double>(bld.size());
}
double LocalDistances::max_bld() const { return bld.empty() ? 0.0 : *std::max_element(bld.begin(), bld.end()); }

LocalDistances local_distances(const PointMatrix& mapped, const PointMatrix& target) {
    require_nonempty(mapped, target);
    LocalDistances out;
    for (const auto& r : nearest_neighbors(mapped, target)) out.fld.push_back(std::sqrt(r.squared_distance));
    for (const auto& r : nearest_neighbors(target, mapped)) out.bld.push_back(std::sqrt(r.squared_distance));
    return out;
}

LocalDistances local_distances(const WeightedPointCloud& mapped, const WeightedPointCloud& target) {
    return local_distances(mapped.points, target.points);
}

Attachment parse_attachment(const std::string& name) {
    std::string s;
    for (char c : name) s.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (s == "CD") return Attachment::CD;
    if (s == "CDW") return Attachment::CDW;
    if (s == "PCD") return Attachment::PCD;
    if (s == "PCDW") return Attachment::PCDW;
    if (s == "NCD") return Attachment::NCD;
    if (s == "NCDW") return Attachment::NCDW;
    if (s == "SD") return Attachment::SD;
    if (s == "SDW") return Attachment::SDW;
    throw_validation("unknown attachment measure '" + name + "' (CD, CDW, PCD, PCDW, NCD, NCDW, SD, SDW)");
}

std::string attachment_name(Attachment a) {
    switch (a) {
        case Attachment::CD: return "CD";
        case Attachment::CDW: return "CDW";
        case Attachment::PCD: return "PCD";
        case Attachment::PCDW: return "PCDW";
        case Attachment::NCD: return "NCD";
        case Attachment::NCDW: return "NCDW";
        case Attachment::SD: return "SD";
        case Attachment::SDW: return "SDW";
    }
    return "?";
}

bool attachment_is_pointwise(Attachment a) { return a != Attachment::SD && a != Attachment::SDW; }

bool attachment_needs_normals(Attachment a) {
    return a == Attachment::PCD || a == Attachment::PCDW || a == Attachment::NCD || a == Attachment::NCDW;
}

}  // namespace svfd
