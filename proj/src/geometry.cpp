#include "svfd/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "svfd/error.hpp"

namespace svfd {

void WeightedPointCloud::validate() const {
    const auto n = points.rows();
    if (weights.size() != n) throw_validation("weight count does not match point count");
    if (!points.allFinite()) throw_validation("cloud contains non-finite coordinates");
    if (n > 0) {
        if ((weights.array() < 0.0).any()) throw_validation("negative point weight");
        const double total = weights.sum();
        if (std::abs(total - 1.0) > 1e-9) {
            std::ostringstream os;
            os << "weights sum to " << total << ", expected 1";
            throw_validation(os.str());
        }
    }
    if (normals) {
        if (normals->rows() != n) throw_validation("normal count does not match point count");
        for (Eigen::Index i = 0; i < n; ++i) {
            if (std::abs(normals->row(i).norm() - 1.0) > 1e-6) {
                throw_validation("normal " + std::to_string(i) + " is not unit length");
            }
        }
    }
}

WeightedPointCloud WeightedPointCloud::uniform(PointMatrix pts) {
    WeightedPointCloud c;
    const auto n = pts.rows();
    c.points = std::move(pts);
    c.weights = Eigen::VectorXd::Constant(n, n > 0 ? 1.0 / static_cast<double>(n) : 0.0);
    return c;
}

WeightedPointCloud WeightedPointCloud::subset(std::span<const std::size_t> indices) const {
    WeightedPointCloud out;
    const auto m = static_cast<Eigen::Index>(indices.size());
    out.points.resize(m, 3);
    out.weights.resize(m);
    if (normals) out.normals = PointMatrix(m, 3);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto src = static_cast<Eigen::Index>(indices[static_cast<std::size_t>(i)]);
        if (src >= points.rows()) throw_validation("subset index out of range");
        out.points.row(i) = points.row(src);
        out.weights(i) = weights(src);
        if (normals) out.normals->row(i) = normals->row(src);
    }
    const double total = out.weights.sum();
    if (m > 0) {
        if (total > 0.0) {
            out.weights /= total;
        } else {
            out.weights.setConstant(1.0 / static_cast<double>(m));
        }
    }
    return out;
}

WeightedPointCloud WeightedPointCloud::with_points(PointMatrix new_points) const {
    if (new_points.rows() != points.rows()) throw_validation("point count mismatch");
    WeightedPointCloud out = *this;
    out.points = std::move(new_points);
    return out;
}

double WeightedPointCloud::bounding_diameter() const {
    if (points.rows() == 0) return 0.0;
    return (points.colwise().maxCoeff() - points.colwise().minCoeff()).norm();
}

void TriangleMesh::validate() const {
    const int nv = static_cast<int>(vertices.rows());
    for (std::size_t f = 0; f < faces.size(); ++f) {
        const auto& tri = faces[f];
        for (int idx : tri) {
            if (idx < 0 || idx >= nv) {
                std::ostringstream os;
                os << "face " << f << ": vertex index " << idx << " out of range (" << nv
                   << " vertices)";
                throw_validation(os.str());
            }
        }
        if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
            throw_validation("face " + std::to_string(f) + " repeats a vertex index");
        }
    }
}

double TriangleMesh::total_area() const {
    double total = 0.0;
    for (const auto& tri : faces) {
        const Vec3 a = vertices.row(tri[0]);
        const Vec3 b = vertices.row(tri[1]);
        const Vec3 c = vertices.row(tri[2]);
        total += 0.5 * (b - a).cross(c - a).norm();
    }
    return total;
}

TriangleMesh TriangleMesh::with_vertices(PointMatrix v) const {
    if (v.rows() != vertices.rows()) throw_validation("vertex count mismatch");
    TriangleMesh out;
    out.vertices = std::move(v);
    out.faces = faces;
    return out;
}

void UnitCubeTransform::validate() const {
    if ((scale.array() <= 0.0).any()) throw_validation("transform scale must be strictly positive");
}

PointMatrix UnitCubeTransform::apply(const PointMatrix& p) const {
    PointMatrix out = p;
    for (int a = 0; a < 3; ++a) out.col(a) = p.col(a).array() * scale(a) + offset(a);
    return out;
}

PointMatrix UnitCubeTransform::invert(const PointMatrix& p) const {
    PointMatrix out = p;
    for (int a = 0; a < 3; ++a) out.col(a) = (p.col(a).array() - offset(a)) / scale(a);
    return out;
}

namespace {
PointMatrix scale_normals(const PointMatrix& n, const Vec3& factor) {
    PointMatrix out = n;
    for (int a = 0; a < 3; ++a) out.col(a) *= factor(a);
    out.rowwise().normalize();
    return out;
}
}  // namespace

WeightedPointCloud UnitCubeTransform::apply(const WeightedPointCloud& c) const {
    WeightedPointCloud out = c;
    out.points = apply(c.points);
    if (c.normals) out.normals = scale_normals(*c.normals, scale.cwiseInverse());
    return out;
}

WeightedPointCloud UnitCubeTransform::invert(const WeightedPointCloud& c) const {
    WeightedPointCloud out = c;
    out.points = invert(c.points);
    if (c.normals) out.normals = scale_normals(*c.normals, scale);
    return out;
}

void VesselModel::validate() const {
    if (portions.empty()) throw_validation("vessel model has no portions");
    for (const auto& p : portions) {
        if (p.control_points.size() < 4) {
            throw_validation("portion '" + p.name + "' needs at least 4 centerline control points");
        }
        if (p.radii.empty()) throw_validation("portion '" + p.name + "' has no radius samples");
        for (double r : p.radii) {
            if (!(r > 0.0)) throw_validation("portion '" + p.name + "' has a non-positive radius");
        }
        if (!p.parent.empty() && index_of(p.parent) < 0) {
            throw_validation("portion '" + p.name + "' names unknown parent '" + p.parent + "'");
        }
    }
    for (std::size_t i = 0; i < portions.size(); ++i) {
        for (std::size_t j = i + 1; j < portions.size(); ++j) {
            if (portions[i].name == portions[j].name) {
                throw_validation("duplicate portion name '" + portions[i].name + "'");
            }
        }
    }
}

const VesselPortion* VesselModel::find(const std::string& name) const {
    const int i = index_of(name);
    return i < 0 ? nullptr : &portions[static_cast<std::size_t>(i)];
}

int VesselModel::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < portions.size(); ++i) {
        if (portions[i].name == name) return static_cast<int>(i);
    }
    return -1;
}

WeightedPointCloud mesh_to_weighted_cloud(const TriangleMesh& mesh) {
    mesh.validate();
    const std::size_t nf = mesh.faces.size();
    std::vector<double> areas(nf);
    std::vector<Vec3> centroids(nf), normals(nf);
    double total = 0.0;
    for (std::size_t f = 0; f < nf; ++f) {
        const auto& tri = mesh.faces[f];
        const Vec3 a = mesh.vertices.row(tri[0]);
        const Vec3 b = mesh.vertices.row(tri[1]);
        const Vec3 c = mesh.vertices.row(tri[2]);
        const Vec3 cr = (b - a).cross(c - a);
        areas[f] = 0.5 * cr.norm();
        centroids[f] = (a + b + c) / 3.0;
        normals[f] = cr;
        total += areas[f];
    }
    if (!(total > 0.0)) throw_validation("mesh has zero total area (all faces degenerate)");

    std::vector<std::size_t> keep;
    keep.reserve(nf);
    for (std::size_t f = 0; f < nf; ++f) {
        if (areas[f] >= 1e-14 * total) keep.push_back(f);
    }
    if (keep.size() < nf) {
        warn(std::to_string(nf - keep.size()) + " degenerate face(s) dropped");
    }

    const auto m = static_cast<Eigen::Index>(keep.size());
    WeightedPointCloud cloud;
    cloud.points.resize(m, 3);
    cloud.weights.resize(m);
    PointMatrix nrm(m, 3);
    double kept_total = 0.0;
    for (std::size_t f : keep) kept_total += areas[f];
    for (Eigen::Index i = 0; i < m; ++i) {
        const std::size_t f = keep[static_cast<std::size_t>(i)];
        cloud.points.row(i) = centroids[f];
        cloud.weights(i) = areas[f] / kept_total;
        nrm.row(i) = normals[f].normalized();
    }
    cloud.normals = std::move(nrm);
    return cloud;
}

NormalizedClouds normalize_to_unit_cube(const std::vector<WeightedPointCloud>& clouds) {
    if (clouds.empty()) throw_validation("normalization needs at least one cloud");
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    bool any = false;
    for (const auto& c : clouds) {
        if (c.points.rows() == 0) continue;
        any = true;
        lo = lo.cwiseMin(Vec3(c.points.colwise().minCoeff()));
        hi = hi.cwiseMax(Vec3(c.points.colwise().maxCoeff()));
    }
    if (!any) throw_validation("normalization needs at least one point");
    const Vec3 extent = hi - lo;
    for (int a = 0; a < 3; ++a) {
        if (!(extent(a) > 0.0)) {
            throw_validation("degenerate extent: bounding box is flat along axis " + std::to_string(a));
        }
    }
    NormalizedClouds out;
    out.transform.scale = extent.cwiseInverse();
    out.transform.offset = -lo.cwiseProduct(out.transform.scale);
    out.clouds.reserve(clouds.size());
    for (const auto& c : clouds) out.clouds.push_back(out.transform.apply(c));
    return out;
}

std::vector<std::size_t> subsample(const WeightedPointCloud& cloud, std::size_t count, Rng& rng) {
    const std::size_t n = cloud.size();
    if (count > n) {
        throw_validation("cannot sample " + std::to_string(count) + " points from a cloud of " +
                         std::to_string(n));
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(count);
    return idx;
}

}  // namespace svfd
