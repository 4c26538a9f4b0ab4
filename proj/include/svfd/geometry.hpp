#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace svfd {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
/// n x 3 array of points, one point per row.
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using Rng = std::mt19937_64;

/// Points with probability weights and optional unit normals.
struct WeightedPointCloud {
    PointMatrix points;
    Eigen::VectorXd weights;
    std::optional<PointMatrix> normals;

    std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
    bool has_normals() const { return normals.has_value(); }

    /// Throws a validation error if any invariant is violated.
    void validate() const;

    /// Cloud with weights 1/n.
    static WeightedPointCloud uniform(PointMatrix points);

    /// Rows picked by `indices`, weights renormalized to sum to one.
    WeightedPointCloud subset(std::span<const std::size_t> indices) const;

    /// Same cloud with replaced positions (weights and normals kept).
    WeightedPointCloud with_points(PointMatrix new_points) const;

    /// Largest distance between two bounding-box corners.
    double bounding_diameter() const;
};

struct TriangleMesh {
    PointMatrix vertices;
    std::vector<std::array<int, 3>> faces;

    std::size_t vertex_count() const { return static_cast<std::size_t>(vertices.rows()); }
    std::size_t face_count() const { return faces.size(); }
    void validate() const;
    double total_area() const;
    TriangleMesh with_vertices(PointMatrix v) const;
};

/// Per-axis affine embedding x -> scale .* x + offset.
struct UnitCubeTransform {
    Vec3 scale = Vec3::Ones();
    Vec3 offset = Vec3::Zero();

    PointMatrix apply(const PointMatrix& p) const;
    PointMatrix invert(const PointMatrix& p) const;
    /// Maps positions and normals (normals by the inverse transpose).
    WeightedPointCloud apply(const WeightedPointCloud& c) const;
    WeightedPointCloud invert(const WeightedPointCloud& c) const;
    void validate() const;
};

struct VesselPortion {
    std::string name;
    std::string parent;  // empty for root portions
    std::vector<Vec3> control_points;
    std::vector<double> radii;  // samples spread uniformly over the centerline parameter
    Vec3 reference = Vec3::UnitX();
};

struct VesselModel {
    std::vector<VesselPortion> portions;

    void validate() const;
    const VesselPortion* find(const std::string& name) const;
    int index_of(const std::string& name) const;
};

enum class MeshFormat { Obj, Ply };

TriangleMesh load_mesh(const std::string& path, MeshFormat format);
/// Format chosen from the file extension.
TriangleMesh load_mesh(const std::string& path);
TriangleMesh parse_obj(const std::string& text);
TriangleMesh parse_ply(const std::string& bytes);

void save_mesh_ply(const TriangleMesh& mesh, const std::string& path, bool binary = false);
/// Vertex-only PLY with `weight` (float32) and, when present, nx/ny/nz.
void save_cloud_ply(const WeightedPointCloud& cloud, const std::string& path, bool binary = true);
/// Reads a cloud PLY written by save_cloud_ply, or converts a mesh file.
WeightedPointCloud load_cloud(const std::string& path);

WeightedPointCloud mesh_to_weighted_cloud(const TriangleMesh& mesh);

struct NormalizedClouds {
    std::vector<WeightedPointCloud> clouds;
    UnitCubeTransform transform;
};
/// Joint bounding box of all clouds mapped onto [0,1]^3.
NormalizedClouds normalize_to_unit_cube(const std::vector<WeightedPointCloud>& clouds);

enum class ShapeKind { Ellipsoid, Tube, YBranch };

struct ShapeParams {
    Vec3 axes{1.0, 1.0, 1.0};  // ellipsoid semi-axes
    Vec3 center = Vec3::Zero();
    double radius = 0.1;       // tube radius; branch radius for y_branch
    double length = 1.0;       // tube / trunk length
    double branch_length = 0.5;
    double branch_angle = 0.6;  // radians from the trunk axis
    int ring_vertices = 16;
};

TriangleMesh synth_shape(ShapeKind kind, const ShapeParams& params, int resolution);
ShapeKind parse_shape_kind(const std::string& name);

/// Closed tube meshes swept along each portion centerline (one closed
/// component per portion), `ring_vertices` per contour.
TriangleMesh sweep_vessel_mesh(const VesselModel& model, int ring_vertices = 16,
                               int rings_per_portion = 0);
/// Straight tube along +z from `start`, as a single-portion vessel model.
VesselModel straight_tube_model(const Vec3& start, double length, double radius,
                                int knots = 5);
VesselModel y_branch_model(const ShapeParams& params);

/// M distinct indices, uniform without replacement.
std::vector<std::size_t> subsample(const WeightedPointCloud& cloud, std::size_t count, Rng& rng);

}  // namespace svfd
