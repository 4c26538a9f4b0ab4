#include <cmath>
#include <numbers>

#include "svfd/error.hpp"
#include "svfd/geometry.hpp"
#include "svfd/spline.hpp"

namespace svfd {

namespace {

TriangleMesh uv_ellipsoid(const Vec3& axes, const Vec3& center, int resolution) {
    // faces = 2 * lon * (lat - 1)
    const int lat = std::max(2, static_cast<int>(std::lround(std::sqrt(resolution / 4.0))));
    const int lon = std::max(3, static_cast<int>(std::lround(resolution / (2.0 * (lat - 1)))));
    const double pi = std::numbers::pi;

    std::vector<Vec3> verts;
    verts.push_back(center + Vec3(0, 0, axes.z()));
    for (int i = 1; i < lat; ++i) {
        const double phi = pi * i / lat;
        for (int j = 0; j < lon; ++j) {
            const double th = 2.0 * pi * j / lon;
            verts.push_back(center + Vec3(axes.x() * std::sin(phi) * std::cos(th),
                                          axes.y() * std::sin(phi) * std::sin(th),
                                          axes.z() * std::cos(phi)));
        }
    }
    verts.push_back(center - Vec3(0, 0, axes.z()));
    const int south = static_cast<int>(verts.size()) - 1;
    auto ring = [&](int i, int j) { return 1 + (i - 1) * lon + ((j % lon) + lon) % lon; };

    TriangleMesh mesh;
    for (int j = 0; j < lon; ++j) mesh.faces.push_back({0, ring(1, j), ring(1, j + 1)});
    for (int i = 1; i + 1 < lat; ++i) {
        for (int j = 0; j < lon; ++j) {
            const int a = ring(i, j), b = ring(i, j + 1), c = ring(i + 1, j + 1), d = ring(i + 1, j);
            mesh.faces.push_back({a, d, c});
            mesh.faces.push_back({a, c, b});
        }
    }
    for (int j = 0; j < lon; ++j) mesh.faces.push_back({south, ring(lat - 1, j + 1), ring(lat - 1, j)});
    mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
    for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i)) = verts[i];
    return mesh;
}

void sweep_portion(const VesselPortion& portion, int ring_vertices, int rings,
                   std::vector<Vec3>& verts, std::vector<std::array<int, 3>>& faces) {
    const CenterlineSpline spline(portion.control_points);
    if (rings <= 0) {
        double mean_r = 0.0;
        for (double r : portion.radii) mean_r += r;
        mean_r /= static_cast<double>(portion.radii.size());
        const double arc = 2.0 * std::numbers::pi * mean_r / ring_vertices;
        rings = std::max(2, static_cast<int>(std::lround(spline.length() / arc)) + 1);
    }
    const auto s = spline.sample_uniform(rings);
    const auto frames = bishop_frames(s.points, s.tangents, portion.reference);
    const int base = static_cast<int>(verts.size());
    for (int i = 0; i < rings; ++i) {
        const double r = radius_at(portion.radii, s.params[static_cast<std::size_t>(i)]);
        const auto& f = frames[static_cast<std::size_t>(i)];
        for (int j = 0; j < ring_vertices; ++j) {
            const double th = 2.0 * std::numbers::pi * j / ring_vertices;
            verts.push_back(s.points[static_cast<std::size_t>(i)] +
                            r * (std::cos(th) * f.normal + std::sin(th) * f.binormal));
        }
    }
    auto id = [&](int i, int j) { return base + i * ring_vertices + (j % ring_vertices); };
    for (int i = 0; i + 1 < rings; ++i) {
        for (int j = 0; j < ring_vertices; ++j) {
            faces.push_back({id(i, j), id(i, j + 1), id(i + 1, j + 1)});
            faces.push_back({id(i, j), id(i + 1, j + 1), id(i + 1, j)});
        }
    }
    const int c0 = static_cast<int>(verts.size());
    verts.push_back(s.points.front());
    const int c1 = static_cast<int>(verts.size());
    verts.push_back(s.points.back());
    for (int j = 0; j < ring_vertices; ++j) {
        faces.push_back({c0, id(0, j + 1), id(0, j)});
        faces.push_back({c1, id(rings - 1, j), id(rings - 1, j + 1)});
    }
}

}  // namespace

ShapeKind parse_shape_kind(const std::string& name) {
    if (name == "ellipsoid" || name == "sphere") return ShapeKind::Ellipsoid;
    if (name == "tube") return ShapeKind::Tube;
    if (name == "y_branch" || name == "ybranch") return ShapeKind::YBranch;
    throw_validation("unknown shape kind '" + name + "' (ellipsoid, tube, y_branch)");
}

VesselModel straight_tube_model(const Vec3& start, double length, double radius, int knots) {
    if (!(length > 0.0) || !(radius > 0.0)) throw_validation("tube length and radius must be positive");
    VesselPortion p;
    p.name = "tube";
    for (int k = 0; k < knots; ++k) {
        p.control_points.push_back(start + Vec3(0, 0, length * k / (knots - 1)));
    }
    p.radii = {radius};
    p.reference = Vec3::UnitX();
    VesselModel m;
    m.portions.push_back(std::move(p));
    return m;
}

VesselModel y_branch_model(const ShapeParams& params) {
    if (!(params.length > 0.0) || !(params.radius > 0.0) || !(params.branch_length > 0.0)) {
        throw_validation("y_branch dimensions must be positive");
    }
    VesselModel m;
    VesselModel trunk = straight_tube_model(params.center - Vec3(0, 0, params.length / 2),
                                            params.length, 1.4 * params.radius);
    trunk.portions[0].name = "trunk";
    m.portions.push_back(trunk.portions[0]);
    const Vec3 top = params.center + Vec3(0, 0, params.length / 2);
    for (int side : {-1, 1}) {
        VesselPortion b;
        b.name = side < 0 ? "left" : "right";
        b.parent = "trunk";
        const Vec3 dir(side * std::sin(params.branch_angle), 0.0, std::cos(params.branch_angle));
        // Branch centerline starts inside the trunk, below its end.
        const Vec3 origin = top - Vec3(0, 0, 1.4 * params.radius);
        for (int k = 0; k < 5; ++k) {
            b.control_points.push_back(origin + dir * (params.branch_length * k / 4.0));
        }
        b.radii = {params.radius};
        b.reference = Vec3::UnitY();
        m.portions.push_back(std::move(b));
    }
    return m;
}

TriangleMesh sweep_vessel_mesh(const VesselModel& model, int ring_vertices, int rings_per_portion) {
    model.validate();
    if (ring_vertices < 3) throw_validation("need at least 3 vertices per ring");
    std::vector<Vec3> verts;
    TriangleMesh mesh;
    for (const auto& p : model.portions) sweep_portion(p, ring_vertices, rings_per_portion, verts, mesh.faces);
    mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
    for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i)) = verts[i];
    return mesh;
}

TriangleMesh synth_shape(ShapeKind kind, const ShapeParams& params, int resolution) {
    if (resolution < 24) throw_validation("resolution must be at least 24 faces");
    const int ring = params.ring_vertices;
    if (ring < 3) throw_validation("ring_vertices must be at least 3");
    switch (kind) {
        case ShapeKind::Ellipsoid:
            if ((params.axes.array() <= 0.0).any()) throw_validation("ellipsoid axes must be positive");
            return uv_ellipsoid(params.axes, params.center, resolution);
        case ShapeKind::Tube: {
            const VesselModel m = straight_tube_model(params.center - Vec3(0, 0, params.length / 2),
                                                      params.length, params.radius);
            // faces = 2 * ring * (rings - 1) + 2 * ring
            const int rings = std::max(2, static_cast<int>(std::lround((resolution - 2.0 * ring) / (2.0 * ring))) + 1);
            return sweep_vessel_mesh(m, ring, rings);
        }
        case ShapeKind::YBranch: {
            const VesselModel m = y_branch_model(params);
            const double total = params.length + 2.0 * params.branch_length;
            std::vector<Vec3> verts;
            TriangleMesh mesh;
            for (const auto& p : m.portions) {
                const double len = (p.control_points.back() - p.control_points.front()).norm();
                const double share = resolution * len / total;
                const int rings = std::max(2, static_cast<int>(std::lround((share - 2.0 * ring) / (2.0 * ring))) + 1);
                sweep_portion(p, ring, rings, verts, mesh.faces);
            }
            mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
            for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i)) = verts[i];
            return mesh;
        }
    }
    throw_validation("unknown shape kind");
}

}  // namespace svfd
