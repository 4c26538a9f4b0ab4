#include "svfd/hull.hpp"

#include <cmath>
#include <limits>
#include <unordered_set>

#include "svfd/error.hpp"

namespace svfd {

double ConvexHull::signed_distance(const Vec3& p) const {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < normals.size(); ++f) best = std::max(best, normals[f].dot(p) - offsets[f]);
    return best;
}

namespace {

struct Face {
    int a, b, c;
    Vec3 n;
    double d;
    bool alive = true;
};

std::uint64_t edge_key(int a, int b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

}  // namespace

ConvexHull convex_hull(const PointMatrix& pts) {
    const int n = static_cast<int>(pts.rows());
    if (n < 4) throw_validation("convex hull needs at least 4 points");
    auto P = [&](int i) -> Vec3 { return pts.row(i).transpose(); };
    const double scale = std::max(1e-300, (pts.colwise().maxCoeff() - pts.colwise().minCoeff()).norm());
    const double eps = 1e-10 * scale;

    // Initial tetrahedron from extreme points.
    int i0 = 0, i1 = -1, i2 = -1, i3 = -1;
    for (int i = 1; i < n; ++i) {
        if (pts(i, 0) < pts(i0, 0)) i0 = i;
    }
    double best = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = (P(i) - P(i0)).norm();
        if (d > best) best = d, i1 = i;
    }
    if (i1 < 0 || best <= eps) throw_validation("convex hull input is degenerate (coincident points)");
    best = 0.0;
    const Vec3 dir = (P(i1) - P(i0)).normalized();
    for (int i = 0; i < n; ++i) {
        const double d = (P(i) - P(i0)).cross(dir).norm();
        if (d > best) best = d, i2 = i;
    }
    if (i2 < 0 || best <= eps) throw_validation("convex hull input is degenerate (collinear points)");
    const Vec3 pn = (P(i1) - P(i0)).cross(P(i2) - P(i0)).normalized();
    best = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = std::abs((P(i) - P(i0)).dot(pn));
        if (d > best) best = d, i3 = i;
    }
    if (i3 < 0 || best <= eps) throw_validation("convex hull input is degenerate (coplanar points)");

    const Vec3 interior = (P(i0) + P(i1) + P(i2) + P(i3)) / 4.0;
    std::vector<Face> faces;
    auto add_face = [&](int a, int b, int c) {
        Vec3 nrm = (P(b) - P(a)).cross(P(c) - P(a));
        const double len = nrm.norm();
        nrm = len > 0.0 ? Vec3(nrm / len) : Vec3::Zero();
        Face f{a, b, c, nrm, nrm.dot(P(a))};
        if (f.n.dot(interior) - f.d > 0.0) {
            std::swap(f.b, f.c);
            f.n = -f.n;
            f.d = -f.d;
        }
        faces.push_back(f);
    };
    add_face(i0, i1, i2);
    add_face(i0, i1, i3);
    add_face(i0, i2, i3);
    add_face(i1, i2, i3);

    std::unordered_set<std::uint64_t> visible_edges;
    std::vector<std::size_t> visible;
    for (int p = 0; p < n; ++p) {
        if (p == i0 || p == i1 || p == i2 || p == i3) continue;
        const Vec3 x = P(p);
        visible.clear();
        for (std::size_t f = 0; f < faces.size(); ++f) {
            if (faces[f].alive && faces[f].n.dot(x) - faces[f].d > eps) visible.push_back(f);
        }
        if (visible.empty()) continue;
        visible_edges.clear();
        for (std::size_t f : visible) {
            const Face& fc = faces[f];
            visible_edges.insert(edge_key(fc.a, fc.b));
            visible_edges.insert(edge_key(fc.b, fc.c));
            visible_edges.insert(edge_key(fc.c, fc.a));
        }
        std::vector<std::array<int, 2>> horizon;
        for (std::size_t f : visible) {
            const Face& fc = faces[f];
            const int e[3][2] = {{fc.a, fc.b}, {fc.b, fc.c}, {fc.c, fc.a}};
            for (const auto& ed : e) {
                if (!visible_edges.count(edge_key(ed[1], ed[0]))) horizon.push_back({ed[0], ed[1]});
            }
        }
        for (std::size_t f : visible) faces[f].alive = false;
        for (const auto& ed : horizon) {
            Vec3 nrm = (P(ed[1]) - P(ed[0])).cross(x - P(ed[0]));
            const double len = nrm.norm();
            nrm = len > 0.0 ? Vec3(nrm / len) : Vec3::Zero();
            faces.push_back(Face{ed[0], ed[1], p, nrm, nrm.dot(x)});
        }
        if (faces.size() > 8 * static_cast<std::size_t>(n) + 64) {
            std::vector<Face> kept;
            for (const auto& f : faces) {
                if (f.alive) kept.push_back(f);
            }
            faces.swap(kept);
        }
    }

    ConvexHull hull;
    for (const auto& f : faces) {
        if (!f.alive) continue;
        hull.faces.push_back({f.a, f.b, f.c});
        hull.normals.push_back(f.n);
        hull.offsets.push_back(f.d);
    }
    return hull;
}

}  // namespace svfd
