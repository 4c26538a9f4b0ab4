#include "svfd/spline.hpp"

#include <algorithm>
#include <cmath>

#include "svfd/error.hpp"

namespace svfd {

namespace {
constexpr int kTableSamplesPerSegment = 64;
}

CenterlineSpline::CenterlineSpline(const std::vector<Vec3>& knots) : knots_(knots) {
    const int n = static_cast<int>(knots.size());
    if (n < 2) throw_validation("centerline needs at least 2 knots");
    u_.assign(n, 0.0);
    for (int i = 1; i < n; ++i) {
        const double chord = (knots[i] - knots[i - 1]).norm();
        if (chord <= 0.0) throw_validation("centerline has repeated knots");
        u_[i] = u_[i - 1] + chord;
    }

    // Natural spline: tridiagonal system for the knot second derivatives.
    second_.assign(n, Vec3::Zero());
    if (n > 2) {
        std::vector<double> diag(n, 1.0), upper(n, 0.0), lower(n, 0.0);
        std::vector<Vec3> rhs(n, Vec3::Zero());
        for (int i = 1; i < n - 1; ++i) {
            const double h0 = u_[i] - u_[i - 1];
            const double h1 = u_[i + 1] - u_[i];
            lower[i] = h0 / 6.0;
            diag[i] = (h0 + h1) / 3.0;
            upper[i] = h1 / 6.0;
            rhs[i] = (knots[i + 1] - knots[i]) / h1 - (knots[i] - knots[i - 1]) / h0;
        }
        // Thomas algorithm.
        for (int i = 1; i < n; ++i) {
            const double m = lower[i] / diag[i - 1];
            diag[i] -= m * upper[i - 1];
            rhs[i] -= m * rhs[i - 1];
        }
        second_[n - 1] = rhs[n - 1] / diag[n - 1];
        for (int i = n - 2; i >= 0; --i) {
            second_[i] = (rhs[i] - upper[i] * second_[i + 1]) / diag[i];
        }
    }

    const int table_n = (n - 1) * kTableSamplesPerSegment + 1;
    table_u_.resize(table_n);
    arc_.resize(table_n);
    arc_[0] = 0.0;
    table_u_[0] = 0.0;
    Vec3 prev = eval(0.0);
    for (int i = 1; i < table_n; ++i) {
        table_u_[i] = u_.back() * static_cast<double>(i) / (table_n - 1);
        const Vec3 p = eval(table_u_[i]);
        arc_[i] = arc_[i - 1] + (p - prev).norm();
        prev = p;
    }
}

int CenterlineSpline::segment(double u) const {
    const auto it = std::upper_bound(u_.begin(), u_.end(), u);
    int i = static_cast<int>(it - u_.begin()) - 1;
    return std::clamp(i, 0, static_cast<int>(u_.size()) - 2);
}

Vec3 CenterlineSpline::eval(double u) const {
    const int i = segment(u);
    const double h = u_[i + 1] - u_[i];
    const double a = (u_[i + 1] - u) / h;
    const double b = (u - u_[i]) / h;
    return a * knots_[i] + b * knots_[i + 1] +
           ((a * a * a - a) * second_[i] + (b * b * b - b) * second_[i + 1]) * (h * h / 6.0);
}

Vec3 CenterlineSpline::derivative(double u) const {
    const int i = segment(u);
    const double h = u_[i + 1] - u_[i];
    const double a = (u_[i + 1] - u) / h;
    const double b = (u - u_[i]) / h;
    return (knots_[i + 1] - knots_[i]) / h +
           ((1.0 - 3.0 * a * a) * second_[i] + (3.0 * b * b - 1.0) * second_[i + 1]) * (h / 6.0);
}

Vec3 CenterlineSpline::position(double t) const { return eval(std::clamp(t, 0.0, 1.0) * u_.back()); }

Vec3 CenterlineSpline::tangent(double t) const {
    const Vec3 d = derivative(std::clamp(t, 0.0, 1.0) * u_.back());
    const double len = d.norm();
    if (len == 0.0) throw_numeric("centerline has a stationary point");
    return d / len;
}

double CenterlineSpline::param_at_arclength(double fraction) const {
    const double target = std::clamp(fraction, 0.0, 1.0) * arc_.back();
    const auto it = std::lower_bound(arc_.begin(), arc_.end(), target);
    if (it == arc_.begin()) return 0.0;
    if (it == arc_.end()) return 1.0;
    const std::size_t i = static_cast<std::size_t>(it - arc_.begin());
    const double span = arc_[i] - arc_[i - 1];
    const double w = span > 0.0 ? (target - arc_[i - 1]) / span : 0.0;
    return (table_u_[i - 1] + w * (table_u_[i] - table_u_[i - 1])) / u_.back();
}

CenterlineSpline::Samples CenterlineSpline::sample_uniform(int n) const {
    if (n < 2) throw_validation("need at least 2 centerline samples");
    Samples s;
    s.points.reserve(n);
    s.tangents.reserve(n);
    s.params.reserve(n);
    for (int j = 0; j < n; ++j) {
        const double t = param_at_arclength(static_cast<double>(j) / (n - 1));
        s.params.push_back(t);
        s.points.push_back(position(t));
        s.tangents.push_back(tangent(t));
    }
    return s;
}

std::vector<Frame> bishop_frames(const std::vector<Vec3>& points,
                                 const std::vector<Vec3>& tangents, const Vec3& reference) {
    const std::size_t n = points.size();
    if (n < 2) throw_validation("bishop frames need at least 2 samples");
    if (tangents.size() != n) throw_validation("tangent count must match sample count");

    std::vector<Frame> frames(n);
    Vec3 t0 = tangents[0].normalized();
    Vec3 r0 = reference - reference.dot(t0) * t0;
    const double rn = r0.norm();
    if (rn < 1e-9 * std::max(1.0, reference.norm())) {
        throw_validation("reference vector is parallel to the initial tangent");
    }
    r0 /= rn;
    frames[0] = {t0, r0, t0.cross(r0)};

    for (std::size_t i = 0; i + 1 < n; ++i) {
        const Vec3 v1 = points[i + 1] - points[i];
        const double c1 = v1.squaredNorm();
        if (c1 == 0.0) throw_validation("zero-length centerline segment");
        const Vec3& ri = frames[i].normal;
        const Vec3& ti = frames[i].tangent;
        const Vec3 r_l = ri - (2.0 / c1) * v1.dot(ri) * v1;
        const Vec3 t_l = ti - (2.0 / c1) * v1.dot(ti) * v1;
        const Vec3 t_next = tangents[i + 1].normalized();
        const Vec3 v2 = t_next - t_l;
        const double c2 = v2.squaredNorm();
        Vec3 r_next = c2 > 1e-300 ? Vec3(r_l - (2.0 / c2) * v2.dot(r_l) * v2) : r_l;
        // Re-orthonormalize against round-off drift.
        r_next = (r_next - r_next.dot(t_next) * t_next).normalized();
        frames[i + 1] = {t_next, r_next, t_next.cross(r_next)};
    }
    return frames;
}

std::vector<Frame> bishop_frames(const std::vector<Vec3>& points, const Vec3& reference) {
    const std::size_t n = points.size();
    if (n < 2) throw_validation("bishop frames need at least 2 samples");
    std::vector<Vec3> tangents(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 d = i == 0       ? Vec3(points[1] - points[0])
                       : i == n - 1 ? Vec3(points[n - 1] - points[n - 2])
                                    : Vec3(points[i + 1] - points[i - 1]);
        if (d.norm() == 0.0) throw_validation("zero-length centerline segment");
        tangents[i] = d.normalized();
    }
    return bishop_frames(points, tangents, reference);
}

Vec3 endpoint_reference(const std::vector<Vec3>& centerline, const Vec3& initial_tangent) {
    if (centerline.size() < 2) throw_validation("centerline needs at least 2 points");
    const Vec3 t = initial_tangent.normalized();
    const Vec3 chord = centerline.back() - centerline.front();
    return chord - chord.dot(t) * t;
}

double radius_at(const std::vector<double>& radii, double t) {
    if (radii.empty()) throw_validation("empty radius samples");
    if (radii.size() == 1) return radii.front();
    const double x = std::clamp(t, 0.0, 1.0) * static_cast<double>(radii.size() - 1);
    const std::size_t i = std::min(static_cast<std::size_t>(x), radii.size() - 2);
    const double w = x - static_cast<double>(i);
    return (1.0 - w) * radii[i] + w * radii[i + 1];
}

}  // namespace svfd
