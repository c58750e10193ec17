// Natural cubic spline through 3D points with arc-length reparameterization,
// used to frame cutting planes along airway centerlines.

#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "patrack/vec3.hpp"

namespace patrack {

/// Natural cubic spline interpolating 3D points, parameterized by cumulative
/// chord length between knots.
class CubicSpline3 {
public:
    explicit CubicSpline3(const std::vector<Vec3>& points) : points_(points) {
        const std::size_t n = points.size();
        if (n < 2) throw std::invalid_argument("spline needs at least 2 points");
        knots_.resize(n);
        knots_[0] = 0.0;
        for (std::size_t i = 1; i < n; ++i) {
            const double h = distance(points[i], points[i - 1]);
            if (h < 1e-9) throw std::invalid_argument("spline: coincident consecutive points");
            knots_[i] = knots_[i - 1] + h;
        }
        m_.assign(n, Vec3{});
        if (n > 2) solve_second_derivatives();
    }

    double knot(std::size_t i) const { return knots_[i]; }
    double parameter_length() const { return knots_.back(); }
    std::size_t size() const { return points_.size(); }

    Vec3 eval(double t) const {
        const std::size_t i = segment_of(t);
        const double h = knots_[i + 1] - knots_[i];
        const double a = (knots_[i + 1] - t) / h;
        const double b = (t - knots_[i]) / h;
        // classic second-derivative form of the interpolating cubic
        return points_[i] * a + points_[i + 1] * b +
               (m_[i] * (a * a * a - a) + m_[i + 1] * (b * b * b - b)) * (h * h / 6.0);
    }

    Vec3 derivative(double t) const {
        const std::size_t i = segment_of(t);
        const double h = knots_[i + 1] - knots_[i];
        const double a = (knots_[i + 1] - t) / h;
        const double b = (t - knots_[i]) / h;
        return (points_[i + 1] - points_[i]) / h +
               (m_[i] * (1.0 - 3.0 * a * a) + m_[i + 1] * (3.0 * b * b - 1.0)) * (h / 6.0);
    }

private:
    std::size_t segment_of(double t) const {
        if (t <= knots_.front()) return 0;
        if (t >= knots_.back()) return knots_.size() - 2;
        const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
        return static_cast<std::size_t>(it - knots_.begin()) - 1;
    }

    void solve_second_derivatives() {
        // tridiagonal system for interior second derivatives, natural ends
        const std::size_t n = points_.size();
        std::vector<double> diag(n - 2), upper(n - 2);
        std::vector<Vec3> rhs(n - 2);
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double h0 = knots_[i] - knots_[i - 1];
            const double h1 = knots_[i + 1] - knots_[i];
            diag[i - 1] = (h0 + h1) / 3.0;
            upper[i - 1] = h1 / 6.0;
            rhs[i - 1] = (points_[i + 1] - points_[i]) / h1 - (points_[i] - points_[i - 1]) / h0;
        }
        for (std::size_t i = 1; i < n - 2; ++i) {
            const double lower = upper[i - 1];  // symmetric system
            const double w = lower / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= rhs[i - 1] * w;
        }
        for (std::size_t i = n - 2; i-- > 0;) {
            Vec3 v = rhs[i];
            if (i + 1 < n - 2) v -= m_[i + 2] * upper[i];
            m_[i + 1] = v / diag[i];
        }
    }

    std::vector<Vec3> points_;
    std::vector<double> knots_;
    std::vector<Vec3> m_;  // second derivatives at knots
};

/// Arc-length view of a CubicSpline3. A dense chord table maps arc length to
/// the chord-length parameter; table rows land exactly on the knots so the
/// original points are reproduced at their arc stations.
class ArcLengthSpline {
public:
    explicit ArcLengthSpline(const std::vector<Vec3>& points, double table_step = 0.25)
        : spline_(points), table_step_(table_step) {
        arc_.push_back(0.0);
        param_.push_back(0.0);
        knot_arc_.push_back(0.0);
        for (std::size_t i = 0; i + 1 < spline_.size(); ++i) {
            const double t0 = spline_.knot(i), t1 = spline_.knot(i + 1);
            const int steps = std::max(4, static_cast<int>(std::ceil((t1 - t0) / table_step)));
            Vec3 prev = spline_.eval(t0);
            for (int k = 1; k <= steps; ++k) {
                const double t = t0 + (t1 - t0) * (static_cast<double>(k) / steps);
                const Vec3 p = spline_.eval(t);
                arc_.push_back(arc_.back() + distance(p, prev));
                param_.push_back(t);
                prev = p;
            }
            knot_arc_.push_back(arc_.back());
        }
    }

    double length() const { return arc_.back(); }
    double knot_arc(std::size_t i) const { return knot_arc_[i]; }
    std::size_t knot_count() const { return knot_arc_.size(); }

    Vec3 point_at(double s) const { return spline_.eval(param_at(s)); }
    Vec3 tangent_at(double s) const { return normalized(spline_.derivative(param_at(s))); }

private:
    double param_at(double s) const {
        if (s <= 0.0) return param_.front();
        if (s >= arc_.back()) return param_.back();
        const auto it = std::upper_bound(arc_.begin(), arc_.end(), s);
        const std::size_t i = static_cast<std::size_t>(it - arc_.begin());
        const double f = (s - arc_[i - 1]) / (arc_[i] - arc_[i - 1]);
        return param_[i - 1] + f * (param_[i] - param_[i - 1]);
    }

    CubicSpline3 spline_;
    double table_step_;
    std::vector<double> arc_;
    std::vector<double> param_;
    std::vector<double> knot_arc_;
};

}  // namespace patrack
