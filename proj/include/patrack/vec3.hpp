// Small 3D vector type used for world-space (mm) geometry.

#pragma once

#include <cmath>
#include <stdexcept>

namespace patrack {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr Vec3() = default;
    constexpr Vec3(double px, double py, double pz) : x(px), y(py), z(pz) {}

    constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    constexpr Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    constexpr bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }
};

inline constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

inline constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline constexpr double norm2(const Vec3& v) { return dot(v, v); }

inline Vec3 normalized(const Vec3& v) {
    const double n = norm(v);
    if (n < 1e-12) throw std::invalid_argument("cannot normalize near-zero vector");
    return v / n;
}

inline double distance(const Vec3& a, const Vec3& b) { return norm(a - b); }

inline bool finite(const Vec3& v) {
    return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

inline double axis_of(const Vec3& v, int a) { return a == 0 ? v.x : a == 1 ? v.y : v.z; }

/// World-space point in millimetres.
using WorldPoint = Vec3;

/// Deterministic orthonormal pair {u, v} completing `n` (assumed unit) to a
/// right-handed frame. The helper axis is the one most orthogonal to `n`.
inline void orthonormal_basis(const Vec3& n, Vec3& u, Vec3& v) {
    const double ax = std::fabs(n.x), ay = std::fabs(n.y), az = std::fabs(n.z);
    Vec3 helper{1.0, 0.0, 0.0};
    if (ay <= ax && ay <= az) helper = {0.0, 1.0, 0.0};
    else if (az <= ax && az <= ay) helper = {0.0, 0.0, 1.0};
    u = normalized(cross(n, helper));
    v = cross(n, u);
}

/// Distance from point `p` to the segment [a, a + d * len] with unit direction d.
inline double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& d, double len) {
    const Vec3 q = p - a;
    double t = dot(q, d);
    if (t < 0.0) t = 0.0;
    if (t > len) t = len;
    return norm(q - d * t);
}

}  // namespace patrack
