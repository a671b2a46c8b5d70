#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <ostream>

namespace iflow {

// Fixed-dimension vector over double. D is 2 or 3 throughout this library.
template <int D>
struct Vec {
    std::array<double, D> v{};

    constexpr Vec() = default;
    constexpr Vec(double x, double y) requires(D == 2) : v{x, y} {}
    constexpr Vec(double x, double y, double z) requires(D == 3) : v{x, y, z} {}
    explicit constexpr Vec(const std::array<double, D>& a) : v(a) {}

    constexpr double& operator[](int i) { return v[static_cast<std::size_t>(i)]; }
    constexpr double operator[](int i) const { return v[static_cast<std::size_t>(i)]; }

    constexpr double x() const { return v[0]; }
    constexpr double y() const { return v[1]; }
    constexpr double z() const requires(D == 3) { return v[2]; }

    const double* data() const { return v.data(); }
    double* data() { return v.data(); }

    static constexpr Vec zero() { return Vec{}; }
    static constexpr Vec filled(double s) {
        Vec r;
        for (int i = 0; i < D; ++i) r[i] = s;
        return r;
    }

    Vec& operator+=(const Vec& o) {
        for (int i = 0; i < D; ++i) v[static_cast<std::size_t>(i)] += o[i];
        return *this;
    }
    Vec& operator-=(const Vec& o) {
        for (int i = 0; i < D; ++i) v[static_cast<std::size_t>(i)] -= o[i];
        return *this;
    }
    Vec& operator*=(double s) {
        for (int i = 0; i < D; ++i) v[static_cast<std::size_t>(i)] *= s;
        return *this;
    }
    Vec& operator/=(double s) { return *this *= (1.0 / s); }
};

using Vec2 = Vec<2>;
using Vec3 = Vec<3>;

template <int D>
inline Vec<D> operator+(Vec<D> a, const Vec<D>& b) { return a += b; }
template <int D>
inline Vec<D> operator-(Vec<D> a, const Vec<D>& b) { return a -= b; }
template <int D>
inline Vec<D> operator*(Vec<D> a, double s) { return a *= s; }
template <int D>
inline Vec<D> operator*(double s, Vec<D> a) { return a *= s; }
template <int D>
inline Vec<D> operator/(Vec<D> a, double s) { return a /= s; }
template <int D>
inline Vec<D> operator-(const Vec<D>& a) {
    Vec<D> r;
    for (int i = 0; i < D; ++i) r[i] = -a[i];
    return r;
}

template <int D>
inline double dot(const Vec<D>& a, const Vec<D>& b) {
    double s = 0;
    for (int i = 0; i < D; ++i) s += a[i] * b[i];
    return s;
}

template <int D>
inline double norm2(const Vec<D>& a) { return dot(a, a); }
template <int D>
inline double norm(const Vec<D>& a) { return std::sqrt(norm2(a)); }

template <int D>
inline Vec<D> normalized(const Vec<D>& a) {
    double n = norm(a);
    return n > 0 ? a / n : a;
}

inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

// 90-degree counter-clockwise rotation.
inline Vec2 perp(const Vec2& a) { return {-a[1], a[0]}; }

template <int D>
inline bool all_finite(const Vec<D>& a) {
    for (int i = 0; i < D; ++i)
        if (!std::isfinite(a[i])) return false;
    return true;
}

template <int D>
inline std::ostream& operator<<(std::ostream& os, const Vec<D>& a) {
    os << '(';
    for (int i = 0; i < D; ++i) os << (i ? ", " : "") << a[i];
    return os << ')';
}

}  // namespace iflow
