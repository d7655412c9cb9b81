#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace repsample {

// Forward-mode dual number carrying N directional derivatives.
template <std::size_t N> struct Dual {
    double v = 0.0;
    std::array<double, N> d{};

    constexpr Dual() = default;
    constexpr Dual(double value) : v(value) {} // NOLINT: implicit promotion of constants

    static Dual variable(double value, std::size_t index) {
        Dual r(value);
        r.d[index] = 1.0;
        return r;
    }

    Dual &operator+=(const Dual &o) {
        v += o.v;
        for (std::size_t i = 0; i < N; ++i) d[i] += o.d[i];
        return *this;
    }
    Dual &operator-=(const Dual &o) {
        v -= o.v;
        for (std::size_t i = 0; i < N; ++i) d[i] -= o.d[i];
        return *this;
    }
    Dual &operator*=(const Dual &o) {
        for (std::size_t i = 0; i < N; ++i) d[i] = d[i] * o.v + v * o.d[i];
        v *= o.v;
        return *this;
    }
    Dual &operator/=(const Dual &o) {
        const double inv = 1.0 / o.v;
        for (std::size_t i = 0; i < N; ++i) d[i] = (d[i] - v * inv * o.d[i]) * inv;
        v *= inv;
        return *this;
    }
};

template <std::size_t N> Dual<N> operator+(Dual<N> a, const Dual<N> &b) { return a += b; }
template <std::size_t N> Dual<N> operator-(Dual<N> a, const Dual<N> &b) { return a -= b; }
template <std::size_t N> Dual<N> operator*(Dual<N> a, const Dual<N> &b) { return a *= b; }
template <std::size_t N> Dual<N> operator/(Dual<N> a, const Dual<N> &b) { return a /= b; }
template <std::size_t N> Dual<N> operator+(Dual<N> a, double b) { a.v += b; return a; }
template <std::size_t N> Dual<N> operator+(double b, Dual<N> a) { a.v += b; return a; }
template <std::size_t N> Dual<N> operator-(Dual<N> a, double b) { a.v -= b; return a; }
template <std::size_t N> Dual<N> operator-(double b, const Dual<N> &a) { return Dual<N>(b) - a; }
template <std::size_t N> Dual<N> operator-(Dual<N> a) {
    a.v = -a.v;
    for (auto &x : a.d) x = -x;
    return a;
}
template <std::size_t N> Dual<N> operator*(Dual<N> a, double b) {
    a.v *= b;
    for (auto &x : a.d) x *= b;
    return a;
}
template <std::size_t N> Dual<N> operator*(double b, Dual<N> a) { return a * b; }
template <std::size_t N> Dual<N> operator/(Dual<N> a, double b) { return a * (1.0 / b); }
template <std::size_t N> Dual<N> operator/(double b, const Dual<N> &a) { return Dual<N>(b) / a; }

// Applies a scalar function with known value and derivative.
template <std::size_t N> Dual<N> chain(const Dual<N> &a, double value, double deriv) {
    Dual<N> r(value);
    for (std::size_t i = 0; i < N; ++i) r.d[i] = deriv * a.d[i];
    return r;
}

template <std::size_t N> Dual<N> sqrt(const Dual<N> &a) {
    const double s = std::sqrt(a.v);
    return chain(a, s, 0.5 / s);
}
template <std::size_t N> Dual<N> exp(const Dual<N> &a) {
    const double e = std::exp(a.v);
    return chain(a, e, e);
}
template <std::size_t N> Dual<N> log(const Dual<N> &a) { return chain(a, std::log(a.v), 1.0 / a.v); }

// Scalar overloads so templated code compiles for plain doubles too.
inline double value_of(double x) { return x; }
template <std::size_t N> double value_of(const Dual<N> &x) { return x.v; }

} // namespace repsample
