// First-order forward-mode element carrying a value and its three spatial
// tangents. Instantiated with S = double for plain evaluation and with
// S = Value to put spatial derivatives themselves on a tape (which is how the
// reference path differentiates normals and the Eikonal term with respect to
// model parameters).
#pragma once

#include "nslam/tape.hpp"

namespace nslam {

template <class S>
struct Jet3 {
    S v{}, dx{}, dy{}, dz{};

    Jet3() = default;
    Jet3(S value) : v(value), dx(0.0), dy(0.0), dz(0.0) {}
    Jet3(S value, S tx, S ty, S tz) : v(value), dx(tx), dy(ty), dz(tz) {}

    static Jet3 seeded(S value, int axis) {
        Jet3 j(value);
        if (axis == 0) j.dx = S(1.0);
        if (axis == 1) j.dy = S(1.0);
        if (axis == 2) j.dz = S(1.0);
        return j;
    }
};

template <class S>
Jet3<S> operator+(const Jet3<S>& a, const Jet3<S>& b) {
    return {a.v + b.v, a.dx + b.dx, a.dy + b.dy, a.dz + b.dz};
}
template <class S>
Jet3<S> operator-(const Jet3<S>& a, const Jet3<S>& b) {
    return {a.v - b.v, a.dx - b.dx, a.dy - b.dy, a.dz - b.dz};
}
template <class S>
Jet3<S> operator*(const Jet3<S>& a, const Jet3<S>& b) {
    return {a.v * b.v,
            a.dx * b.v + a.v * b.dx,
            a.dy * b.v + a.v * b.dy,
            a.dz * b.v + a.v * b.dz};
}
template <class S>
Jet3<S> operator*(const Jet3<S>& a, double c) {
    return {a.v * c, a.dx * c, a.dy * c, a.dz * c};
}
template <class S>
Jet3<S> operator*(double c, const Jet3<S>& a) { return a * c; }
template <class S>
Jet3<S> operator+(const Jet3<S>& a, double c) {
    return {a.v + c, a.dx, a.dy, a.dz};
}
template <class S>
Jet3<S>& operator+=(Jet3<S>& a, const Jet3<S>& b) { a = a + b; return a; }

template <class S>
Jet3<S> softplus_k(const Jet3<S>& a, double k) {
    S s = sigmoid_k(a.v, k);
    return {softplus_k(a.v, k), a.dx * s, a.dy * s, a.dz * s};
}

template <class S>
Jet3<S> relu(const Jet3<S>& a) {
    if (value_of(a.v) > 0) return a;
    return Jet3<S>(S(0.0));
}

// multiply an element by a plain scalar of the underlying type (avoids the
// overload clash between S and double when S is double)
inline double mul_ws(double a, double w) { return a * w; }
inline Value mul_ws(Value a, Value w) { return a * w; }
template <class S>
Jet3<S> mul_ws(const Jet3<S>& a, const S& w) {
    return {a.v * w, a.dx * w, a.dy * w, a.dz * w};
}

}  // namespace nslam
