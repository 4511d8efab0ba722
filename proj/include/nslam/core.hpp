// Small fixed-size linear algebra and common error base.
#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace nslam {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct Vec3 {
    double x = 0, y = 0, z = 0;

    double& operator[](int i) { return (&x)[i]; }
    double operator[](int i) const { return (&x)[i]; }

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }
inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalized(const Vec3& v) { return v / norm(v); }

// Row-major 3x3.
struct Mat3 {
    std::array<double, 9> m{};

    static Mat3 identity() {
        Mat3 r;
        r.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
        return r;
    }
    double& operator()(int r, int c) { return m[3 * r + c]; }
    double operator()(int r, int c) const { return m[3 * r + c]; }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0;
                for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }
    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        return r;
    }
};

// Unit quaternion, (x, y, z, w) storage to match the trajectory text format.
struct Quat {
    double x = 0, y = 0, z = 0, w = 1;

    static Quat identity() { return {}; }

    Quat operator*(const Quat& o) const {
        return {w * o.x + x * o.w + y * o.z - z * o.y,
                w * o.y - x * o.z + y * o.w + z * o.x,
                w * o.z + x * o.y - y * o.x + z * o.w,
                w * o.w - x * o.x - y * o.y - z * o.z};
    }
    Quat conjugate() const { return {-x, -y, -z, w}; }
    void normalize() {
        double n = std::sqrt(x * x + y * y + z * z + w * w);
        x /= n; y /= n; z /= n; w /= n;
    }
    Mat3 to_matrix() const {
        Mat3 r;
        double xx = x * x, yy = y * y, zz = z * z;
        double xy = x * y, xz = x * z, yz = y * z;
        double wx = w * x, wy = w * y, wz = w * z;
        r.m = {1 - 2 * (yy + zz), 2 * (xy - wz),     2 * (xz + wy),
               2 * (xy + wz),     1 - 2 * (xx + zz), 2 * (yz - wx),
               2 * (xz - wy),     2 * (yz + wx),     1 - 2 * (xx + yy)};
        return r;
    }
    // Rotation matrix -> quaternion (Shepperd's method).
    static Quat from_matrix(const Mat3& m) {
        Quat q;
        double tr = m(0, 0) + m(1, 1) + m(2, 2);
        if (tr > 0) {
            double s = std::sqrt(tr + 1.0) * 2;
            q.w = 0.25 * s;
            q.x = (m(2, 1) - m(1, 2)) / s;
            q.y = (m(0, 2) - m(2, 0)) / s;
            q.z = (m(1, 0) - m(0, 1)) / s;
        } else if (m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2)) {
            double s = std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2)) * 2;
            q.w = (m(2, 1) - m(1, 2)) / s;
            q.x = 0.25 * s;
            q.y = (m(0, 1) + m(1, 0)) / s;
            q.z = (m(0, 2) + m(2, 0)) / s;
        } else if (m(1, 1) > m(2, 2)) {
            double s = std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2)) * 2;
            q.w = (m(0, 2) - m(2, 0)) / s;
            q.x = (m(0, 1) + m(1, 0)) / s;
            q.y = 0.25 * s;
            q.z = (m(1, 2) + m(2, 1)) / s;
        } else {
            double s = std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1)) * 2;
            q.w = (m(1, 0) - m(0, 1)) / s;
            q.x = (m(0, 2) + m(2, 0)) / s;
            q.y = (m(1, 2) + m(2, 1)) / s;
            q.z = 0.25 * s;
        }
        q.normalize();
        return q;
    }
    // exp of an axis-angle vector.
    static Quat from_axis_angle(const Vec3& aa) {
        double theta = norm(aa);
        if (theta < 1e-12) {
            Quat q{aa.x * 0.5, aa.y * 0.5, aa.z * 0.5, 1.0};
            q.normalize();
            return q;
        }
        double h = 0.5 * theta, s = std::sin(h) / theta;
        Quat q{aa.x * s, aa.y * s, aa.z * s, std::cos(h)};
        q.normalize();
        return q;
    }
};

// Rigid camera-to-world transform.
struct Pose {
    Quat rotation;
    Vec3 translation;

    static Pose identity() { return {}; }

    Vec3 apply(const Vec3& p) const { return rotation.to_matrix() * p + translation; }
    Vec3 rotate(const Vec3& v) const { return rotation.to_matrix() * v; }
    Pose inverse() const {
        Quat qi = rotation.conjugate();
        return {qi, -(qi.to_matrix() * translation)};
    }
    Pose compose(const Pose& o) const {  // this ∘ o
        Quat q = rotation * o.rotation;
        q.normalize();
        return {q, rotation.to_matrix() * o.translation + translation};
    }
};

// Angular distance between two rotations, radians.
inline double rotation_angle_between(const Quat& a, const Quat& b) {
    Quat d = a.conjugate() * b;
    double c = std::min(1.0, std::abs(d.w));
    return 2.0 * std::acos(c);
}

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace nslam
