// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <array>
#include <cmath>
#include <cstddef>

#include "svtpol/random.hpp"

namespace svtpol {

struct Vec3
{
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr double operator[](std::size_t i) const { return i == 0 ? x : (i == 1 ? y : z); }
    constexpr double& operator[](std::size_t i) { return i == 0 ? x : (i == 1 ? y : z); }

    friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend constexpr Vec3 operator-(Vec3 a) { return {-a.x, -a.y, -a.z}; }
    friend constexpr Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
    friend constexpr Vec3 operator*(Vec3 a, double s) { return s * a; }
    friend constexpr Vec3 operator/(Vec3 a, double s) { return {a.x / s, a.y / s, a.z / s}; }
    constexpr Vec3& operator+=(Vec3 b) { return *this = *this + b; }
    constexpr Vec3& operator-=(Vec3 b) { return *this = *this - b; }
    friend constexpr bool operator==(Vec3, Vec3) = default;
};

constexpr double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }
constexpr Vec3 cross(Vec3 a, Vec3 b)
{
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

/// 3x3 matrix, row-major storage: (r, c) lives at e[3 * r + c].
struct Mat3
{
    std::array<double, 9> e{};

    static constexpr Mat3 identity() { return Mat3{{1, 0, 0, 0, 1, 0, 0, 0, 1}}; }
    static constexpr Mat3 zero() { return Mat3{}; }
    static constexpr Mat3 diag(double a, double b, double c) { return Mat3{{a, 0, 0, 0, b, 0, 0, 0, c}}; }
    static constexpr Mat3 from_columns(Vec3 c0, Vec3 c1, Vec3 c2)
    {
        return Mat3{{c0.x, c1.x, c2.x, c0.y, c1.y, c2.y, c0.z, c1.z, c2.z}};
    }
    static constexpr Mat3 outer(Vec3 a, Vec3 b)
    {
        return Mat3{{a.x * b.x, a.x * b.y, a.x * b.z, a.y * b.x, a.y * b.y, a.y * b.z, a.z * b.x, a.z * b.y,
                     a.z * b.z}};
    }

    constexpr double operator()(std::size_t r, std::size_t c) const { return e[3 * r + c]; }
    constexpr double& operator()(std::size_t r, std::size_t c) { return e[3 * r + c]; }

    constexpr Vec3 col(std::size_t c) const { return {e[c], e[3 + c], e[6 + c]}; }
    constexpr Vec3 row(std::size_t r) const { return {e[3 * r], e[3 * r + 1], e[3 * r + 2]}; }
    constexpr void set_col(std::size_t c, Vec3 v)
    {
        e[c] = v.x;
        e[3 + c] = v.y;
        e[6 + c] = v.z;
    }

    constexpr Mat3 transposed() const
    {
        return Mat3{{e[0], e[3], e[6], e[1], e[4], e[7], e[2], e[5], e[8]}};
    }
    constexpr double trace() const { return e[0] + e[4] + e[8]; }
    constexpr double det() const
    {
        return e[0] * (e[4] * e[8] - e[5] * e[7]) - e[1] * (e[3] * e[8] - e[5] * e[6]) +
               e[2] * (e[3] * e[7] - e[4] * e[6]);
    }

    friend constexpr Mat3 operator+(const Mat3& a, const Mat3& b)
    {
        Mat3 r;
        for (std::size_t k = 0; k < 9; ++k)
            r.e[k] = a.e[k] + b.e[k];
        return r;
    }
    friend constexpr Mat3 operator-(const Mat3& a, const Mat3& b)
    {
        Mat3 r;
        for (std::size_t k = 0; k < 9; ++k)
            r.e[k] = a.e[k] - b.e[k];
        return r;
    }
    friend constexpr Mat3 operator*(double s, const Mat3& a)
    {
        Mat3 r;
        for (std::size_t k = 0; k < 9; ++k)
            r.e[k] = s * a.e[k];
        return r;
    }
    friend constexpr Mat3 operator*(const Mat3& a, const Mat3& b)
    {
        Mat3 r;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j)
                r.e[3 * i + j] = a.e[3 * i] * b.e[j] + a.e[3 * i + 1] * b.e[3 + j] + a.e[3 * i + 2] * b.e[6 + j];
        return r;
    }
    friend constexpr Vec3 operator*(const Mat3& a, Vec3 v)
    {
        return {a.e[0] * v.x + a.e[1] * v.y + a.e[2] * v.z, a.e[3] * v.x + a.e[4] * v.y + a.e[5] * v.z,
                a.e[6] * v.x + a.e[7] * v.y + a.e[8] * v.z};
    }
    constexpr Mat3& operator+=(const Mat3& b) { return *this = *this + b; }
    friend constexpr bool operator==(const Mat3&, const Mat3&) = default;
};

inline double frobenius_norm(const Mat3& m)
{
    double s = 0.0;
    for (double v : m.e)
        s += v * v;
    return std::sqrt(s);
}

inline double max_abs(const Mat3& m)
{
    double s = 0.0;
    for (double v : m.e)
        s = std::fmax(s, std::fabs(v));
    return s;
}

/// R m R^T.
constexpr Mat3 conjugate(const Mat3& r, const Mat3& m) { return r * m * r.transposed(); }

bool all_finite(const Mat3& m);
bool all_finite(Vec3 v);

/// Symmetric eigendecomposition. Eigenvalues ascending, eigenvector k is
/// column k of `vectors`, each column sign-canonicalized so that its
/// largest-magnitude component (first index on ties) is non-negative.
struct SymEig3
{
    std::array<double, 3> values{};
    Mat3 vectors = Mat3::identity();
    /// Some pair of eigenvalues is closer than 1e-10 * max(1, |m|_F).
    bool degenerate = false;
    int sweeps = 0;
};

/// Cyclic Jacobi on a symmetric 3x3 matrix. Throws NumericError on
/// non-finite input.
SymEig3 sym_eig3(const Mat3& m);

/// Flip v so that its largest-magnitude component is non-negative.
Vec3 canonical_sign(Vec3 v);

/// Gram-Schmidt on columns 0 and 1, column 2 = c0 x c1; result is in
/// SO(3). Throws NumericError("degenerate basis") when |det m| <= 1e-12.
Mat3 orthonormalize(const Mat3& m);

/// Haar-uniform rotation drawn from the stream (Shoemake's unit-quaternion
/// construction).
Mat3 random_rotation(Rng& rng);

/// Rotation matrix of a unit quaternion (w, x, y, z).
Mat3 quaternion_to_rotation(double w, double x, double y, double z);

} // namespace svtpol
