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

#include "svtpol/linalg3.hpp"

#include <algorithm>
#include <numbers>

#include "svtpol/error.hpp"

namespace svtpol {

namespace {

constexpr int max_sweeps = 50;
constexpr double off_tolerance = 1e-14;
constexpr double tie_tolerance = 1e-10;

double off_diagonal_norm(const Mat3& a)
{
    return std::sqrt(2.0 * (a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2)));
}

// One Jacobi rotation zeroing a(p, q); accumulates into v.
void rotate(Mat3& a, Mat3& v, std::size_t p, std::size_t q)
{
    const double apq = a(p, q);
    if (apq == 0.0)
        return;
    const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
    double t;
    if (std::fabs(theta) > 1e150)
        t = 0.5 / theta;
    else
        t = std::copysign(1.0, theta) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
    const double c = 1.0 / std::sqrt(t * t + 1.0);
    const double s = t * c;

    a(p, p) -= t * apq;
    a(q, q) += t * apq;
    a(p, q) = a(q, p) = 0.0;
    for (std::size_t r = 0; r < 3; ++r) {
        if (r == p || r == q)
            continue;
        const double arp = a(r, p);
        const double arq = a(r, q);
        a(r, p) = a(p, r) = c * arp - s * arq;
        a(r, q) = a(q, r) = s * arp + c * arq;
    }
    for (std::size_t r = 0; r < 3; ++r) {
        const double vrp = v(r, p);
        const double vrq = v(r, q);
        v(r, p) = c * vrp - s * vrq;
        v(r, q) = s * vrp + c * vrq;
    }
}

} // namespace

bool all_finite(const Mat3& m)
{
    return std::all_of(m.e.begin(), m.e.end(), [](double v) { return std::isfinite(v); });
}

bool all_finite(Vec3 v) { return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z); }

Vec3 canonical_sign(Vec3 v)
{
    std::size_t k = 0;
    for (std::size_t i = 1; i < 3; ++i)
        if (std::fabs(v[i]) > std::fabs(v[k]))
            k = i;
    return v[k] < 0.0 ? -v : v;
}

SymEig3 sym_eig3(const Mat3& m)
{
    if (!all_finite(m))
        throw NumericError("non-finite matrix");

    Mat3 a = 0.5 * (m + m.transposed());
    Mat3 v = Mat3::identity();
    const double scale = frobenius_norm(a);

    SymEig3 out;
    for (; out.sweeps < max_sweeps; ++out.sweeps) {
        if (off_diagonal_norm(a) <= off_tolerance * scale)
            break;
        rotate(a, v, 0, 1);
        rotate(a, v, 0, 2);
        rotate(a, v, 1, 2);
    }

    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });
    for (std::size_t k = 0; k < 3; ++k) {
        out.values[k] = a(order[k], order[k]);
        out.vectors.set_col(k, canonical_sign(v.col(order[k])));
    }

    const double tie = tie_tolerance * std::max(1.0, scale);
    out.degenerate = (out.values[1] - out.values[0] <= tie) || (out.values[2] - out.values[1] <= tie);
    return out;
}

Mat3 orthonormalize(const Mat3& m)
{
    if (!all_finite(m) || std::fabs(m.det()) <= 1e-12)
        throw NumericError("degenerate basis");

    Vec3 c0 = m.col(0);
    c0 = c0 / norm(c0);
    Vec3 c1 = m.col(1);
    c1 -= dot(c1, c0) * c0;
    c1 = c1 / norm(c1);
    // second pass restores orthogonality lost to cancellation
    c1 -= dot(c1, c0) * c0;
    c1 = c1 / norm(c1);
    const Vec3 c2 = cross(c0, c1);
    return Mat3::from_columns(c0, c1, c2);
}

Mat3 quaternion_to_rotation(double w, double x, double y, double z)
{
    return Mat3{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
                 2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
                 2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}};
}

Mat3 random_rotation(Rng& rng)
{
    const double u1 = rng.uniform();
    const double u2 = rng.uniform();
    const double u3 = rng.uniform();
    const double a = std::sqrt(1.0 - u1);
    const double b = std::sqrt(u1);
    const double t2 = 2.0 * std::numbers::pi * u2;
    const double t3 = 2.0 * std::numbers::pi * u3;
    return quaternion_to_rotation(b * std::cos(t3), a * std::sin(t2), a * std::cos(t2), b * std::sin(t3));
}

} // namespace svtpol
