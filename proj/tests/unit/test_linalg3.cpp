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

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracle/reference.hpp"
#include "svtpol/error.hpp"
#include "svtpol/linalg3.hpp"

using namespace svtpol;

TEST_CASE("sym_eig3 on the identity")
{
    const SymEig3 e = sym_eig3(Mat3::identity());
    CHECK(e.values == std::array<double, 3>{1, 1, 1});
    CHECK(e.vectors == Mat3::identity());
    CHECK(e.degenerate);
}

TEST_CASE("sym_eig3 on a diagonal matrix permutes the axes")
{
    const SymEig3 e = sym_eig3(Mat3::diag(3, 1, 2));
    CHECK(e.values == std::array<double, 3>{1, 2, 3});
    CHECK(e.vectors.col(0) == Vec3{0, 1, 0});
    CHECK(e.vectors.col(1) == Vec3{0, 0, 1});
    CHECK(e.vectors.col(2) == Vec3{1, 0, 0});
    CHECK_FALSE(e.degenerate);
}

TEST_CASE("sym_eig3 reconstructs random symmetric matrices")
{
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        Mat3 m = (trial % 2 ? 10.0 : 1.0) * fixtures::random_symmetric(rng);
        const SymEig3 e = sym_eig3(m);
        const Mat3 recon = e.vectors * Mat3::diag(e.values[0], e.values[1], e.values[2]) * e.vectors.transposed();
        CHECK(frobenius_norm(recon - m) <= 1e-10 * (1 + frobenius_norm(m)));
        CHECK(e.values[0] <= e.values[1]);
        CHECK(e.values[1] <= e.values[2]);
        CHECK(fixtures::orthonormality_error(e.vectors) <= 1e-12);
        for (std::size_t k = 0; k < 3; ++k) {
            const Vec3 mv = m * e.vectors.col(k);
            CHECK(norm(mv - e.values[k] * e.vectors.col(k)) <= 1e-10 * frobenius_norm(m));
            // canonical sign
            const Vec3 c = e.vectors.col(k);
            std::size_t big = 0;
            for (std::size_t a = 1; a < 3; ++a)
                if (std::fabs(c[a]) > std::fabs(c[big]))
                    big = a;
            CHECK(c[big] >= 0.0);
        }
        // independent eigenvalues from the characteristic cubic
        const auto roots = oracle::cubic_eigenvalues(oracle::to_m3(m));
        for (std::size_t k = 0; k < 3; ++k)
            CHECK(std::fabs(roots[k] - e.values[k]) <= 1e-9 * (1 + frobenius_norm(m)));
    }
}

TEST_CASE("sym_eig3 is deterministic and flags near ties")
{
    Rng rng(3);
    const Mat3 m = fixtures::random_symmetric(rng);
    const SymEig3 a = sym_eig3(m), b = sym_eig3(m);
    CHECK(a.values == b.values);
    CHECK(a.vectors == b.vectors);

    const Mat3 r = random_rotation(rng);
    const SymEig3 tie = sym_eig3(conjugate(r, Mat3::diag(1, 1, 2)));
    CHECK(tie.degenerate);
    CHECK(std::fabs(tie.values[0] - 1) < 1e-12);
    CHECK(std::fabs(tie.values[2] - 2) < 1e-12);
}

TEST_CASE("sym_eig3 rejects non-finite input")
{
    Mat3 m = Mat3::identity();
    m.e[4] = NAN;
    CHECK_THROWS_AS(sym_eig3(m), NumericError);
    CHECK_THROWS_WITH(sym_eig3(m), doctest::Contains("non-finite"));
}

TEST_CASE("cross product")
{
    CHECK(cross({1, 0, 0}, {0, 1, 0}) == Vec3{0, 0, 1});
    const Vec3 a{0.3, -2, 5};
    CHECK(cross(a, a) == Vec3{0, 0, 0});
    Rng rng(5);
    for (int k = 0; k < 100; ++k) {
        const Vec3 u = fixtures::random_vector(rng), v = fixtures::random_vector(rng);
        const Vec3 c = cross(u, v);
        CHECK(std::fabs(dot(u, c)) <= 1e-12);
        CHECK(std::fabs(dot(v, c)) <= 1e-12);
        const double cos_t = dot(u, v) / (norm(u) * norm(v));
        CHECK(norm(c) == doctest::Approx(norm(u) * norm(v) * std::sqrt(1 - cos_t * cos_t)).epsilon(1e-9));
    }
}

TEST_CASE("orthonormalize")
{
    CHECK(orthonormalize(Mat3::identity()) == Mat3::identity());
    CHECK(orthonormalize(Mat3::diag(2, 3, 4)) == Mat3::identity());
    // reflected input still yields a proper rotation
    CHECK(orthonormalize(Mat3::diag(1, 1, -1)).det() == doctest::Approx(1.0));

    Rng rng(7);
    for (int k = 0; k < 200; ++k) {
        const Mat3 m = fixtures::random_matrix(rng);
        if (std::fabs(m.det()) < 1e-2)
            continue;
        const Mat3 f = orthonormalize(m);
        CHECK(fixtures::orthonormality_error(f) <= 1e-12);
        CHECK(std::fabs(f.det() - 1) <= 1e-10);
        // Gram-Schmidt order: column 0 keeps its direction
        CHECK(norm(f.col(0) - m.col(0) / norm(m.col(0))) <= 1e-12);
        const Mat3 r = random_rotation(rng);
        CHECK(fixtures::max_abs_diff(orthonormalize(r * m), r * f) <= 1e-10);
    }
}

TEST_CASE("orthonormalize rejects singular bases")
{
    const Mat3 m = Mat3::from_columns({1, 0, 0}, {2, 0, 0}, {0, 0, 1});
    CHECK_THROWS_WITH_AS(orthonormalize(m), doctest::Contains("degenerate basis"), NumericError);
}

TEST_CASE("random_rotation")
{
    Rng a(42), b(42);
    const Mat3 ra = random_rotation(a), rb = random_rotation(b);
    CHECK(ra == rb);

    Rng rng(1234);
    Mat3 mean;
    const int n = 10000;
    for (int k = 0; k < n; ++k) {
        const Mat3 r = random_rotation(rng);
        CHECK(fixtures::orthonormality_error(r) <= 1e-12);
        CHECK(std::fabs(r.det() - 1) <= 1e-12);
        mean += (1.0 / n) * r;
    }
    // Haar: each entry has mean 0 and variance 1/3
    const double sigma = std::sqrt(1.0 / 3.0 / n);
    for (double v : mean.e)
        CHECK(std::fabs(v) <= 3 * sigma);
}

TEST_CASE("quaternion_to_rotation")
{
    CHECK(quaternion_to_rotation(1, 0, 0, 0) == Mat3::identity());
    // 90 degrees about z
    const double h = std::sqrt(0.5);
    const Mat3 r = quaternion_to_rotation(h, 0, 0, h);
    CHECK(norm(r * Vec3{1, 0, 0} - Vec3{0, 1, 0}) <= 1e-15);
}
