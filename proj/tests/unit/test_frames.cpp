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

#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracle/reference.hpp"
#include "svtpol/frames.hpp"

using namespace svtpol;

namespace {

// Atom 0 at `centre` with neighbours at centre + offsets.
Molecule neighbourhood(Vec3 centre, std::vector<Vec3> offsets, std::vector<int> z)
{
    Molecule m;
    m.molecule_id = "hood";
    m.conformer_id = "0";
    m.atomic_numbers.push_back(6);
    m.positions.push_back(centre);
    for (std::size_t k = 0; k < offsets.size(); ++k) {
        m.atomic_numbers.push_back(z[k]);
        m.positions.push_back(centre + offsets[k]);
    }
    return m;
}

void check_proper(const Mat3& f)
{
    CHECK(fixtures::orthonormality_error(f) <= 1e-12);
    CHECK(std::fabs(f.det() - 1) <= 1e-10);
}

} // namespace

TEST_CASE("weighted moments")
{
    {
        const Molecule m = neighbourhood({0, 0, 0}, {{1, 0, 0}}, {17});
        const auto [mu, c] = weighted_moments(m, build_graph(m, 4.0), 0);
        CHECK(mu == Vec3{1, 0, 0});
        CHECK(max_abs(c) <= 1e-15);
    }
    {
        const Molecule m = neighbourhood({0, 0, 0}, {{1, 0, 0}, {-1, 0, 0}}, {8, 8});
        const auto [mu, c] = weighted_moments(m, build_graph(m, 1.5), 0);
        CHECK(mu == Vec3{0, 0, 0});
        CHECK(c == Mat3::diag(1, 0, 0));
    }
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Vec3> offsets;
        std::vector<int> z;
        for (int k = 0; k < 5; ++k) {
            offsets.push_back(1.5 * fixtures::random_vector(rng));
            z.push_back(synthetic_elements[rng.index(6)]);
        }
        const Molecule m = neighbourhood(fixtures::random_vector(rng), offsets, z);
        const auto [mu, c] = weighted_moments(m, build_graph(m, 100.0), 0);
        const auto ref = oracle::moments(m, 0, 100.0);
        for (std::size_t p = 0; p < 3; ++p)
            CHECK(std::fabs(mu[p] - ref.mu[p]) <= 1e-12);
        CHECK(fixtures::max_abs_diff(c, oracle::from_m3(ref.C)) <= 1e-12);
        CHECK(max_abs(c - c.transposed()) <= 1e-12);
        CHECK(sym_eig3(c).values[0] >= -1e-12);
    }
}

TEST_CASE("isolated atom falls back to the identity")
{
    const Molecule m = neighbourhood({0, 0, 0}, {{5, 0, 0}}, {1});
    const Frame f = build_frame(m, build_graph(m, 4.0), 0);
    CHECK(f.F == Mat3::identity());
    CHECK(f.degenerate);
    CHECK(f.fallback_used == Fallback::isolated);
    CHECK_FALSE(f.regular());
}

TEST_CASE("single neighbour is degenerate but proper")
{
    const Molecule m = neighbourhood({0, 0, 0}, {{1.25, 0, 0}}, {1});
    const Frame f = build_frame(m, build_graph(m, 4.0), 0);
    CHECK(f.degenerate);
    check_proper(f.F);

    // covariance is rounding noise only
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const Molecule one = neighbourhood(fixtures::random_vector(rng), {2.0 * fixtures::random_vector(rng)},
                                           {synthetic_elements[rng.index(6)]});
        CHECK(build_frame(one, build_graph(one, 100.0), 0).degenerate);
    }
}

TEST_CASE("fallback branches")
{
    SUBCASE("mu_small")
    {
        const Molecule m =
            neighbourhood({0, 0, 0}, {{1, 0, 0}, {-1, 0, 0}, {0, 1.5, 0}, {0, -1.5, 0}, {0, 0, 0.5}, {0, 0, -0.5}},
                          {1, 1, 1, 1, 1, 1});
        const Frame f = build_frame(m, build_graph(m, 2.0), 0);
        CHECK(f.fallback_used == Fallback::mu_small);
        CHECK_FALSE(f.degenerate);
        check_proper(f.F);
        // z is the low-variance axis, x the high-variance one
        CHECK(std::fabs(std::fabs(f.F(2, 2)) - 1) <= 1e-12);
        CHECK(std::fabs(std::fabs(f.F(1, 0)) - 1) <= 1e-12);
    }
    SUBCASE("x_parallel_z")
    {
        const Molecule m =
            neighbourhood({0, 0, 0}, {{1, 0, 0.5}, {-1, 0, 0.5}, {0, 2, 0.5}, {0, -2, 0.5}}, {1, 1, 1, 1});
        const Frame f = build_frame(m, build_graph(m, 4.0), 0);
        CHECK(f.fallback_used == Fallback::x_parallel_z);
        CHECK_FALSE(f.degenerate);
        check_proper(f.F);
        CHECK(norm(f.F.col(2) - Vec3{0, 0, 1}) <= 1e-12);
    }
    SUBCASE("sign_unstable")
    {
        // mu in the plane of largest spread, z perpendicular to it
        const Molecule m = neighbourhood({0, 0, 0}, {{1, 0, 0}, {0, 1, 0}, {-1, 0, 0.25}, {-1, 0, -0.25}}, {1, 1, 1, 1});
        const Frame f = build_frame(m, build_graph(m, 4.0), 0);
        CHECK(f.fallback_used == Fallback::sign_unstable);
        check_proper(f.F);
    }
}

TEST_CASE("water and carbon dioxide fixtures")
{
    const Molecule h2o = fixtures::water();
    const auto frames = frames_for_molecule(h2o, build_graph(h2o, 4.0));
    REQUIRE(frames.size() == 3);
    for (const auto& f : frames)
        check_proper(f.F);
    // Each atom sees two neighbours, so every covariance has rank one and
    // its two smallest eigenvalues coincide.
    CHECK(summarize(frames).degenerate == 3);

    const Molecule co2 = fixtures::carbon_dioxide();
    const auto lin = frames_for_molecule(co2, build_graph(co2, 4.0));
    for (const auto& f : lin)
        check_proper(f.F);
    CHECK(lin[0].degenerate);
    CHECK(lin[0].fallback_used == Fallback::mu_small);
    const FrameSummary s = summarize(lin);
    CHECK(s.degenerate == 3);
    CHECK(s.irregular == 3);
    CHECK(s.count(Fallback::mu_small) == 1);
    CHECK(s.count(Fallback::sign_unstable) == 2);
}

TEST_CASE("frames are bitwise translation invariant")
{
    for (const Molecule& mol : {fixtures::water(), fixtures::carbon_dioxide(), fixtures::random_cloud(9, 3)}) {
        const auto base = frames_for_molecule(mol, build_graph(mol, 4.0));
        const Molecule moved = transformed(mol, Mat3::identity(), {5, 5, 5});
        const auto shifted = frames_for_molecule(moved, build_graph(moved, 4.0));
        for (std::size_t i = 0; i < base.size(); ++i) {
            CHECK(base[i].F == shifted[i].F);
            CHECK(base[i].degenerate == shifted[i].degenerate);
            CHECK(base[i].fallback_used == shifted[i].fallback_used);
        }
    }
}

TEST_CASE("regular frames rotate with the molecule")
{
    Rng rng(99);
    std::size_t regular = 0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Vec3> offsets;
        std::vector<int> z;
        for (int k = 0; k < 5; ++k) {
            offsets.push_back(1.5 * fixtures::random_vector(rng));
            z.push_back(synthetic_elements[rng.index(6)]);
        }
        const Molecule m = neighbourhood({0, 0, 0}, offsets, z);
        const Frame f = build_frame(m, build_graph(m, 100.0), 0);
        check_proper(f.F);
        if (!f.regular())
            continue;
        ++regular;
        const Mat3 r = random_rotation(rng);
        const Molecule moved = transformed(m, r);
        const Frame g = build_frame(moved, build_graph(moved, 100.0), 0);
        CHECK(g.regular());
        CHECK(fixtures::max_abs_diff(g.F, r * f.F) <= 1e-9);
    }
    CHECK(regular > 40);
}

TEST_CASE("relative rotation")
{
    Rng rng(4);
    const Mat3 fi = random_rotation(rng), fj = random_rotation(rng), r = random_rotation(rng);
    CHECK(fixtures::max_abs_diff(relative_rotation(fi, fi), Mat3::identity()) <= 1e-15);
    CHECK(fixtures::max_abs_diff(relative_rotation(r * fi, r * fj), relative_rotation(fi, fj)) <= 1e-12);
    for (int k = 0; k < 10; ++k) {
        const Vec3 v = fixtures::random_vector(rng);
        CHECK(norm(relative_rotation(fi, fj) * (fj.transposed() * v) - fi.transposed() * v) <= 1e-12);
    }
}

TEST_CASE("rotated frames and summaries")
{
    const Molecule mol = fixtures::random_cloud(8, 12);
    const auto frames = frames_for_molecule(mol, build_graph(mol, 4.0));
    Rng rng(2);
    const Mat3 r = random_rotation(rng);
    const auto moved = rotated(frames, r);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        CHECK(fixtures::max_abs_diff(moved[i].F, r * frames[i].F) <= 1e-15);
        CHECK(moved[i].degenerate == frames[i].degenerate);
    }
    const FrameSummary s = summarize(frames);
    std::size_t total = 0;
    for (auto c : s.by_fallback)
        total += c;
    CHECK(total == frames.size());
}
