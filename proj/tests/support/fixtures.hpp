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

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "svtpol/linalg3.hpp"
#include "svtpol/molgraph.hpp"
#include "svtpol/random.hpp"

namespace fixtures {

// Coordinates are dyadic rationals so that sums and translations by
// dyadic offsets are exact.

/// Bent water, O at the origin, H-O-H in the xy plane.
inline svtpol::Molecule water()
{
    svtpol::Molecule m;
    m.molecule_id = "h2o";
    m.conformer_id = "0";
    m.atomic_numbers = {8, 1, 1};
    m.positions = {{0.0, 0.0, 0.0}, {0.75, 0.5859375, 0.0}, {-0.75, 0.5859375, 0.0}};
    m.polarizability = svtpol::synth_polarizability(m);
    return m;
}

/// Linear carbon dioxide along x.
inline svtpol::Molecule carbon_dioxide()
{
    svtpol::Molecule m;
    m.molecule_id = "co2";
    m.conformer_id = "0";
    m.atomic_numbers = {6, 8, 8};
    m.positions = {{0.0, 0.0, 0.0}, {1.15625, 0.0, 0.0}, {-1.15625, 0.0, 0.0}};
    m.polarizability = svtpol::synth_polarizability(m);
    return m;
}

/// n atoms with elements from the synthetic set, uniform in a cube of
/// side `box`, positions snapped to multiples of 2^-30.
inline svtpol::Molecule random_cloud(std::size_t n, std::uint64_t seed, double box = 3.0, bool label = true)
{
    svtpol::Rng rng(seed);
    svtpol::Molecule m;
    m.molecule_id = "cloud" + std::to_string(seed);
    m.conformer_id = "0";
    for (std::size_t i = 0; i < n; ++i) {
        m.atomic_numbers.push_back(svtpol::synthetic_elements[rng.index(svtpol::synthetic_elements.size())]);
        svtpol::Vec3 p;
        for (int k = 0; k < 3; ++k)
            p[static_cast<std::size_t>(k)] = std::ldexp(std::round(std::ldexp(rng.uniform(0.0, box), 30)), -30);
        m.positions.push_back(p);
    }
    if (label)
        m.polarizability = svtpol::synth_polarizability(m);
    return m;
}

inline svtpol::Mat3 random_matrix(svtpol::Rng& rng)
{
    svtpol::Mat3 m;
    for (auto& v : m.e)
        v = rng.uniform(-1.0, 1.0);
    return m;
}

inline svtpol::Mat3 random_symmetric(svtpol::Rng& rng)
{
    const svtpol::Mat3 a = random_matrix(rng);
    return 0.5 * (a + a.transposed());
}

inline svtpol::Vec3 random_vector(svtpol::Rng& rng)
{
    return {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
}

inline double max_abs_diff(const svtpol::Mat3& a, const svtpol::Mat3& b) { return svtpol::max_abs(a - b); }

/// max |F^T F - I|.
inline double orthonormality_error(const svtpol::Mat3& f)
{
    return svtpol::max_abs(f.transposed() * f - svtpol::Mat3::identity());
}

} // namespace fixtures
