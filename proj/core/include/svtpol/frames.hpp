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
#include <string_view>
#include <vector>

#include "svtpol/linalg3.hpp"
#include "svtpol/molgraph.hpp"

namespace svtpol {

/// Which branch of the construction replaced the regular path. When more
/// than one applies, the later one in the construction order wins:
/// sign_unstable, then mu_small, then x_parallel_z.
enum class Fallback { none, mu_small, sign_unstable, x_parallel_z, isolated };

inline constexpr std::size_t fallback_kinds = 5;

std::string_view to_string(Fallback f);

struct FrameConfig
{
    double eps_mu = 1e-6;    ///< angstrom, threshold on |mu|
    double eps_sign = 1e-6;  ///< relative threshold of the sign test
    double eps_gap = 1e-6;   ///< relative gap lambda_2 - lambda_1 vs tr(C); also tr(C) vs tr(C) + |mu|^2
};

/// Per-atom orthonormal frame; columns are (x, y, z).
struct Frame
{
    Mat3 F = Mat3::identity();
    bool degenerate = false;
    Fallback fallback_used = Fallback::none;

    // Diagnostics of the construction.
    std::array<double, 3> eigenvalues{};
    Vec3 mu;

    bool regular() const { return !degenerate && fallback_used == Fallback::none; }
};

struct WeightedMoments
{
    Vec3 mu;  ///< charge-weighted mean displacement
    Mat3 C;   ///< charge-weighted covariance of displacements
};

/// mu_i and C_i over the neighbours of atom i with weights |Z_j|.
/// Requires degree(i) >= 1.
WeightedMoments weighted_moments(const Molecule& mol, const Graph& graph, std::size_t i);

/// Charge-weighted PCA frame of atom i. Never throws; degeneracies and
/// fallbacks are recorded on the returned frame.
Frame build_frame(const Molecule& mol, const Graph& graph, std::size_t i, const FrameConfig& cfg = {});

/// F_ij = F_i^T F_j, transports features from j's frame to i's frame.
inline Mat3 relative_rotation(const Frame& fi, const Frame& fj) { return fi.F.transposed() * fj.F; }
inline Mat3 relative_rotation(const Mat3& fi, const Mat3& fj) { return fi.transposed() * fj; }

struct FrameSummary
{
    std::size_t degenerate = 0;
    std::array<std::size_t, fallback_kinds> by_fallback{};

    std::size_t count(Fallback f) const { return by_fallback[static_cast<std::size_t>(f)]; }
    /// Atoms that are degenerate or used any fallback.
    std::size_t irregular = 0;
};

std::vector<Frame> frames_for_molecule(const Molecule& mol, const Graph& graph, const FrameConfig& cfg = {});
FrameSummary summarize(const std::vector<Frame>& frames);

/// Frames with R applied: F_i -> R F_i, diagnostics unchanged.
std::vector<Frame> rotated(const std::vector<Frame>& frames, const Mat3& rotation);

} // namespace svtpol
