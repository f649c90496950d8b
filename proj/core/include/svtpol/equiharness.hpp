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

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "svtpol/svtnet.hpp"

namespace svtpol {

inline constexpr double rel_frob_epsilon = 1e-12;

/// ||a_R - R a_base R^T||_F / (0.5 (||a_R||_F + ||a_base||_F) + 1e-12).
double rel_frob(const Mat3& pred_rotated, const Mat3& pred_base, const Mat3& rotation);

/// model: positions and frames rotated together, frames not recomputed.
/// pipeline: positions rotated, frames rebuilt from them.
enum class EquiMode { model, pipeline };

std::string_view to_string(EquiMode m);
EquiMode equi_mode_from_string(std::string_view s);

/// `n` rotations drawn from random_rotation on a stream seeded by `seed`.
std::vector<Mat3> sample_rotations(std::size_t n, std::uint64_t seed);

struct MoleculeEqui
{
    std::string molecule_id;
    std::string conformer_id;
    double mean = 0.0;   ///< over rotations
    double worst = 0.0;  ///< max over rotations
    /// Frames of the unrotated molecule that are degenerate or used a
    /// fallback.
    std::size_t base_irregular = 0;
    /// Same count summed over all rotated copies (pipeline mode only;
    /// equals n_rotations * base_irregular in model mode).
    std::size_t rotated_irregular = 0;
    /// Degenerate frames of the unrotated molecule.
    std::size_t base_degenerate = 0;

    bool regular() const { return base_irregular == 0 && rotated_irregular == 0; }
};

struct EquiReport
{
    EquiMode mode = EquiMode::model;
    std::uint64_t seed = 0;
    std::size_t n_rotations = 0;
    /// Over all (molecule, rotation) pairs; std is the population value.
    double mean = 0.0;
    double std = 0.0;
    std::vector<MoleculeEqui> molecules;

    /// Same statistics restricted to molecules whose frames are all
    /// regular, and to the rest.
    std::size_t regular_molecules = 0;
    double regular_mean = 0.0;
    double regular_std = 0.0;
    double irregular_mean = 0.0;
    double irregular_std = 0.0;
    std::size_t degenerate_frames = 0;  ///< over unrotated molecules
    std::size_t irregular_frames = 0;   ///< over unrotated molecules
};

/// Every molecule is evaluated under the same `n_rotations` rotations.
EquiReport model_equivariance(const ModelConfig& cfg, const ad::ParamStore& params, std::span<const Molecule> mols,
                              std::size_t n_rotations, std::uint64_t seed);
EquiReport pipeline_equivariance(const ModelConfig& cfg, const ad::ParamStore& params,
                                 std::span<const Molecule> mols, std::size_t n_rotations, std::uint64_t seed);
EquiReport check_equivariance(EquiMode mode, const ModelConfig& cfg, const ad::ParamStore& params,
                              std::span<const Molecule> mols, std::size_t n_rotations, std::uint64_t seed);

/// Header, one line per molecule, then the aggregate block.
void write_report(std::ostream& out, const EquiReport& report);

} // namespace svtpol
