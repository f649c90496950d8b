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
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "svtpol/linalg3.hpp"

namespace svtpol {

/// One conformer. Positions in angstrom, polarizability in bohr^3.
struct Molecule
{
    std::string molecule_id;
    std::string conformer_id;
    std::vector<int> atomic_numbers;
    std::vector<Vec3> positions;
    std::optional<Mat3> polarizability;

    std::size_t size() const { return atomic_numbers.size(); }
};

/// Throws DataError if the record violates the Molecule invariants.
void validate(const Molecule& mol);

/// Rigid motion x -> R x + t applied to every position; the label, if
/// present, is conjugated by R.
Molecule transformed(const Molecule& mol, const Mat3& rotation, Vec3 translation = {});

// ---------------------------------------------------------------------------
// Dataset text format

/// Parse one record line (no trailing newline). `line_no` is used in
/// error messages only.
Molecule parse_record(std::string_view line, std::size_t line_no = 0);
std::string format_record(const Molecule& mol);

std::vector<Molecule> read_dataset(std::istream& in);
std::vector<Molecule> read_dataset(const std::filesystem::path& path);
void write_dataset(std::ostream& out, std::span<const Molecule> mols);
void write_dataset(const std::filesystem::path& path, std::span<const Molecule> mols);

// ---------------------------------------------------------------------------
// Cutoff graph

/// Regularizer in (d^2 + eps)^-1, angstrom^2.
inline constexpr double edge_inverse_epsilon = 1e-8;

/// Directed edge i <- j. `receiver` is i, `sender` is j.
struct Edge
{
    std::uint32_t receiver = 0;
    std::uint32_t sender = 0;
    Vec3 r_ij;  ///< x_i - x_j
    double d2 = 0.0;
    double inv_d2 = 0.0;  ///< (d2 + eps)^-1
};

struct Graph
{
    std::size_t num_nodes = 0;
    double cutoff = 0.0;
    /// Sorted by (receiver, sender); both directions present.
    std::vector<Edge> edges;
    /// edges[neighbor_offsets[i] .. neighbor_offsets[i + 1]) have receiver i.
    std::vector<std::size_t> neighbor_offsets;

    std::span<const Edge> incoming(std::size_t i) const
    {
        return std::span<const Edge>(edges).subspan(neighbor_offsets[i], neighbor_offsets[i + 1] - neighbor_offsets[i]);
    }
    std::size_t degree(std::size_t i) const { return neighbor_offsets[i + 1] - neighbor_offsets[i]; }
};

/// Edges (i, j) with 0 < |x_i - x_j| <= cutoff. Throws DataError on
/// coincident atoms and std::invalid_argument on cutoff <= 0.
Graph build_graph(const Molecule& mol, double cutoff);

/// True if every node is reachable from node 0.
bool is_connected(const Graph& graph);

// ---------------------------------------------------------------------------
// Splits

enum class Split { train, val, test };

std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

struct SplitFractions
{
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

struct SplitAssignment
{
    std::map<std::string, Split> by_molecule;

    Split of(const Molecule& mol) const;
    /// Indices into `mols` of records assigned to `which`, in input order.
    std::vector<std::size_t> select(std::span<const Molecule> mols, Split which) const;
    std::array<std::size_t, 3> counts() const;
};

/// Groups by molecule_id, shuffles the sorted unique ids with `seed` and
/// cuts them by rounded fractions (train and val rounded, test takes
/// the remainder).
SplitAssignment split_by_molecule(std::span<const Molecule> mols, std::uint64_t seed,
                                  SplitFractions fractions = {});

/// Everything in `which`; for tiny fixtures that should not be split.
SplitAssignment assign_all(std::span<const Molecule> mols, Split which);

// ---------------------------------------------------------------------------
// Synthetic bond-polarizability oracle

struct SynthParams
{
    /// Isotropic atomic term a(Z), bohr^3.
    std::map<int, double> atomic{{1, 4.5}, {6, 12.0}, {7, 7.4}, {8, 5.4}, {16, 19.6}, {17, 14.6}};
    double parallel_factor = 0.6;       ///< b_par = f * sqrt(a_i a_j)
    double perpendicular_factor = 0.2;  ///< b_perp = f * sqrt(a_i a_j)
    double decay_length = 2.0;          ///< angstrom
    double cutoff = 4.0;                ///< angstrom

    double atomic_term(int z) const;
};

/// Sum of isotropic atom terms and per-pair dyadics over pairs within
/// the cutoff. Throws DataError on an element missing from the table.
Mat3 synth_polarizability(const Molecule& mol, const SynthParams& params = {});

/// Elements drawn by the generator: H, C, N, O, S, Cl.
inline constexpr std::array<int, 6> synthetic_elements{1, 6, 7, 8, 16, 17};

/// n labelled random molecules of 4-16 atoms with nearest-neighbour
/// distances in [0.8, 2.0] angstrom, connected at params.cutoff.
std::vector<Molecule> gen_synthetic(std::size_t n, std::uint64_t seed, const SynthParams& params = {});

} // namespace svtpol
