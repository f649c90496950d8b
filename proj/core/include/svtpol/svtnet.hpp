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
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "svtpol/frames.hpp"
#include "svtpol/molgraph.hpp"
#include "svtpol/params.hpp"

namespace svtpol {

enum class Variant { scalar_baseline, tensorial };

std::string_view to_string(Variant v);
Variant variant_from_string(std::string_view s);

/// Architecture hyperparameters. Hidden widths of 0 mean "same as the
/// number of scalar channels".
struct ModelConfig
{
    Variant variant = Variant::tensorial;
    std::size_t layers = 4;
    std::size_t scalar_channels = 32;
    std::size_t vector_channels = 4;
    std::size_t tensor_channels = 8;

    std::size_t hidden_scalar = 0;       ///< message, gate and update MLPs
    std::size_t hidden_candidate = 0;    ///< vector/tensor candidate and init MLPs
    std::size_t hidden_interaction = 0;  ///< per-edge mixing-coefficient MLPs
    std::size_t hidden_readout = 0;

    double cutoff = 4.0;  ///< angstrom
    /// Constant factor on the pooled prediction, set from training data.
    double output_scale = 1.0;
    std::vector<int> elements{1, 6, 7, 8, 16, 17};
    FrameConfig frames;

    /// Throws std::invalid_argument on inconsistent settings.
    void validate() const;

    std::size_t hidden_or_default(std::size_t h) const { return h == 0 ? scalar_channels : h; }
    bool tensorial() const { return variant == Variant::tensorial; }

    std::vector<std::pair<std::string, std::string>> to_kv() const;
    static ModelConfig from_kv(const std::vector<std::pair<std::string, std::string>>& kv);

    /// C_s=32, C_v=4, C_t=8, L=4.
    static ModelConfig desk_tensorial();
    /// Scalar-only model parameter-matched to desk_tensorial().
    static ModelConfig desk_scalar();
    /// 128 scalar, 4 vector, 32 tensor channels, 8 layers.
    static ModelConfig paper_tensorial();
    /// 331 scalar channels, 8 layers.
    static ModelConfig paper_scalar();
};

/// Shapes of every MLP in the model, keyed by parameter prefix.
struct ModelSpecs
{
    std::vector<std::pair<std::string, ad::MlpSpec>> mlps;
    std::size_t embedding_rows = 0;
    std::size_t embedding_cols = 0;

    const ad::MlpSpec& operator[](const std::string& prefix) const;
};

ModelSpecs model_specs(const ModelConfig& cfg);
std::size_t parameter_count(const ModelConfig& cfg);

/// Glorot-initialized parameters, deterministic per seed.
ad::ParamStore init_model(const ModelConfig& cfg, std::uint64_t seed);

/// Several molecules as one disconnected graph. Node and edge order is
/// molecule by molecule, each in Graph order.
struct GraphBatch
{
    std::size_t num_molecules = 0;
    std::size_t num_nodes = 0;
    std::vector<std::uint32_t> element_row;    ///< embedding row per node
    std::vector<std::uint32_t> node_molecule;  ///< molecule per node
    std::vector<std::uint32_t> receivers;      ///< i of edge (i, j)
    std::vector<std::uint32_t> senders;        ///< j of edge (i, j)
    ad::Tensor edge_invariants;                ///< [E, 2]: d^2, (d^2 + eps)^-1
    std::vector<Mat3> frames;                  ///< F_i per node
    std::vector<Mat3> transports;              ///< F_ij = F_i^T F_j per edge

    std::size_t num_edges() const { return receivers.size(); }
};

/// Molecule with its cutoff graph and per-atom frames.
struct PreparedMolecule
{
    Molecule molecule;
    Graph graph;
    std::vector<Frame> frames;
};

/// Builds the graph and frames with the model's cutoff and frame settings.
PreparedMolecule prepare(const Molecule& mol, const ModelConfig& cfg);
std::vector<PreparedMolecule> prepare(std::span<const Molecule> mols, const ModelConfig& cfg);

GraphBatch make_batch(std::span<const PreparedMolecule> mols, const ModelConfig& cfg);
GraphBatch make_batch(std::span<const PreparedMolecule* const> mols, const ModelConfig& cfg);

/// Per-node feature channels on a tape: s [N, C_s], v [N, C_v*3] and
/// T [N, C_t*9] (row-major 3-vectors and 3x3 blocks per channel). v and
/// T are unset for the scalar baseline.
struct NodeState
{
    ad::Var s;
    ad::Var v;
    ad::Var t;
};

/// Layer-level building blocks; `layer` counts from 0.
namespace layers {

ad::Var embed(const ModelConfig& cfg, const ad::BoundParams& p, const GraphBatch& batch);
ad::Var scalar_layer(const ModelConfig& cfg, const ad::BoundParams& p, const GraphBatch& batch, std::size_t layer,
                     ad::Var s);
/// v0 and T0 from the scalars after the first update.
std::pair<ad::Var, ad::Var> init_vt(const ModelConfig& cfg, const ad::BoundParams& p, ad::Var s);
ad::Var vector_layer(const ModelConfig& cfg, const ad::BoundParams& p, const GraphBatch& batch, std::size_t layer,
                     ad::Var s, ad::Var v);
ad::Var tensor_layer(const ModelConfig& cfg, const ad::BoundParams& p, const GraphBatch& batch, std::size_t layer,
                     ad::Var s, ad::Var t);
/// Per-node local 3x3 contributions [N, 9], symmetrized.
ad::Var local_head(const ModelConfig& cfg, const ad::BoundParams& p, const NodeState& state);
/// Pooled global prediction [B, 9]: sum_i F_i A_i F_i^T per molecule,
/// times output_scale.
ad::Var pool(const ModelConfig& cfg, const GraphBatch& batch, ad::Var local);

} // namespace layers

/// Node state after all message-passing layers.
NodeState run_layers(const ModelConfig& cfg, const ad::BoundParams& p, const GraphBatch& batch);

/// Molecular predictions [B, 9] (row-major 3x3 per molecule).
ad::Var forward(const ModelConfig& cfg, const ad::BoundParams& p, const GraphBatch& batch);

/// Tape-free convenience wrappers.
std::vector<Mat3> predict(const ModelConfig& cfg, const ad::ParamStore& params, const GraphBatch& batch);
Mat3 predict(const ModelConfig& cfg, const ad::ParamStore& params, const PreparedMolecule& mol);
Mat3 predict(const ModelConfig& cfg, const ad::ParamStore& params, const Molecule& mol);

/// Throws DataError when the parameter names or shapes do not match cfg.
void check_compatible(const ModelConfig& cfg, const ad::ParamStore& params);

} // namespace svtpol
