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

#include "svtpol/svtnet.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <stdexcept>

#include "svtpol/error.hpp"

namespace svtpol {

using ad::BoundParams;
using ad::MlpSpec;
using ad::Shape;
using ad::Tensor;
using ad::Var;

std::string_view to_string(Variant v)
{
    return v == Variant::tensorial ? "tensorial" : "scalar";
}

Variant variant_from_string(std::string_view s)
{
    if (s == "tensorial")
        return Variant::tensorial;
    if (s == "scalar" || s == "scalar_baseline")
        return Variant::scalar_baseline;
    throw std::invalid_argument("unknown model variant '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Configuration

void ModelConfig::validate() const
{
    if (layers < 2)
        throw std::invalid_argument("model needs at least 2 layers");
    if (scalar_channels == 0)
        throw std::invalid_argument("model needs at least one scalar channel");
    if (variant == Variant::scalar_baseline && (vector_channels != 0 || tensor_channels != 0))
        throw std::invalid_argument("scalar baseline must have zero vector and tensor channels");
    if (variant == Variant::tensorial && (vector_channels == 0 || tensor_channels == 0))
        throw std::invalid_argument("tensorial model needs vector and tensor channels");
    if (!(cutoff > 0.0))
        throw std::invalid_argument("cutoff must be positive");
    if (!(output_scale > 0.0) || !std::isfinite(output_scale))
        throw std::invalid_argument("output scale must be positive and finite");
    if (elements.empty())
        throw std::invalid_argument("element table is empty");
    std::set<int> seen;
    for (int z : elements)
        if (z <= 0 || !seen.insert(z).second)
            throw std::invalid_argument("element table must hold distinct positive atomic numbers");
    if (!(frames.eps_mu > 0 && frames.eps_sign > 0 && frames.eps_gap > 0))
        throw std::invalid_argument("frame thresholds must be positive");
}

namespace {

std::string real_str(double v)
{
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, ptr);
}

double real_of(const std::string& key, const std::string& s)
{
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw DataError("config key '" + key + "': bad real '" + s + "'");
    return v;
}

std::size_t size_of(const std::string& key, const std::string& s)
{
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw DataError("config key '" + key + "': bad integer '" + s + "'");
    return v;
}

} // namespace

std::vector<std::pair<std::string, std::string>> ModelConfig::to_kv() const
{
    std::string els;
    for (std::size_t k = 0; k < elements.size(); ++k)
        els += (k ? "," : "") + std::to_string(elements[k]);
    return {
        {"model.variant", std::string(to_string(variant))},
        {"model.layers", std::to_string(layers)},
        {"model.cs", std::to_string(scalar_channels)},
        {"model.cv", std::to_string(vector_channels)},
        {"model.ct", std::to_string(tensor_channels)},
        {"model.hidden_scalar", std::to_string(hidden_scalar)},
        {"model.hidden_candidate", std::to_string(hidden_candidate)},
        {"model.hidden_interaction", std::to_string(hidden_interaction)},
        {"model.hidden_readout", std::to_string(hidden_readout)},
        {"model.cutoff", real_str(cutoff)},
        {"model.output_scale", real_str(output_scale)},
        {"model.elements", els},
        {"model.eps_mu", real_str(frames.eps_mu)},
        {"model.eps_sign", real_str(frames.eps_sign)},
        {"model.eps_gap", real_str(frames.eps_gap)},
    };
}

ModelConfig ModelConfig::from_kv(const std::vector<std::pair<std::string, std::string>>& kv)
{
    ModelConfig cfg;
    for (const auto& [k, v] : kv) {
        if (k == "model.variant")
            cfg.variant = variant_from_string(v);
        else if (k == "model.layers")
            cfg.layers = size_of(k, v);
        else if (k == "model.cs")
            cfg.scalar_channels = size_of(k, v);
        else if (k == "model.cv")
            cfg.vector_channels = size_of(k, v);
        else if (k == "model.ct")
            cfg.tensor_channels = size_of(k, v);
        else if (k == "model.hidden_scalar")
            cfg.hidden_scalar = size_of(k, v);
        else if (k == "model.hidden_candidate")
            cfg.hidden_candidate = size_of(k, v);
        else if (k == "model.hidden_interaction")
            cfg.hidden_interaction = size_of(k, v);
        else if (k == "model.hidden_readout")
            cfg.hidden_readout = size_of(k, v);
        else if (k == "model.cutoff")
            cfg.cutoff = real_of(k, v);
        else if (k == "model.output_scale")
            cfg.output_scale = real_of(k, v);
        else if (k == "model.eps_mu")
            cfg.frames.eps_mu = real_of(k, v);
        else if (k == "model.eps_sign")
            cfg.frames.eps_sign = real_of(k, v);
        else if (k == "model.eps_gap")
            cfg.frames.eps_gap = real_of(k, v);
        else if (k == "model.elements") {
            cfg.elements.clear();
            std::size_t start = 0;
            while (start <= v.size()) {
                const auto end = std::min(v.find(',', start), v.size());
                cfg.elements.push_back(static_cast<int>(size_of(k, v.substr(start, end - start))));
                start = end + 1;
            }
        }
    }
    cfg.validate();
    return cfg;
}

ModelConfig ModelConfig::desk_tensorial() { return ModelConfig{}; }

ModelConfig ModelConfig::desk_scalar()
{
    ModelConfig cfg;
    cfg.variant = Variant::scalar_baseline;
    cfg.scalar_channels = 52;
    cfg.vector_channels = 0;
    cfg.tensor_channels = 0;
    return cfg;
}

ModelConfig ModelConfig::paper_tensorial()
{
    ModelConfig cfg;
    cfg.layers = 8;
    cfg.scalar_channels = 128;
    cfg.vector_channels = 4;
    cfg.tensor_channels = 32;
    cfg.hidden_interaction = 215;
    return cfg;
}

ModelConfig ModelConfig::paper_scalar()
{
    ModelConfig cfg;
    cfg.variant = Variant::scalar_baseline;
    cfg.layers = 8;
    cfg.scalar_channels = 331;
    cfg.vector_channels = 0;
    cfg.tensor_channels = 0;
    cfg.hidden_scalar = 288;
    return cfg;
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

std::string layer_prefix(std::size_t layer) { return "layer" + std::to_string(layer); }

std::size_t readout_inputs(const ModelConfig& cfg)
{
    return cfg.scalar_channels + 3 * cfg.vector_channels + 9 * cfg.tensor_channels;
}

} // namespace

const MlpSpec& ModelSpecs::operator[](const std::string& prefix) const
{
    for (const auto& [name, spec] : mlps)
        if (name == prefix)
            return spec;
    throw std::out_of_range("no MLP named '" + prefix + "'");
}

ModelSpecs model_specs(const ModelConfig& cfg)
{
    cfg.validate();
    const std::size_t cs = cfg.scalar_channels, cv = cfg.vector_channels, ct = cfg.tensor_channels;
    const std::size_t hs = cfg.hidden_or_default(cfg.hidden_scalar);
    const std::size_t hc = cfg.hidden_or_default(cfg.hidden_candidate);
    const std::size_t hi = cfg.hidden_or_default(cfg.hidden_interaction);
    const std::size_t hr = cfg.hidden_or_default(cfg.hidden_readout);

    ModelSpecs specs;
    specs.embedding_rows = cfg.elements.size();
    specs.embedding_cols = cs;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const auto p = layer_prefix(l);
        specs.mlps.push_back({p + ".edge", {2 * cs + 2, hs, cs, false}});
        specs.mlps.push_back({p + ".gate", {cs, hs, 1, true}});
        specs.mlps.push_back({p + ".update", {2 * cs, hs, cs, false}});
        if (cfg.tensorial() && l == 0) {
            specs.mlps.push_back({"init.vector", {cs, hc, 3 * cv, false}});
            specs.mlps.push_back({"init.tensor", {cs, hc, 9 * ct, false}});
        }
        if (cfg.tensorial() && l > 0) {
            specs.mlps.push_back({p + ".vector.candidate", {cs, hc, 3 * cv, false}});
            specs.mlps.push_back({p + ".vector.interaction", {2 * cs, hi, 2 * cv * cv, true}});
            specs.mlps.push_back({p + ".tensor.candidate", {cs, hc, 9 * ct, false}});
            specs.mlps.push_back({p + ".tensor.interaction", {2 * cs, hi, 2 * ct * ct, true}});
        }
    }
    specs.mlps.push_back({"readout", {readout_inputs(cfg), hr, 9, false}});
    return specs;
}

std::size_t parameter_count(const ModelConfig& cfg)
{
    const auto specs = model_specs(cfg);
    std::size_t n = specs.embedding_rows * specs.embedding_cols;
    for (const auto& [name, spec] : specs.mlps)
        n += spec.param_count();
    return n;
}

ad::ParamStore init_model(const ModelConfig& cfg, std::uint64_t seed)
{
    const auto specs = model_specs(cfg);
    Rng rng(seed);
    ad::ParamStore store;
    store.add("embedding", ad::glorot_uniform(specs.embedding_rows, specs.embedding_cols, rng));
    for (const auto& [name, spec] : specs.mlps)
        ad::init_mlp(store, name, spec, rng);
    return store;
}

void check_compatible(const ModelConfig& cfg, const ad::ParamStore& params)
{
    const auto reference = init_model(cfg, 0);
    if (reference.size() != params.size())
        throw DataError("checkpoint holds " + std::to_string(params.size()) + " tensors, model config expects " +
                        std::to_string(reference.size()));
    for (std::size_t k = 0; k < reference.size(); ++k) {
        const auto& want = reference.entries()[k];
        const auto& have = params.entries()[k];
        if (want.name != have.name || want.value.shape != have.value.shape)
            throw DataError("checkpoint tensor '" + have.name + "' " + ad::to_string(have.value.shape) +
                            " does not match model tensor '" + want.name + "' " + ad::to_string(want.value.shape));
    }
}

// ---------------------------------------------------------------------------
// Batching

PreparedMolecule prepare(const Molecule& mol, const ModelConfig& cfg)
{
    validate(mol);
    PreparedMolecule p{mol, build_graph(mol, cfg.cutoff), {}};
    p.frames = frames_for_molecule(p.molecule, p.graph, cfg.frames);
    return p;
}

std::vector<PreparedMolecule> prepare(std::span<const Molecule> mols, const ModelConfig& cfg)
{
    std::vector<PreparedMolecule> out;
    out.reserve(mols.size());
    for (const auto& m : mols)
        out.push_back(prepare(m, cfg));
    return out;
}

GraphBatch make_batch(std::span<const PreparedMolecule* const> mols, const ModelConfig& cfg)
{
    GraphBatch b;
    b.num_molecules = mols.size();
    std::size_t edges = 0;
    for (const auto* m : mols) {
        b.num_nodes += m->molecule.size();
        edges += m->graph.edges.size();
    }
    b.element_row.reserve(b.num_nodes);
    b.node_molecule.reserve(b.num_nodes);
    b.frames.reserve(b.num_nodes);
    b.receivers.reserve(edges);
    b.senders.reserve(edges);
    b.transports.reserve(edges);
    b.edge_invariants = Tensor(Shape{edges, 2});

    std::uint32_t offset = 0;
    std::size_t e = 0;
    for (std::size_t k = 0; k < mols.size(); ++k) {
        const auto& m = *mols[k];
        if (m.frames.size() != m.molecule.size() || m.graph.num_nodes != m.molecule.size())
            throw DataError("molecule '" + m.molecule.molecule_id + "' has inconsistent graph or frames");
        for (std::size_t i = 0; i < m.molecule.size(); ++i) {
            const int z = m.molecule.atomic_numbers[i];
            const auto it = std::find(cfg.elements.begin(), cfg.elements.end(), z);
            if (it == cfg.elements.end())
                throw DataError("unknown element Z=" + std::to_string(z) + " in molecule '" +
                                m.molecule.molecule_id + "'");
            b.element_row.push_back(static_cast<std::uint32_t>(it - cfg.elements.begin()));
            b.node_molecule.push_back(static_cast<std::uint32_t>(k));
            b.frames.push_back(m.frames[i].F);
        }
        for (const auto& edge : m.graph.edges) {
            b.receivers.push_back(offset + edge.receiver);
            b.senders.push_back(offset + edge.sender);
            b.edge_invariants.data[2 * e] = edge.d2;
            b.edge_invariants.data[2 * e + 1] = edge.inv_d2;
            b.transports.push_back(relative_rotation(m.frames[edge.receiver], m.frames[edge.sender]));
            ++e;
        }
        offset += static_cast<std::uint32_t>(m.molecule.size());
    }
    return b;
}

GraphBatch make_batch(std::span<const PreparedMolecule> mols, const ModelConfig& cfg)
{
    std::vector<const PreparedMolecule*> ptrs;
    ptrs.reserve(mols.size());
    for (const auto& m : mols)
        ptrs.push_back(&m);
    return make_batch(std::span<const PreparedMolecule* const>(ptrs), cfg);
}

// ---------------------------------------------------------------------------
// Layers

namespace layers {

namespace {

// First layer of an MLP whose input is [s_i, s_j, extra...] for edge (i, j),
// evaluated as s W_i (per node), s W_j (per node) and extra W_e (per
// edge); the per-node products are gathered onto edges. Identical to
// multiplying the concatenated edge input by W1.
Var pair_first_layer(const BoundParams& p, const std::string& prefix, const GraphBatch& batch, Var s,
                     std::size_t channels, const Var* extra)
{
    const Var w1 = p[prefix + ".w1"];
    const Var own = matmul(s, ad::slice_rows(w1, 0, channels));
    const Var other = matmul(s, ad::slice_rows(w1, channels, 2 * channels));
    Var pre = add(gather_rows(own, batch.receivers), gather_rows(other, batch.senders));
    if (extra)
        pre = add(pre, matmul(*extra, ad::slice_rows(w1, 2 * channels, w1.rows())));
    return add_row(pre, p[prefix + ".b1"]);
}

Var edge_invariants(const GraphBatch& batch, Var anchor)
{
    return anchor.tape()->constant(batch.edge_invariants);
}

} // namespace

Var embed(const ModelConfig& cfg, const BoundParams& p, const GraphBatch& batch)
{
    (void)cfg;
    return gather_rows(p["embedding"], batch.element_row);
}

Var scalar_layer(const ModelConfig& cfg, const BoundParams& p, const GraphBatch& batch, std::size_t layer, Var s)
{
    const auto specs = model_specs(cfg);
    const auto prefix = layer_prefix(layer);
    const std::size_t cs = cfg.scalar_channels;

    const Var inv = edge_invariants(batch, s);
    const Var pre = pair_first_layer(p, prefix + ".edge", batch, s, cs, &inv);
    const Var message = ad::mlp_head(specs[prefix + ".edge"], p, prefix + ".edge", pre);
    const Var gate = ad::mlp_forward(specs[prefix + ".gate"], p, prefix + ".gate", message);
    const Var aggregated = scatter_add_rows(mul_rows(message, gate), batch.receivers, batch.num_nodes);
    const Var update = ad::mlp_forward(specs[prefix + ".update"], p, prefix + ".update", ad::concat({s, aggregated}));
    return add(s, update);
}

std::pair<Var, Var> init_vt(const ModelConfig& cfg, const BoundParams& p, Var s)
{
    if (!cfg.tensorial())
        throw std::logic_error("init_vt called on the scalar baseline");
    const auto specs = model_specs(cfg);
    return {ad::mlp_forward(specs["init.vector"], p, "init.vector", s),
            ad::mlp_forward(specs["init.tensor"], p, "init.tensor", s)};
}

namespace {

// Shared body of the vector and tensor channel updates; `width` is 3 for
// vectors and 9 for rank-2 tensors.
Var equivariant_layer(const ModelConfig& cfg, const BoundParams& p, const GraphBatch& batch, const std::string& prefix,
                      std::size_t channels, std::size_t width, Var s, Var x)
{
    const auto specs = model_specs(cfg);
    const Var candidate = ad::mlp_forward(specs[prefix + ".candidate"], p, prefix + ".candidate", s);
    const Var own = gather_rows(candidate, batch.receivers);
    const Var sent = gather_rows(candidate, batch.senders);
    const Var transported = width == 3 ? rotate_vectors(sent, batch.transports) : conjugate_tensors(sent, batch.transports);
    const Var stacked = ad::concat({own, transported});

    const Var pre = pair_first_layer(p, prefix + ".interaction", batch, s, cfg.scalar_channels, nullptr);
    const Var weights = ad::mlp_head(specs[prefix + ".interaction"], p, prefix + ".interaction", pre);
    const Var mixed = batched_matmul(weights, stacked, channels, 2 * channels, width);
    return add(x, scatter_add_rows(mixed, batch.receivers, batch.num_nodes));
}

} // namespace

Var vector_layer(const ModelConfig& cfg, const BoundParams& p, const GraphBatch& batch, std::size_t layer, Var s, Var v)
{
    return equivariant_layer(cfg, p, batch, layer_prefix(layer) + ".vector", cfg.vector_channels, 3, s, v);
}

Var tensor_layer(const ModelConfig& cfg, const BoundParams& p, const GraphBatch& batch, std::size_t layer, Var s, Var t)
{
    return equivariant_layer(cfg, p, batch, layer_prefix(layer) + ".tensor", cfg.tensor_channels, 9, s, t);
}

Var local_head(const ModelConfig& cfg, const BoundParams& p, const NodeState& state)
{
    const auto specs = model_specs(cfg);
    const Var input = cfg.tensorial() ? ad::concat({state.s, state.v, state.t}) : state.s;
    const Var raw = ad::mlp_forward(specs["readout"], p, "readout", input);
    // (A + A^T) / 2 through a constant 9x9 averaging matrix
    Tensor sym(Shape{9, 9});
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c) {
            sym.data[(3 * r + c) * 9 + (3 * r + c)] += 0.5;
            sym.data[(3 * c + r) * 9 + (3 * r + c)] += 0.5;
        }
    return matmul(raw, raw.tape()->constant(std::move(sym)));
}

Var pool(const ModelConfig& cfg, const GraphBatch& batch, Var local)
{
    const Var global = conjugate_tensors(local, batch.frames);
    const Var pooled = scatter_add_rows(global, batch.node_molecule, batch.num_molecules);
    return cfg.output_scale == 1.0 ? pooled : scale(pooled, cfg.output_scale);
}

} // namespace layers

NodeState run_layers(const ModelConfig& cfg, const BoundParams& p, const GraphBatch& batch)
{
    NodeState state;
    state.s = layers::embed(cfg, p, batch);
    state.s = layers::scalar_layer(cfg, p, batch, 0, state.s);
    if (cfg.tensorial())
        std::tie(state.v, state.t) = layers::init_vt(cfg, p, state.s);
    for (std::size_t l = 1; l < cfg.layers; ++l) {
        state.s = layers::scalar_layer(cfg, p, batch, l, state.s);
        if (cfg.tensorial()) {
            state.v = layers::vector_layer(cfg, p, batch, l, state.s, state.v);
            state.t = layers::tensor_layer(cfg, p, batch, l, state.s, state.t);
        }
    }
    return state;
}

Var forward(const ModelConfig& cfg, const BoundParams& p, const GraphBatch& batch)
{
    const NodeState state = run_layers(cfg, p, batch);
    return layers::pool(cfg, batch, layers::local_head(cfg, p, state));
}

std::vector<Mat3> predict(const ModelConfig& cfg, const ad::ParamStore& params, const GraphBatch& batch)
{
    ad::Tape tape;
    const BoundParams p(tape, params, false);
    const Var out = forward(cfg, p, batch);
    std::vector<Mat3> result(batch.num_molecules);
    const auto d = out.data();
    for (std::size_t k = 0; k < result.size(); ++k)
        std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(9 * k), 9, result[k].e.begin());
    return result;
}

Mat3 predict(const ModelConfig& cfg, const ad::ParamStore& params, const PreparedMolecule& mol)
{
    return predict(cfg, params, make_batch(std::span<const PreparedMolecule>(&mol, 1), cfg)).front();
}

Mat3 predict(const ModelConfig& cfg, const ad::ParamStore& params, const Molecule& mol)
{
    return predict(cfg, params, prepare(mol, cfg));
}

} // namespace svtpol
