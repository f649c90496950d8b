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
#include <map>
#include <string>
#include <vector>

#include "svtpol/random.hpp"
#include "svtpol/tape.hpp"

namespace svtpol::ad {

struct NamedTensor
{
    std::string name;
    Tensor value;

    friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// Named trainable tensors, iterated in insertion order.
class ParamStore
{
public:
    /// Throws std::invalid_argument on a duplicate name.
    Tensor& add(std::string name, Tensor value);

    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    std::size_t index_of(const std::string& name) const;
    const Tensor& operator[](const std::string& name) const { return entries_[index_of(name)].value; }
    Tensor& operator[](const std::string& name) { return entries_[index_of(name)].value; }

    std::size_t size() const { return entries_.size(); }
    /// Total number of scalar parameters.
    std::size_t count() const;

    const std::vector<NamedTensor>& entries() const { return entries_; }
    std::vector<NamedTensor>& entries() { return entries_; }

    /// Same names in the same order with zero-filled values.
    ParamStore zeros_like() const;

    friend bool operator==(const ParamStore& a, const ParamStore& b) { return a.entries_ == b.entries_; }

private:
    std::vector<NamedTensor> entries_;
    std::map<std::string, std::size_t> index_;
};

/// Parameters recorded as tape variables for one forward/backward pass.
class BoundParams
{
public:
    /// With `trainable` false the parameters are recorded as constants
    /// and no backward closures are kept (inference only).
    BoundParams(Tape& tape, const ParamStore& store, bool trainable = true);

    Var operator[](const std::string& name) const { return vars_[store_->index_of(name)]; }
    /// d loss / d param after Tape::backward, in the store's layout.
    ParamStore gradients() const;

private:
    const ParamStore* store_;
    std::vector<Var> vars_;
};

/// Two-layer perceptron: out = W2 act(W1 in + b1) + b2, followed by a
/// logistic when output_gate is set. Weights are stored [in, out] and
/// applied to row vectors.
struct MlpSpec
{
    std::size_t in_dim = 0;
    std::size_t hidden_dim = 0;
    std::size_t out_dim = 0;
    bool output_gate = false;

    std::size_t param_count() const { return in_dim * hidden_dim + hidden_dim + hidden_dim * out_dim + out_dim; }
};

enum class Activation { tanh, logistic };

/// Registers `<prefix>.w1`, `.b1`, `.w2`, `.b2`. Weights are drawn
/// uniform in +-sqrt(6 / (fan_in + fan_out)); biases start at zero.
void init_mlp(ParamStore& store, const std::string& prefix, const MlpSpec& spec, Rng& rng);

/// Glorot-uniform fill of an arbitrary [fan_in, fan_out] matrix.
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// Input [n, in_dim] -> [n, out_dim].
Var mlp_forward(const MlpSpec& spec, const BoundParams& params, const std::string& prefix, Var input,
                Activation hidden = Activation::tanh);

/// Output of a two-layer perceptron given an already-computed first
/// layer pre-activation [n, hidden_dim] (bias included).
Var mlp_head(const MlpSpec& spec, const BoundParams& params, const std::string& prefix, Var hidden_pre,
             Activation hidden = Activation::tanh);

// ---------------------------------------------------------------------------

struct AdamConfig
{
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState
{
    std::uint64_t step = 0;
    ParamStore m;
    ParamStore v;

    static AdamState for_params(const ParamStore& params);
    friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One bias-corrected Adam update. Throws NumericError naming the first
/// parameter with a non-finite gradient; nothing is modified in that case.
void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state, const AdamConfig& cfg);

} // namespace svtpol::ad
