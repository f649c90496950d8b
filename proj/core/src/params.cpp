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

#include "svtpol/params.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "svtpol/error.hpp"

namespace svtpol::ad {

Tensor& ParamStore::add(std::string name, Tensor value)
{
    if (index_.count(name))
        throw std::invalid_argument("duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), std::move(value)});
    return entries_.back().value;
}

std::size_t ParamStore::index_of(const std::string& name) const
{
    const auto it = index_.find(name);
    if (it == index_.end())
        throw std::out_of_range("no parameter named '" + name + "'");
    return it->second;
}

std::size_t ParamStore::count() const
{
    std::size_t n = 0;
    for (const auto& e : entries_)
        n += e.value.size();
    return n;
}

ParamStore ParamStore::zeros_like() const
{
    ParamStore out;
    for (const auto& e : entries_)
        out.add(e.name, Tensor(e.value.shape));
    return out;
}

BoundParams::BoundParams(Tape& tape, const ParamStore& store, bool trainable) : store_(&store)
{
    vars_.reserve(store.size());
    for (const auto& e : store.entries())
        vars_.push_back(trainable ? tape.variable(e.value) : tape.constant(e.value));
}

ParamStore BoundParams::gradients() const
{
    ParamStore out;
    for (std::size_t k = 0; k < vars_.size(); ++k) {
        const auto g = vars_[k].grad();
        out.add(store_->entries()[k].name,
                Tensor(store_->entries()[k].value.shape, g));
    }
    return out;
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng)
{
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w(Shape{fan_in, fan_out});
    for (auto& v : w.data)
        v = rng.uniform(-bound, bound);
    return w;
}

void init_mlp(ParamStore& store, const std::string& prefix, const MlpSpec& spec, Rng& rng)
{
    if (spec.in_dim == 0 || spec.hidden_dim == 0 || spec.out_dim == 0)
        throw std::invalid_argument("MLP '" + prefix + "' has a zero dimension");
    store.add(prefix + ".w1", glorot_uniform(spec.in_dim, spec.hidden_dim, rng));
    store.add(prefix + ".b1", Tensor(Shape{spec.hidden_dim}));
    store.add(prefix + ".w2", glorot_uniform(spec.hidden_dim, spec.out_dim, rng));
    store.add(prefix + ".b2", Tensor(Shape{spec.out_dim}));
}

Var mlp_head(const MlpSpec& spec, const BoundParams& params, const std::string& prefix, Var hidden_pre,
             Activation hidden)
{
    const Var h = hidden == Activation::tanh ? tanh(hidden_pre) : logistic(hidden_pre);
    Var out = affine(h, params[prefix + ".w2"], params[prefix + ".b2"]);
    if (spec.output_gate)
        out = logistic(out);
    return out;
}

Var mlp_forward(const MlpSpec& spec, const BoundParams& params, const std::string& prefix, Var input,
                Activation hidden)
{
    if (input.row_size() != spec.in_dim)
        throw ShapeError("MLP '" + prefix + "' expects " + std::to_string(spec.in_dim) + " inputs, got shape " +
                         to_string(input.shape()));
    const Var pre = affine(input, params[prefix + ".w1"], params[prefix + ".b1"]);
    return mlp_head(spec, params, prefix, pre, hidden);
}

AdamState AdamState::for_params(const ParamStore& params)
{
    return AdamState{0, params.zeros_like(), params.zeros_like()};
}

void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state, const AdamConfig& cfg)
{
    auto& p = params.entries();
    const auto& g = grads.entries();
    if (g.size() != p.size() || state.m.size() != p.size() || state.v.size() != p.size())
        throw ShapeError("adam_step: parameter, gradient and state layouts differ");
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (g[k].value.size() != p[k].value.size())
            throw ShapeError("adam_step: gradient of '" + p[k].name + "' has the wrong size");
        if (!std::all_of(g[k].value.data.begin(), g[k].value.data.end(), [](double x) { return std::isfinite(x); }))
            throw NumericError("non-finite gradient for parameter '" + p[k].name + "'");
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t k = 0; k < p.size(); ++k) {
        auto& w = p[k].value.data;
        const auto& gk = g[k].value.data;
        auto& m = state.m.entries()[k].value.data;
        auto& v = state.v.entries()[k].value.data;
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gk[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gk[i] * gk[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

} // namespace svtpol::ad
