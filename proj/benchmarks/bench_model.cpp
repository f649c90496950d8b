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

#include <benchmark/benchmark.h>

#include "svtpol/trainer.hpp"

using namespace svtpol;

namespace {

ModelConfig variant_config(std::int64_t arg)
{
    return arg == 0 ? ModelConfig::desk_tensorial() : ModelConfig::desk_scalar();
}

struct Fixture
{
    ModelConfig cfg;
    ad::ParamStore params;
    std::vector<Molecule> mols;
    GraphBatch batch;
    std::vector<Mat3> truth;

    explicit Fixture(std::int64_t variant)
        : cfg(variant_config(variant)), params(init_model(cfg, 1)), mols(gen_synthetic(32, 5))
    {
        batch = make_batch(prepare(mols, cfg), cfg);
        for (const auto& m : mols)
            truth.push_back(*m.polarizability);
    }
};

} // namespace

// arg 0 = tensorial, 1 = scalar; 32 molecules per batch
static void BM_Forward(benchmark::State& state)
{
    const Fixture f(state.range(0));
    for (auto _ : state)
        benchmark::DoNotOptimize(predict(f.cfg, f.params, f.batch));
    state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_Forward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_TrainStep(benchmark::State& state)
{
    Fixture f(state.range(0));
    ad::AdamState adam = ad::AdamState::for_params(f.params);
    const ad::AdamConfig opt{};
    for (auto _ : state) {
        ad::Tape tape;
        const ad::BoundParams p(tape, f.params);
        tape.backward(metric_loss(Metric::tensor, forward(f.cfg, p, f.batch), f.truth));
        ad::adam_step(f.params, p.gradients(), adam, opt);
    }
    state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_PrepareBatch(benchmark::State& state)
{
    const ModelConfig cfg = ModelConfig::desk_tensorial();
    const auto mols = gen_synthetic(32, 5);
    for (auto _ : state)
        benchmark::DoNotOptimize(make_batch(prepare(mols, cfg), cfg));
}
BENCHMARK(BM_PrepareBatch)->Unit(benchmark::kMicrosecond);
