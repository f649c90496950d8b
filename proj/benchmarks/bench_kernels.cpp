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

#include "svtpol/frames.hpp"
#include "svtpol/linalg3.hpp"
#include "svtpol/molgraph.hpp"

using namespace svtpol;

static void BM_SymEig3(benchmark::State& state)
{
    Rng rng(1);
    std::vector<Mat3> inputs;
    for (int k = 0; k < 256; ++k) {
        const Mat3 a = random_rotation(rng);
        inputs.push_back(a * Mat3::diag(rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)) * a.transposed());
    }
    std::size_t k = 0;
    for (auto _ : state)
        benchmark::DoNotOptimize(sym_eig3(inputs[k++ % inputs.size()]));
}
BENCHMARK(BM_SymEig3);

static void BM_BuildGraph(benchmark::State& state)
{
    const auto mols = gen_synthetic(64, 3);
    std::size_t k = 0;
    for (auto _ : state)
        benchmark::DoNotOptimize(build_graph(mols[k++ % mols.size()], 4.0));
}
BENCHMARK(BM_BuildGraph);

static void BM_FramesForMolecule(benchmark::State& state)
{
    const auto mols = gen_synthetic(64, 3);
    std::vector<Graph> graphs;
    std::size_t atoms = 0;
    for (const auto& m : mols) {
        graphs.push_back(build_graph(m, 4.0));
        atoms += m.size();
    }
    for (auto _ : state)
        for (std::size_t k = 0; k < mols.size(); ++k)
            benchmark::DoNotOptimize(frames_for_molecule(mols[k], graphs[k]));
    state.SetItemsProcessed(state.iterations() * static_cast<long>(atoms));
}
BENCHMARK(BM_FramesForMolecule);
