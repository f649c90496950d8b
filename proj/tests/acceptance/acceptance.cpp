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

// Acceptance checks. With no arguments every criterion runs; otherwise
// only the listed numbers. One line per criterion:
//   criterion N: PASS|FAIL  <what>  (<details>; <seconds> s of <limit> s)
// A criterion that exceeds its time limit fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "oracle/reference.hpp"
#include "svtpol/equiharness.hpp"
#include "svtpol/frames.hpp"
#include "svtpol/trainer.hpp"

using namespace svtpol;
namespace fs = std::filesystem;

namespace {

struct Outcome
{
    bool pass = false;
    std::string details;
};

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// ---------------------------------------------------------------------------
// 1, 2: equivariance on 50 synthetic molecules with 64 rotations

constexpr std::size_t equi_molecules = 50;
constexpr std::size_t equi_rotations = 64;
constexpr std::uint64_t equi_data_seed = 101;
constexpr std::uint64_t equi_rotation_seed = 202;

std::vector<std::pair<std::string, ModelConfig>> desk_models()
{
    return {{"tensorial", ModelConfig::desk_tensorial()}, {"scalar", ModelConfig::desk_scalar()}};
}

Outcome model_equivariance_check()
{
    const auto mols = gen_synthetic(equi_molecules, equi_data_seed);
    Outcome o{true, ""};
    for (const auto& [name, cfg] : desk_models()) {
        const auto params = init_model(cfg, 1);
        const EquiReport r = model_equivariance(cfg, params, mols, equi_rotations, equi_rotation_seed);
        o.pass = o.pass && r.mean <= 1e-9;
        o.details += name + " mean " + fmt("%.3e", r.mean) + " +- " + fmt("%.2e", r.std) + "; ";
    }
    return o;
}

Outcome pipeline_equivariance_check()
{
    const auto mols = gen_synthetic(equi_molecules, equi_data_seed);
    Outcome o{true, ""};
    for (const auto& [name, cfg] : desk_models()) {
        const auto params = init_model(cfg, 1);
        const EquiReport model = model_equivariance(cfg, params, mols, equi_rotations, equi_rotation_seed);
        const EquiReport pipe = pipeline_equivariance(cfg, params, mols, equi_rotations, equi_rotation_seed);
        const bool regular_ok = pipe.regular_molecules > 0 && pipe.regular_mean <= 1e-6;
        const bool ordered = pipe.mean >= model.mean;
        o.pass = o.pass && regular_ok && ordered;
        o.details += name + " pipeline " + fmt("%.3e", pipe.mean) + " (regular " +
                     std::to_string(pipe.regular_molecules) + "/" + std::to_string(mols.size()) + " at " +
                     fmt("%.3e", pipe.regular_mean) + ") vs model " + fmt("%.3e", model.mean) + "; ";
    }
    return o;
}

// ---------------------------------------------------------------------------
// 3: finite-difference gradient check of every parameter tensor

double batch_loss(const ModelConfig& cfg, const ad::ParamStore& params, const GraphBatch& batch,
                  const std::vector<Mat3>& truth)
{
    ad::Tape tape;
    const ad::BoundParams p(tape, params, false);
    return metric_loss(Metric::frob, forward(cfg, p, batch), truth).item();
}

Outcome gradient_check()
{
    // first two molecules of at most six atoms from a seeded set
    std::vector<Molecule> pair;
    for (const auto& m : gen_synthetic(200, 303))
        if (m.size() <= 6 && pair.size() < 2)
            pair.push_back(m);
    Outcome o{true, ""};
    const double h = 1e-5;
    for (const auto& [name, cfg0] : desk_models()) {
        ModelConfig cfg = cfg0;
        cfg.output_scale = per_atom_scale(pair);
        ad::ParamStore params = init_model(cfg, 4);
        const auto prepared = prepare(pair, cfg);
        const GraphBatch batch = make_batch(prepared, cfg);
        std::vector<Mat3> truth;
        for (const auto& m : pair)
            truth.push_back(*m.polarizability);

        ad::Tape tape;
        const ad::BoundParams bound(tape, params);
        tape.backward(metric_loss(Metric::frob, forward(cfg, bound, batch), truth));
        const ad::ParamStore grads = bound.gradients();

        double worst = 0.0;
        std::string worst_name;
        for (std::size_t t = 0; t < params.size(); ++t) {
            auto& values = params.entries()[t].value.data;
            const auto& g = grads.entries()[t].value.data;
            double diff = 0, na = 0, nf = 0;
            for (std::size_t k = 0; k < values.size(); ++k) {
                const double keep = values[k];
                values[k] = keep + h;
                const double fp = batch_loss(cfg, params, batch, truth);
                values[k] = keep - h;
                const double fm = batch_loss(cfg, params, batch, truth);
                values[k] = keep;
                const double fd = (fp - fm) / (2 * h);
                diff += (g[k] - fd) * (g[k] - fd);
                na += g[k] * g[k];
                nf += fd * fd;
            }
            const double denom = std::sqrt(std::max(na, nf));
            const double rel = denom > 0 ? std::sqrt(diff) / denom : 0.0;
            if (rel > worst) {
                worst = rel;
                worst_name = params.entries()[t].name;
            }
        }
        o.pass = o.pass && worst <= 1e-5;
        o.details += name + " " + std::to_string(params.size()) + " tensors, worst " + fmt("%.2e", worst) + " (" +
                     worst_name + "); ";
    }
    return o;
}

// ---------------------------------------------------------------------------
// 4: frame properties on random neighbourhoods

double dyadic(double x) { return std::ldexp(std::round(std::ldexp(x, 30)), -30); }

Outcome frame_properties()
{
    Rng rng(404);
    std::size_t regular = 0, ortho_fail = 0, det_fail = 0, translation_fail = 0, rotation_fail = 0;
    double worst_rotation = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        Molecule m;
        m.molecule_id = "n" + std::to_string(trial);
        m.conformer_id = "0";
        const std::size_t neighbours = 1 + rng.index(8);
        for (std::size_t k = 0; k <= neighbours; ++k) {
            m.atomic_numbers.push_back(synthetic_elements[rng.index(synthetic_elements.size())]);
            m.positions.push_back({dyadic(rng.uniform(-2, 2)), dyadic(rng.uniform(-2, 2)), dyadic(rng.uniform(-2, 2))});
        }
        const Graph g = build_graph(m, 100.0);
        const Frame f = build_frame(m, g, 0);
        if (fixtures::orthonormality_error(f.F) > 1e-12)
            ++ortho_fail;
        if (std::fabs(f.F.det() - 1) > 1e-10)
            ++det_fail;

        const Vec3 t{dyadic(rng.uniform(-8, 8)), dyadic(rng.uniform(-8, 8)), dyadic(rng.uniform(-8, 8))};
        const Molecule shifted = transformed(m, Mat3::identity(), t);
        const Frame fs = build_frame(shifted, build_graph(shifted, 100.0), 0);
        if (!(fs.F == f.F && fs.degenerate == f.degenerate && fs.fallback_used == f.fallback_used))
            ++translation_fail;

        const Mat3 r = random_rotation(rng);
        if (f.regular()) {
            ++regular;
            const Molecule moved = transformed(m, r);
            const Frame fr = build_frame(moved, build_graph(moved, 100.0), 0);
            const double err = fixtures::max_abs_diff(fr.F, r * f.F);
            worst_rotation = std::max(worst_rotation, err);
            if (err > 1e-9)
                ++rotation_fail;
        }
    }
    Outcome o;
    o.pass = ortho_fail + det_fail + translation_fail + rotation_fail == 0;
    o.details = "1000 neighbourhoods, " + std::to_string(regular) + " regular; failures: orthonormality " +
                std::to_string(ortho_fail) + ", det " + std::to_string(det_fail) + ", bitwise translation " +
                std::to_string(translation_fail) + ", rotation " + std::to_string(rotation_fail) + " (worst " + fmt("%.2e", worst_rotation) + ")";
    return o;
}

// ---------------------------------------------------------------------------
// 5: scalar baseline vs tensorial on 500 synthetic molecules

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome ordering_check()
{
    const auto data = gen_synthetic(500, 505);
    TrainConfig base;
    base.epochs = 300;
    base.batch_size = 32;
    base.lr = 1e-3;
    base.loss = Metric::tensor;
    base.split_seed = 7;
    base.eval_every = 5;
    base.threads = 1;
    const auto test = select_split(data, base.split_seed, Split::test);

    const ModelConfig tensorial = ModelConfig::desk_tensorial(), scalar = ModelConfig::desk_scalar();
    const double pt = static_cast<double>(parameter_count(tensorial));
    const double ps = static_cast<double>(parameter_count(scalar));
    const bool matched = std::fabs(ps / pt - 1) <= 0.10;

    std::map<std::string, std::vector<double>> maes;
    for (std::uint64_t seed : {1, 2, 3})
        for (const auto& [name, cfg] : desk_models()) {
            TrainConfig tc = base;
            tc.seed = seed;
            const TrainResult r = train(cfg, tc, data);
            const double mae = evaluate(r.model, r.params, test).mae[Metric::tensor];
            maes[name].push_back(mae);
            std::cout << "  " << name << " seed " << seed << ": best epoch " << r.best_epoch << ", test tensor_mae "
                      << fmt("%.4f", mae) << std::endl;
        }
    const double mt = median(maes["tensorial"]), ms = median(maes["scalar"]);
    Outcome o;
    o.pass = matched && mt <= ms;
    o.details = "median test tensor_mae tensorial " + fmt("%.4f", mt) + " vs scalar " + fmt("%.4f", ms) +
                "; parameters " + std::to_string(static_cast<long>(pt)) + " vs " +
                std::to_string(static_cast<long>(ps));
    return o;
}

// ---------------------------------------------------------------------------
// 6: overfit four molecules

Outcome overfit_check()
{
    const auto all = gen_synthetic(4, 606);
    const std::vector<Molecule> four(all.begin(), all.end());
    TrainConfig cfg;
    cfg.epochs = 2000;  // one step per epoch
    cfg.batch_size = 4;
    cfg.lr = 1e-3;
    cfg.seed = 6;
    cfg.threads = 1;
    const TrainResult r = train(ModelConfig::desk_tensorial(), cfg, four, {});
    const double initial = evaluate(r.model, init_model(r.model, cfg.seed), four).mae[Metric::tensor];
    const double final_mae = evaluate(r.model, r.params, four).mae[Metric::tensor];
    Outcome o;
    o.pass = final_mae < 0.01 * initial;
    o.details = "train tensor_mae " + fmt("%.4g", initial) + " -> " + fmt("%.4g", final_mae) + " (" +
                fmt("%.3g", 100 * final_mae / initial) + "% of initial) after 2000 steps";
    return o;
}

// ---------------------------------------------------------------------------
// 7: parameter counts at full-width presets

Outcome parameter_counts()
{
    const auto t = static_cast<double>(parameter_count(ModelConfig::paper_tensorial()));
    const auto s = static_cast<double>(parameter_count(ModelConfig::paper_scalar()));
    const double dt = t / 5477145.0 - 1, ds = s / 5471127.0 - 1;
    Outcome o;
    o.pass = std::fabs(dt) <= 0.05 && std::fabs(ds) <= 0.05;
    o.details = "tensorial " + std::to_string(static_cast<long>(t)) + " (" + fmt("%+.2f", 100 * dt) +
                "%), scalar " + std::to_string(static_cast<long>(s)) + " (" + fmt("%+.2f", 100 * ds) + "%)";
    return o;
}

// ---------------------------------------------------------------------------
// 8: layers and metrics against straight-line references

double max_diff(std::span<const double> lib, const std::vector<oracle::Row>& ref)
{
    double worst = 0;
    std::size_t k = 0;
    for (const auto& r : ref)
        for (double v : r)
            worst = std::max(worst, std::fabs(lib[k++] - v));
    return worst;
}

ad::Tensor rows_tensor(const std::vector<oracle::Row>& rows)
{
    ad::Tensor t(ad::Shape{rows.size(), rows.front().size()});
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy(rows[r].begin(), rows[r].end(), t.data.begin() + static_cast<long>(r * rows[r].size()));
    return t;
}

std::vector<oracle::Row> random_rows(std::size_t n, std::size_t width, Rng& rng)
{
    std::vector<oracle::Row> out(n, oracle::Row(width));
    for (auto& r : out)
        for (auto& v : r)
            v = rng.uniform(-1, 1);
    return out;
}

Outcome oracle_equivalence()
{
    double worst_scalar = 0, worst_vector = 0, worst_tensor = 0, worst_metric = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const ModelConfig cfg = ModelConfig::desk_tensorial();
        ad::ParamStore params = init_model(cfg, seed);
        Rng rng(seed);
        for (auto& e : params.entries())
            if (e.value.shape.size() == 1)
                for (auto& v : e.value.data)
                    v = rng.uniform(-0.3, 0.3);
        const Molecule mol = fixtures::random_cloud(3, seed, 2.0);
        const PreparedMolecule prepared = prepare(mol, cfg);
        const GraphBatch batch = make_batch(std::span<const PreparedMolecule>(&prepared, 1), cfg);
        std::vector<Mat3> frames;
        for (const auto& f : prepared.frames)
            frames.push_back(f.F);
        const auto s_in = random_rows(3, cfg.scalar_channels, rng);
        const auto v_in = random_rows(3, 3 * cfg.vector_channels, rng);
        const auto t_in = random_rows(3, 9 * cfg.tensor_channels, rng);

        ad::Tape tape;
        const ad::BoundParams p(tape, params, false);
        const ad::Var s = tape.constant(rows_tensor(s_in));
        const std::size_t layer = 1 + seed % (cfg.layers - 1);
        const std::string pre = "layer" + std::to_string(layer);
        worst_scalar = std::max(worst_scalar, max_diff(layers::scalar_layer(cfg, p, batch, layer, s).data(),
                                                       oracle::scalar_layer(params, mol, cfg.cutoff, layer, s_in)));
        worst_vector = std::max(
            worst_vector,
            max_diff(layers::vector_layer(cfg, p, batch, layer, s, tape.constant(rows_tensor(v_in))).data(),
                     oracle::equivariant_layer(params, pre + ".vector", mol, cfg.cutoff, frames, cfg.vector_channels, 3,
                                               s_in, v_in)));
        worst_tensor = std::max(
            worst_tensor,
            max_diff(layers::tensor_layer(cfg, p, batch, layer, s, tape.constant(rows_tensor(t_in))).data(),
                     oracle::equivariant_layer(params, pre + ".tensor", mol, cfg.cutoff, frames, cfg.tensor_channels, 9,
                                               s_in, t_in)));

        for (int k = 0; k < 10; ++k) {
            const Mat3 a = 50.0 * fixtures::random_symmetric(rng), b = 50.0 * fixtures::random_symmetric(rng);
            const auto oa = oracle::to_m3(a), ob = oracle::to_m3(b);
            worst_metric = std::max({worst_metric, std::fabs(tensor_mae(a, b) - oracle::tensor_mae(oa, ob)),
                                     std::fabs(trace_mae(a, b) - oracle::trace_mae(oa, ob)),
                                     std::fabs(aniso_mae(a, b) - oracle::aniso_mae(oa, ob)),
                                     std::fabs(frob_mae(a, b) - oracle::frob_mae(oa, ob))});
        }
    }
    Outcome o;
    o.pass = std::max({worst_scalar, worst_vector, worst_tensor, worst_metric}) <= 1e-12;
    o.details = "max abs difference: scalar " + fmt("%.2e", worst_scalar) + ", vector " + fmt("%.2e", worst_vector) +
                ", tensor " + fmt("%.2e", worst_tensor) + ", metrics " + fmt("%.2e", worst_metric);
    return o;
}

// ---------------------------------------------------------------------------
// 9: two CLI runs with the same seeds

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism_check()
{
#ifndef SVTPOL_CLI_PATH
    return {false, "command-line tool not built"};
#else
    const fs::path dir = fs::path(SVTPOL_SCRATCH_DIR) / "determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string cli = SVTPOL_CLI_PATH;
    const auto sh = [](const std::string& cmd) { return std::system((cmd + " > /dev/null").c_str()); };
    if (sh(cli + " gen-synthetic --n 60 --seed 9 --out " + (dir / "data.tsv").string()) != 0)
        return {false, "gen-synthetic failed"};
    for (const char* run : {"a", "b"}) {
        const std::string cmd = cli + " train --data " + (dir / "data.tsv").string() +
                                " --preset desk --model tensorial --epochs 3 --batch 8 --lr 1e-3 --seed 4"
                                " --split-seed 2 --threads 1 --out-ckpt " +
                                (dir / (std::string(run) + ".ck")).string() + " --history " +
                                (dir / (std::string(run) + ".hist")).string();
        if (sh(cmd) != 0)
            return {false, std::string("training run ") + run + " failed"};
    }
    const std::string ha = slurp(dir / "a.hist"), hb = slurp(dir / "b.hist");
    const std::string ca = slurp(dir / "a.ck"), cb = slurp(dir / "b.ck");
    Outcome o;
    o.pass = !ha.empty() && !ca.empty() && ha == hb && ca == cb;
    o.details = "history " + std::string(ha == hb ? "identical" : "differs") + " (" + std::to_string(ha.size()) +
                " bytes), checkpoint " + (ca == cb ? "identical" : "differs") + " (" + std::to_string(ca.size()) +
                " bytes)";
    return o;
#endif
}

struct Criterion
{
    int id;
    const char* what;
    double limit_s;
    std::function<Outcome()> check;
};

} // namespace

int main(int argc, char** argv)
{
    const std::vector<Criterion> criteria{
        {1, "model equivariance, 50 molecules x 64 rotations", 120, model_equivariance_check},
        {2, "pipeline equivariance ordering", 180, pipeline_equivariance_check},
        {3, "gradients vs central differences", 300, gradient_check},
        {4, "frame properties on 1000 neighbourhoods", 30, frame_properties},
        {5, "tensorial <= scalar baseline test tensor_mae, 3 seeds", 3600, ordering_check},
        {6, "overfit four molecules", 300, overfit_check},
        {7, "parameter counts at full-width presets", 1, parameter_counts},
        {8, "layers and metrics vs straight-line references", 10, oracle_equivalence},
        {9, "byte-identical CLI reruns", 300, determinism_check},
    };
    std::vector<int> selected;
    for (int k = 1; k < argc; ++k)
        selected.push_back(std::atoi(argv[k]));

    int failures = 0;
    for (const auto& c : criteria) {
        if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end())
            continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        while (o.details.ends_with("; "))
            o.details.resize(o.details.size() - 2);
        const bool in_time = seconds <= c.limit_s;
        const bool pass = o.pass && in_time;
        std::cout << "criterion " << c.id << ": " << (pass ? "PASS" : "FAIL") << "  " << c.what << "  (" << o.details
                  << "; " << fmt("%.1f", seconds) << " s of " << fmt("%.0f", c.limit_s) << " s"
                  << (in_time ? "" : ", over time") << ")" << std::endl;
        if (!pass)
            ++failures;
    }
    return failures == 0 ? 0 : 1;
}
