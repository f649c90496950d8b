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

#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "svtpol/equiharness.hpp"
#include "svtpol/error.hpp"
#include "svtpol/trainer.hpp"

namespace svtpol::cli {

namespace fs = std::filesystem;

namespace {

std::string real_str(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

fs::path default_data_path()
{
    const char* dir = std::getenv(data_dir_env);
    return dir && *dir ? fs::path(dir) / "dataset.tsv" : fs::path("dataset.tsv");
}

std::size_t default_threads()
{
    const auto n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : n;
}

struct GenOptions
{
    std::size_t n = 500;
    std::uint64_t seed = 0;
    std::string out;
};

struct TrainOptions
{
    std::string data;
    std::string model = "tensorial";
    std::string preset = "paper";
    std::optional<std::size_t> layers, cs, cv, ct, hidden_scalar, hidden_candidate, hidden_interaction,
        hidden_readout;
    double cutoff = 4.0;
    double lr = 1e-4;
    std::size_t epochs = 1000;
    std::size_t batch = 32;
    std::string loss = "tensor";
    std::uint64_t seed = 0;
    std::uint64_t split_seed = 0;
    std::size_t eval_every = 1;
    std::size_t threads = default_threads();
    bool no_fit_scale = false;
    std::string out_ckpt;
    std::string history;
};

struct EvalOptions
{
    std::string ckpt;
    std::string data;
    std::string split = "test";
    std::optional<std::uint64_t> split_seed;
};

struct EquiOptions
{
    std::string ckpt;
    std::string data;
    std::string mode = "model";
    std::size_t rotations = 64;
    std::uint64_t seed = 0;
    std::optional<double> threshold;
};

struct FramesOptions
{
    std::string data;
    std::string mol_id;
    std::string conformer;
    double cutoff = 4.0;
};

std::vector<Molecule> load_data(const std::string& flag)
{
    return read_dataset(flag.empty() ? default_data_path() : fs::path(flag));
}

ModelConfig model_config(const TrainOptions& o)
{
    const Variant variant = variant_from_string(o.model);
    ModelConfig cfg;
    if (o.preset == "paper")
        cfg = variant == Variant::tensorial ? ModelConfig::paper_tensorial() : ModelConfig::paper_scalar();
    else if (o.preset == "desk")
        cfg = variant == Variant::tensorial ? ModelConfig::desk_tensorial() : ModelConfig::desk_scalar();
    else
        throw std::invalid_argument("unknown preset '" + o.preset + "' (expected paper or desk)");
    auto apply = [](std::size_t& dst, const std::optional<std::size_t>& v) {
        if (v)
            dst = *v;
    };
    apply(cfg.layers, o.layers);
    apply(cfg.scalar_channels, o.cs);
    apply(cfg.vector_channels, o.cv);
    apply(cfg.tensor_channels, o.ct);
    apply(cfg.hidden_scalar, o.hidden_scalar);
    apply(cfg.hidden_candidate, o.hidden_candidate);
    apply(cfg.hidden_interaction, o.hidden_interaction);
    apply(cfg.hidden_readout, o.hidden_readout);
    cfg.cutoff = o.cutoff;
    cfg.validate();
    return cfg;
}

TrainConfig train_config(const TrainOptions& o)
{
    TrainConfig cfg;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch;
    cfg.lr = o.lr;
    cfg.loss = metric_from_string(o.loss);
    cfg.seed = o.seed;
    cfg.split_seed = o.split_seed;
    cfg.eval_every = o.eval_every;
    cfg.threads = o.threads;
    cfg.fit_output_scale = !o.no_fit_scale;
    cfg.validate();
    return cfg;
}

void echo_config(std::ostream& out, const std::vector<std::pair<std::string, std::string>>& kv)
{
    for (const auto& [k, v] : kv)
        out << "# " << k << " = " << v << '\n';
}

int cmd_gen(const GenOptions& o, std::ostream& out)
{
    const auto mols = gen_synthetic(o.n, o.seed);
    const fs::path path = o.out.empty() ? default_data_path() : fs::path(o.out);
    write_dataset(path, mols);
    out << "wrote " << mols.size() << " records to " << path.string() << '\n';
    return exit_ok;
}

int cmd_train(const TrainOptions& o, std::ostream& out)
{
    const ModelConfig model = model_config(o);
    const TrainConfig cfg = train_config(o);
    const auto data = load_data(o.data);
    out << "# parameters = " << parameter_count(model) << '\n';
    const TrainResult result = train(model, cfg, data);
    echo_config(out, result.checkpoint().config);

    save_checkpoint(fs::path(o.out_ckpt), result.checkpoint());
    if (!o.history.empty()) {
        std::ofstream h(o.history, std::ios::binary);
        if (!h)
            throw DataError("cannot write history '" + o.history + "'");
        write_history(h, result.history);
        if (!h)
            throw DataError("error writing history '" + o.history + "'");
    }
    write_history(out, result.history);
    out << "best_epoch\t" << result.best_epoch << '\n';
    out << "checkpoint\t" << o.out_ckpt << '\n';
    return exit_ok;
}

int cmd_eval(const EvalOptions& o, std::ostream& out)
{
    const Checkpoint ckpt = load_checkpoint(fs::path(o.ckpt));
    const ModelConfig model = model_from_checkpoint(ckpt);
    const auto data = load_data(o.data);

    std::vector<Molecule> selected;
    if (o.split == "all") {
        selected = data;
    } else {
        const Split which = split_from_string(o.split);
        std::uint64_t seed = 0;
        if (o.split_seed)
            seed = *o.split_seed;
        else
            for (const auto& [k, v] : ckpt.config)
                if (k == "train.split_seed")
                    seed = std::stoull(v);
        selected = select_split(data, seed, which);
    }
    const MetricReport report = evaluate(model, ckpt.params, selected);

    out << "# split = " << o.split << ", molecules = " << report.molecules << '\n';
    out << std::left << std::setw(10) << "metric" << std::setw(26) << "mae" << "ground_truth_scale" << '\n';
    for (auto m : all_metrics)
        out << std::left << std::setw(10) << to_string(m) << std::setw(26) << real_str(report.mae[m])
            << real_str(report.scale[m]) << '\n';
    return exit_ok;
}

int cmd_equi(const EquiOptions& o, std::ostream& out)
{
    const EquiMode mode = equi_mode_from_string(o.mode);
    const double threshold = o.threshold.value_or(mode == EquiMode::model ? 1e-6 : 1e-3);
    const Checkpoint ckpt = load_checkpoint(fs::path(o.ckpt));
    const ModelConfig model = model_from_checkpoint(ckpt);
    const auto data = load_data(o.data);
    const EquiReport report = check_equivariance(mode, model, ckpt.params, data, o.rotations, o.seed);
    write_report(out, report);
    const bool pass = report.mean < threshold;
    out << "threshold\t" << real_str(threshold) << '\n' << "result\t" << (pass ? "pass" : "fail") << '\n';
    return pass ? exit_ok : exit_threshold;
}

int cmd_frames(const FramesOptions& o, std::ostream& out)
{
    const auto data = load_data(o.data);
    bool found = false;
    for (const auto& mol : data) {
        if (mol.molecule_id != o.mol_id || (!o.conformer.empty() && mol.conformer_id != o.conformer))
            continue;
        found = true;
        const Graph graph = build_graph(mol, o.cutoff);
        const auto frames = frames_for_molecule(mol, graph);
        const FrameSummary summary = summarize(frames);
        out << "# molecule " << mol.molecule_id << " conformer " << mol.conformer_id << " atoms " << mol.size()
            << " cutoff " << real_str(o.cutoff) << " degenerate " << summary.degenerate << " irregular "
            << summary.irregular << '\n';
        out << "# atom\tZ\tdegree\tdegenerate\tfallback\tmu_norm\tlambda1\tlambda2\tlambda3\tdet"
               "\tF00\tF01\tF02\tF10\tF11\tF12\tF20\tF21\tF22\n";
        for (std::size_t i = 0; i < frames.size(); ++i) {
            const Frame& f = frames[i];
            out << i << '\t' << mol.atomic_numbers[i] << '\t' << graph.degree(i) << '\t' << (f.degenerate ? 1 : 0)
                << '\t' << to_string(f.fallback_used) << '\t' << real_str(norm(f.mu));
            for (double l : f.eigenvalues)
                out << '\t' << real_str(l);
            out << '\t' << real_str(f.F.det());
            for (double x : f.F.e)
                out << '\t' << real_str(x);
            out << '\n';
        }
    }
    if (!found)
        throw DataError("no molecule with id '" + o.mol_id + "'" +
                        (o.conformer.empty() ? std::string() : " and conformer '" + o.conformer + "'"));
    return exit_ok;
}

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Replaces `--config FILE` by `--key=value` flags placed right after the
// subcommand, so explicit flags given later take precedence.
std::vector<std::string> expand_config(std::vector<std::string> args)
{
    std::string file;
    std::size_t at = args.size();
    for (std::size_t k = 0; k < args.size(); ++k) {
        if (args[k] == "--config" && k + 1 < args.size()) {
            file = args[k + 1];
            at = k;
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(k), args.begin() + static_cast<std::ptrdiff_t>(k + 2));
            break;
        }
        if (args[k].starts_with("--config=")) {
            file = args[k].substr(9);
            at = k;
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(k));
            break;
        }
    }
    if (at == args.size() && file.empty())
        return args;
    std::ifstream in(file);
    if (!in)
        throw DataError("cannot open config file '" + file + "'");
    std::vector<std::string> flags;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line.front() == '#')
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError("config file '" + file + "' line " + std::to_string(line_no) + ": expected key=value");
        flags.push_back("--" + trim(line.substr(0, eq)) + "=" + trim(line.substr(eq + 1)));
    }
    const auto insert_at = args.empty() ? args.end() : args.begin() + 1;
    args.insert(insert_at, flags.begin(), flags.end());
    return args;
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Local-frame equivariant polarizability models"};
    app.name("svtpol");
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    std::string config_file;
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    const std::string data_help = std::string("Dataset file (default $") + data_dir_env + "/dataset.tsv)";

    GenOptions gen;
    auto* gen_cmd = app.add_subcommand("gen-synthetic", "Write a labelled synthetic dataset");
    gen_cmd->add_option("--config", config_file, "File of key=value lines; flags on the command line win");
    gen_cmd->add_option("--n", gen.n, "Number of molecules")->capture_default_str()->check(CLI::PositiveNumber);
    gen_cmd->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
    gen_cmd->add_option("--out", gen.out, data_help);

    TrainOptions tr;
    auto* train_cmd = app.add_subcommand("train", "Train a model");
    train_cmd->add_option("--config", config_file, "File of key=value lines; flags on the command line win");
    train_cmd->add_option("--data", tr.data, data_help);
    train_cmd->add_option("--model", tr.model, "Model variant")
        ->capture_default_str()
        ->check(CLI::IsMember({"scalar", "tensorial"}));
    train_cmd->add_option("--preset", tr.preset, "Width preset the other flags override")
        ->capture_default_str()
        ->check(CLI::IsMember({"paper", "desk"}));
    train_cmd->add_option("--layers", tr.layers, "Message-passing layers");
    train_cmd->add_option("--cs", tr.cs, "Scalar channels");
    train_cmd->add_option("--cv", tr.cv, "Vector channels");
    train_cmd->add_option("--ct", tr.ct, "Tensor channels");
    train_cmd->add_option("--hidden-scalar", tr.hidden_scalar, "Hidden width of the scalar MLPs");
    train_cmd->add_option("--hidden-candidate", tr.hidden_candidate, "Hidden width of the candidate MLPs");
    train_cmd->add_option("--hidden-interaction", tr.hidden_interaction, "Hidden width of the mixing MLPs");
    train_cmd->add_option("--hidden-readout", tr.hidden_readout, "Hidden width of the readout MLP");
    train_cmd->add_option("--cutoff", tr.cutoff, "Cutoff radius, angstrom")->capture_default_str();
    train_cmd->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
    train_cmd->add_option("--epochs", tr.epochs, "Training epochs")->capture_default_str();
    train_cmd->add_option("--batch", tr.batch, "Molecules per batch")->capture_default_str();
    train_cmd->add_option("--loss", tr.loss, "Training metric")
        ->capture_default_str()
        ->check(CLI::IsMember({"tensor", "trace", "aniso", "frob"}));
    train_cmd->add_option("--seed", tr.seed, "Initialization and shuffling seed")->capture_default_str();
    train_cmd->add_option("--split-seed", tr.split_seed, "Train/val/test split seed")->capture_default_str();
    train_cmd->add_option("--eval-every", tr.eval_every, "Validate every k epochs")->capture_default_str();
    train_cmd->add_option("--threads", tr.threads, "Worker threads per batch")->capture_default_str();
    train_cmd->add_flag("--no-fit-scale", tr.no_fit_scale, "Keep output scale 1");
    train_cmd->add_option("--out-ckpt", tr.out_ckpt, "Checkpoint to write")->required();
    train_cmd->add_option("--history", tr.history, "Per-epoch history file");

    EvalOptions ev;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval_cmd->add_option("--config", config_file, "File of key=value lines; flags on the command line win");
    eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
    eval_cmd->add_option("--data", ev.data, data_help);
    eval_cmd->add_option("--split", ev.split, "Split to evaluate")
        ->capture_default_str()
        ->check(CLI::IsMember({"train", "val", "test", "all"}));
    eval_cmd->add_option("--split-seed", ev.split_seed, "Split seed (default: the checkpoint's)");

    EquiOptions eq;
    auto* equi_cmd = app.add_subcommand("check-equivariance", "Rotation test of a checkpoint");
    equi_cmd->add_option("--config", config_file, "File of key=value lines; flags on the command line win");
    equi_cmd->add_option("--ckpt", eq.ckpt, "Checkpoint")->required();
    equi_cmd->add_option("--data", eq.data, data_help);
    equi_cmd->add_option("--mode", eq.mode, "model: rotate frames with positions; pipeline: recompute frames")
        ->capture_default_str()
        ->check(CLI::IsMember({"model", "pipeline"}));
    equi_cmd->add_option("--rotations", eq.rotations, "Random rotations")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    equi_cmd->add_option("--seed", eq.seed, "Rotation seed")->capture_default_str();
    equi_cmd->add_option("--threshold", eq.threshold, "Pass if mean rel_frob is below (default 1e-6 model, 1e-3 pipeline)");

    FramesOptions fr;
    auto* frames_cmd = app.add_subcommand("inspect-frames", "Dump the local frames of one molecule");
    frames_cmd->add_option("--config", config_file, "File of key=value lines; flags on the command line win");
    frames_cmd->add_option("--data", fr.data, data_help);
    frames_cmd->add_option("--mol-id", fr.mol_id, "Molecule id")->required();
    frames_cmd->add_option("--conformer", fr.conformer, "Conformer id (default: all)");
    frames_cmd->add_option("--cutoff", fr.cutoff, "Cutoff radius, angstrom")->capture_default_str();

    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        args = expand_config(std::move(args));
    } catch (const DataError& e) {
        err << "error: " << e.what() << '\n';
        return exit_data;
    }
    std::reverse(args.begin(), args.end());

    try {
        app.parse(std::move(args));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return exit_usage;
    }

    try {
        if (*gen_cmd)
            return cmd_gen(gen, out);
        if (*train_cmd)
            return cmd_train(tr, out);
        if (*eval_cmd)
            return cmd_eval(ev, out);
        if (*equi_cmd)
            return cmd_equi(eq, out);
        if (*frames_cmd)
            return cmd_frames(fr, out);
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_data;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return exit_data;
    }
    return exit_usage;
}

} // namespace svtpol::cli
