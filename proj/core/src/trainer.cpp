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

#include "svtpol/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <numeric>
#include <ostream>
#include <thread>

#include "svtpol/error.hpp"

namespace svtpol {

void TrainConfig::validate() const
{
    if (batch_size == 0)
        throw std::invalid_argument("batch size must be positive");
    if (!(lr >= 0.0) || !std::isfinite(lr))
        throw std::invalid_argument("learning rate must be finite and non-negative");
    if (eval_every == 0)
        throw std::invalid_argument("eval_every must be positive");
    if (threads == 0)
        throw std::invalid_argument("threads must be positive");
}

namespace {

std::string real_str(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void require_labels(std::span<const Molecule> mols, const char* what)
{
    for (const auto& m : mols)
        if (!m.polarizability)
            throw DataError(std::string(what) + " record '" + m.molecule_id + "/" + m.conformer_id +
                            "' has no polarizability label");
}

struct BatchResult
{
    double loss = 0.0;
    ad::ParamStore grads;
};

// Loss and gradient of one shard, weighted by its share of the batch.
BatchResult shard_gradient(const ModelConfig& model, const ad::ParamStore& params,
                           std::span<const PreparedMolecule* const> mols, std::span<const Mat3> targets, Metric metric,
                           double weight)
{
    ad::Tape tape;
    const ad::BoundParams p(tape, params);
    const GraphBatch batch = make_batch(mols, model);
    const ad::Var loss = ad::scale(metric_loss(metric, forward(model, p, batch), targets), weight);
    tape.backward(loss);
    return {loss.item(), p.gradients()};
}

BatchResult batch_gradient(const ModelConfig& model, const ad::ParamStore& params,
                           std::span<const PreparedMolecule* const> mols, std::span<const Mat3> targets, Metric metric,
                           std::size_t threads)
{
    const std::size_t n = mols.size();
    const std::size_t shards = std::min(threads, n);
    if (shards <= 1)
        return shard_gradient(model, params, mols, targets, metric, 1.0);

    std::vector<BatchResult> parts(shards);
    std::vector<std::exception_ptr> errors(shards);
    auto work = [&](std::size_t k) {
        const std::size_t begin = k * n / shards, end = (k + 1) * n / shards;
        try {
            parts[k] = shard_gradient(model, params, mols.subspan(begin, end - begin),
                                      targets.subspan(begin, end - begin), metric,
                                      static_cast<double>(end - begin) / static_cast<double>(n));
        } catch (...) {
            errors[k] = std::current_exception();
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t k = 1; k < shards; ++k)
        pool.emplace_back(work, k);
    work(0);
    for (auto& t : pool)
        t.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);

    BatchResult total = std::move(parts[0]);
    for (std::size_t k = 1; k < shards; ++k) {
        total.loss += parts[k].loss;
        for (std::size_t i = 0; i < total.grads.size(); ++i) {
            auto& dst = total.grads.entries()[i].value.data;
            const auto& src = parts[k].grads.entries()[i].value.data;
            for (std::size_t j = 0; j < dst.size(); ++j)
                dst[j] += src[j];
        }
    }
    return total;
}

std::vector<Mat3> predict_prepared(const ModelConfig& cfg, const ad::ParamStore& params,
                                   std::span<const PreparedMolecule> mols, std::size_t batch_size)
{
    std::vector<Mat3> out;
    out.reserve(mols.size());
    for (std::size_t begin = 0; begin < mols.size(); begin += batch_size) {
        const auto chunk = mols.subspan(begin, std::min(batch_size, mols.size() - begin));
        const auto preds = predict(cfg, params, make_batch(chunk, cfg));
        out.insert(out.end(), preds.begin(), preds.end());
    }
    return out;
}

std::vector<Mat3> labels(std::span<const Molecule> mols)
{
    std::vector<Mat3> out;
    out.reserve(mols.size());
    for (const auto& m : mols)
        out.push_back(*m.polarizability);
    return out;
}

} // namespace

std::vector<std::pair<std::string, std::string>> TrainConfig::to_kv() const
{
    return {
        {"train.epochs", std::to_string(epochs)},
        {"train.batch", std::to_string(batch_size)},
        {"train.lr", real_str(lr)},
        {"train.loss", std::string(to_string(loss))},
        {"train.seed", std::to_string(seed)},
        {"train.split_seed", std::to_string(split_seed)},
        {"train.eval_every", std::to_string(eval_every)},
        {"train.threads", std::to_string(threads)},
        {"train.fit_output_scale", fit_output_scale ? "1" : "0"},
        {"optimizer", "adam"},
        {"optimizer.beta1", real_str(ad::AdamConfig{}.beta1)},
        {"optimizer.beta2", real_str(ad::AdamConfig{}.beta2)},
        {"optimizer.eps", real_str(ad::AdamConfig{}.eps)},
    };
}

Checkpoint make_checkpoint(const ModelConfig& model, const TrainConfig* train, const ad::ParamStore& params,
                           const ad::AdamState& optimizer)
{
    Checkpoint ckpt;
    ckpt.config = model.to_kv();
    if (train) {
        const auto kv = train->to_kv();
        ckpt.config.insert(ckpt.config.end(), kv.begin(), kv.end());
    }
    ckpt.params = params;
    ckpt.optimizer = optimizer;
    return ckpt;
}

Checkpoint TrainResult::checkpoint() const { return make_checkpoint(model, &train, params, optimizer); }

ModelConfig model_from_checkpoint(const Checkpoint& ckpt)
{
    std::vector<std::pair<std::string, std::string>> kv;
    for (const auto& entry : ckpt.config)
        if (entry.first.starts_with("model."))
            kv.push_back(entry);
    ModelConfig cfg;
    try {
        cfg = ModelConfig::from_kv(kv);
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("checkpoint model config: ") + e.what());
    }
    check_compatible(cfg, ckpt.params);
    return cfg;
}

double per_atom_scale(std::span<const Molecule> mols)
{
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& m : mols)
        if (m.polarizability) {
            total += m.polarizability->trace() / (3.0 * static_cast<double>(m.size()));
            ++n;
        }
    const double s = n ? total / static_cast<double>(n) : 1.0;
    return s > 0.0 && std::isfinite(s) ? s : 1.0;
}

TrainResult train(ModelConfig model, const TrainConfig& cfg, std::span<const Molecule> train_set,
                  std::span<const Molecule> val_set)
{
    cfg.validate();
    if (train_set.empty())
        throw DataError("training set is empty");
    require_labels(train_set, "training");
    require_labels(val_set, "validation");
    if (cfg.fit_output_scale)
        model.output_scale = per_atom_scale(train_set);
    model.validate();

    const auto prepared = prepare(train_set, model);
    const auto prepared_val = prepare(val_set, model);
    const auto targets = labels(train_set);
    const auto val_targets = labels(val_set);

    TrainResult result;
    result.model = model;
    result.train = cfg;
    ad::ParamStore params = init_model(model, cfg.seed);
    ad::AdamState optimizer = ad::AdamState::for_params(params);
    result.params = params;
    result.optimizer = optimizer;
    const ad::AdamConfig adam{cfg.lr};

    Rng shuffle_rng(cfg.seed ^ 0x5851f42d4c957f2dULL);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<const PreparedMolecule*> batch_mols;
    std::vector<Mat3> batch_targets;
    double best = std::numeric_limits<double>::infinity();
    const double nan = std::numeric_limits<double>::quiet_NaN();

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t batch_no = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++batch_no) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            batch_mols.clear();
            batch_targets.clear();
            for (std::size_t k = begin; k < end; ++k) {
                batch_mols.push_back(&prepared[order[k]]);
                batch_targets.push_back(targets[order[k]]);
            }
            const auto where = "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_no + 1);
            const auto step = batch_gradient(model, params, batch_mols, batch_targets, cfg.loss, cfg.threads);
            if (!std::isfinite(step.loss))
                throw NumericError("non-finite training loss at " + where);
            try {
                ad::adam_step(params, step.grads, optimizer, adam);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " at " + where);
            }
            loss_sum += step.loss * static_cast<double>(end - begin);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(order.size());
        rec.val.v.fill(nan);
        double selection = nan;
        if (prepared_val.empty()) {
            selection = rec.train_loss;
        } else if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
            const auto preds = predict_prepared(model, params, prepared_val, 64);
            rec.evaluated = true;
            rec.val = metric_report(preds, val_targets).mae;
            selection = rec.val[cfg.loss];
        }
        if (selection < best) {
            best = selection;
            result.best_epoch = epoch;
            result.params = params;
            result.optimizer = optimizer;
        }
        result.history.push_back(rec);
    }
    return result;
}

std::vector<Molecule> select_split(std::span<const Molecule> dataset, std::uint64_t seed, Split which)
{
    const auto assignment = split_by_molecule(dataset, seed);
    std::vector<Molecule> out;
    for (auto k : assignment.select(dataset, which))
        out.push_back(dataset[k]);
    return out;
}

TrainResult train(const ModelConfig& model, const TrainConfig& cfg, std::span<const Molecule> dataset)
{
    const auto assignment = split_by_molecule(dataset, cfg.split_seed);
    std::vector<Molecule> train_set, val_set;
    for (auto k : assignment.select(dataset, Split::train))
        train_set.push_back(dataset[k]);
    for (auto k : assignment.select(dataset, Split::val))
        val_set.push_back(dataset[k]);
    return train(model, cfg, train_set, val_set);
}

std::vector<Mat3> predict_all(const ModelConfig& cfg, const ad::ParamStore& params, std::span<const Molecule> mols,
                              std::size_t batch_size)
{
    if (batch_size == 0)
        throw std::invalid_argument("batch size must be positive");
    const auto prepared = prepare(mols, cfg);
    return predict_prepared(cfg, params, prepared, batch_size);
}

MetricReport evaluate(const ModelConfig& cfg, const ad::ParamStore& params, std::span<const Molecule> mols)
{
    require_labels(mols, "evaluation");
    return metric_report(predict_all(cfg, params, mols), labels(mols));
}

MetricReport evaluate(const Checkpoint& ckpt, std::span<const Molecule> mols)
{
    return evaluate(model_from_checkpoint(ckpt), ckpt.params, mols);
}

void write_history(std::ostream& out, std::span<const EpochRecord> history)
{
    for (const auto& rec : history) {
        out << rec.epoch << '\t' << real_str(rec.train_loss);
        for (auto m : all_metrics)
            out << '\t' << real_str(rec.val[m]);
        out << '\n';
    }
}

} // namespace svtpol
