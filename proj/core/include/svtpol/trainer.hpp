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
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "svtpol/checkpoint.hpp"
#include "svtpol/metrics.hpp"
#include "svtpol/molgraph.hpp"
#include "svtpol/svtnet.hpp"

namespace svtpol {

struct TrainConfig
{
    std::size_t epochs = 1000;
    std::size_t batch_size = 32;
    double lr = 1e-4;
    Metric loss = Metric::tensor;
    std::uint64_t seed = 0;        ///< parameter init and shuffling
    std::uint64_t split_seed = 0;  ///< train/val/test assignment
    /// Validation runs every eval_every epochs and on the last epoch.
    std::size_t eval_every = 1;
    /// Workers per batch; gradients are summed in a fixed order, so
    /// results depend on this value but are reproducible for it.
    std::size_t threads = 1;
    /// Replace the model's output_scale by the training-set mean of
    /// tr(alpha) / (3 n_atoms) before training.
    bool fit_output_scale = true;

    void validate() const;
    std::vector<std::pair<std::string, std::string>> to_kv() const;
};

struct EpochRecord
{
    std::size_t epoch = 0;    ///< 1-based
    double train_loss = 0.0;  ///< mean over the epoch's molecules
    bool evaluated = false;
    MetricValues val;         ///< NaN when not evaluated
};

struct TrainResult
{
    ModelConfig model;
    TrainConfig train;
    /// Parameters and optimizer state at the best validation epoch
    /// (lowest validation value of the loss metric). Without a
    /// validation set the lowest training loss decides. With zero epochs
    /// these are the initial values.
    ad::ParamStore params;
    ad::AdamState optimizer;
    std::size_t best_epoch = 0;
    std::vector<EpochRecord> history;

    Checkpoint checkpoint() const;
};

/// Builds the checkpoint for a model and its training configuration.
Checkpoint make_checkpoint(const ModelConfig& model, const TrainConfig* train, const ad::ParamStore& params,
                           const ad::AdamState& optimizer);
/// Model configuration echoed in a checkpoint; checks the parameter
/// layout against it.
ModelConfig model_from_checkpoint(const Checkpoint& ckpt);

/// Mean of tr(alpha) / (3 n_atoms) over labelled molecules.
double per_atom_scale(std::span<const Molecule> mols);

/// Trains on `train_set`, selecting the best epoch on `val_set`.
/// Throws DataError on unlabelled records and NumericError (with epoch
/// and batch) on a non-finite loss or gradient.
TrainResult train(ModelConfig model, const TrainConfig& cfg, std::span<const Molecule> train_set,
                  std::span<const Molecule> val_set);

/// Splits `dataset` by molecule with cfg.split_seed and trains on the
/// train part, validating on the val part.
TrainResult train(const ModelConfig& model, const TrainConfig& cfg, std::span<const Molecule> dataset);

/// Predictions for every molecule, computed in batches.
std::vector<Mat3> predict_all(const ModelConfig& cfg, const ad::ParamStore& params, std::span<const Molecule> mols,
                              std::size_t batch_size = 64);

/// Metrics of the model on labelled molecules. Throws DataError when a
/// record has no label.
MetricReport evaluate(const ModelConfig& cfg, const ad::ParamStore& params, std::span<const Molecule> mols);
MetricReport evaluate(const Checkpoint& ckpt, std::span<const Molecule> mols);

/// Records of `dataset` in `which` under split_by_molecule(seed).
std::vector<Molecule> select_split(std::span<const Molecule> dataset, std::uint64_t seed, Split which);

/// One line per epoch:
/// epoch<TAB>train_loss<TAB>val_tensor<TAB>val_trace<TAB>val_aniso<TAB>val_frob
void write_history(std::ostream& out, std::span<const EpochRecord> history);

} // namespace svtpol
