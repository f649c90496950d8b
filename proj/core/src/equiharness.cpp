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

#include "svtpol/equiharness.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace svtpol {

double rel_frob(const Mat3& pred_rotated, const Mat3& pred_base, const Mat3& rotation)
{
    const double num = frobenius_norm(pred_rotated - conjugate(rotation, pred_base));
    const double den = 0.5 * (frobenius_norm(pred_rotated) + frobenius_norm(pred_base)) + rel_frob_epsilon;
    return num / den;
}

std::string_view to_string(EquiMode m) { return m == EquiMode::model ? "model" : "pipeline"; }

EquiMode equi_mode_from_string(std::string_view s)
{
    if (s == "model")
        return EquiMode::model;
    if (s == "pipeline")
        return EquiMode::pipeline;
    throw std::invalid_argument("unknown equivariance mode '" + std::string(s) + "' (expected model or pipeline)");
}

std::vector<Mat3> sample_rotations(std::size_t n, std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<Mat3> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k)
        out.push_back(random_rotation(rng));
    return out;
}

namespace {

struct Stats
{
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t n = 0;

    void add(double x)
    {
        sum += x;
        sum_sq += x * x;
        ++n;
    }
    double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
    double std() const
    {
        if (!n)
            return 0.0;
        const double m = mean();
        return std::sqrt(std::max(0.0, sum_sq / static_cast<double>(n) - m * m));
    }
};

EquiReport run(EquiMode mode, const ModelConfig& cfg, const ad::ParamStore& params, std::span<const Molecule> mols,
               std::size_t n_rotations, std::uint64_t seed)
{
    if (n_rotations == 0)
        throw std::invalid_argument("need at least one rotation");
    check_compatible(cfg, params);
    const auto rotations = sample_rotations(n_rotations, seed);

    EquiReport report;
    report.mode = mode;
    report.seed = seed;
    report.n_rotations = n_rotations;
    Stats all, regular, irregular;

    std::vector<PreparedMolecule> copies;
    for (const auto& mol : mols) {
        const PreparedMolecule base = prepare(mol, cfg);
        const Mat3 base_pred = predict(cfg, params, base);
        const FrameSummary base_summary = summarize(base.frames);

        MoleculeEqui me;
        me.molecule_id = mol.molecule_id;
        me.conformer_id = mol.conformer_id;
        me.base_irregular = base_summary.irregular;
        me.base_degenerate = base_summary.degenerate;

        copies.clear();
        for (const auto& r : rotations) {
            const Molecule moved = transformed(mol, r);
            if (mode == EquiMode::model) {
                PreparedMolecule p{moved, build_graph(moved, cfg.cutoff), rotated(base.frames, r)};
                copies.push_back(std::move(p));
                me.rotated_irregular += base_summary.irregular;
            } else {
                copies.push_back(prepare(moved, cfg));
                me.rotated_irregular += summarize(copies.back().frames).irregular;
            }
        }
        const auto preds = predict(cfg, params, make_batch(std::span<const PreparedMolecule>(copies), cfg));

        Stats own;
        for (std::size_t k = 0; k < rotations.size(); ++k) {
            const double e = rel_frob(preds[k], base_pred, rotations[k]);
            own.add(e);
            me.worst = std::max(me.worst, e);
        }
        me.mean = own.mean();
        Stats& group = me.regular() ? regular : irregular;
        for (std::size_t k = 0; k < rotations.size(); ++k) {
            const double e = rel_frob(preds[k], base_pred, rotations[k]);
            all.add(e);
            group.add(e);
        }
        report.degenerate_frames += me.base_degenerate;
        report.irregular_frames += me.base_irregular;
        if (me.regular())
            ++report.regular_molecules;
        report.molecules.push_back(std::move(me));
    }
    report.mean = all.mean();
    report.std = all.std();
    report.regular_mean = regular.mean();
    report.regular_std = regular.std();
    report.irregular_mean = irregular.mean();
    report.irregular_std = irregular.std();
    return report;
}

} // namespace

EquiReport model_equivariance(const ModelConfig& cfg, const ad::ParamStore& params, std::span<const Molecule> mols,
                              std::size_t n_rotations, std::uint64_t seed)
{
    return run(EquiMode::model, cfg, params, mols, n_rotations, seed);
}

EquiReport pipeline_equivariance(const ModelConfig& cfg, const ad::ParamStore& params,
                                 std::span<const Molecule> mols, std::size_t n_rotations, std::uint64_t seed)
{
    return run(EquiMode::pipeline, cfg, params, mols, n_rotations, seed);
}

EquiReport check_equivariance(EquiMode mode, const ModelConfig& cfg, const ad::ParamStore& params,
                              std::span<const Molecule> mols, std::size_t n_rotations, std::uint64_t seed)
{
    return run(mode, cfg, params, mols, n_rotations, seed);
}

void write_report(std::ostream& out, const EquiReport& r)
{
    char buf[256];
    out << "# equivariance mode=" << to_string(r.mode) << " seed=" << r.seed << " rotations=" << r.n_rotations
        << " molecules=" << r.molecules.size() << '\n';
    out << "# molecule\tconformer\tmean_rel_frob\tworst_rel_frob\tirregular_frames\tdegenerate_frames"
           "\trotated_irregular\n";
    for (const auto& m : r.molecules) {
        std::snprintf(buf, sizeof buf, "\t%.6e\t%.6e\t%zu\t%zu\t%zu\n", m.mean, m.worst, m.base_irregular,
                      m.base_degenerate, m.rotated_irregular);
        out << m.molecule_id << '\t' << m.conformer_id << buf;
    }
    std::snprintf(buf, sizeof buf, "mean_rel_frob\t%.6e\nstd_rel_frob\t%.6e\n", r.mean, r.std);
    out << buf;
    std::snprintf(buf, sizeof buf, "regular_molecules\t%zu\nregular_mean\t%.6e\nregular_std\t%.6e\n",
                  r.regular_molecules, r.regular_mean, r.regular_std);
    out << buf;
    std::snprintf(buf, sizeof buf, "irregular_molecules\t%zu\nirregular_mean\t%.6e\nirregular_std\t%.6e\n",
                  r.molecules.size() - r.regular_molecules, r.irregular_mean, r.irregular_std);
    out << buf;
    out << "degenerate_frames\t" << r.degenerate_frames << "\nirregular_frames\t" << r.irregular_frames << '\n';
    std::snprintf(buf, sizeof buf, "summary\t%s\t(%.3g +- %.3g)\n", std::string(to_string(r.mode)).c_str(), r.mean,
                  r.std);
    out << buf;
}

} // namespace svtpol
