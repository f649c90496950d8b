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

#include "svtpol/frames.hpp"

#include <cstdlib>

#include "svtpol/error.hpp"

namespace svtpol {

std::string_view to_string(Fallback f)
{
    switch (f) {
    case Fallback::none:
        return "none";
    case Fallback::mu_small:
        return "mu_small";
    case Fallback::sign_unstable:
        return "sign_unstable";
    case Fallback::x_parallel_z:
        return "x_parallel_z";
    case Fallback::isolated:
        return "isolated";
    }
    return "?";
}

WeightedMoments weighted_moments(const Molecule& mol, const Graph& graph, std::size_t i)
{
    double total = 0.0;
    Vec3 first;
    Mat3 second;
    for (const auto& e : graph.incoming(i)) {
        const double w = std::abs(mol.atomic_numbers[e.sender]);
        const Vec3 d = -e.r_ij;  // r_j - r_i
        total += w;
        first += w * d;
        second += w * Mat3::outer(d, d);
    }
    if (!(total > 0.0))
        throw NumericError("zero total neighbour weight at atom " + std::to_string(i));

    WeightedMoments out;
    out.mu = first / total;
    out.C = (1.0 / total) * second - Mat3::outer(out.mu, out.mu);
    return out;
}

Frame build_frame(const Molecule& mol, const Graph& graph, std::size_t i, const FrameConfig& cfg)
{
    Frame frame;
    if (graph.degree(i) == 0) {
        frame.degenerate = true;
        frame.fallback_used = Fallback::isolated;
        return frame;
    }

    const auto [mu, C] = weighted_moments(mol, graph, i);
    const SymEig3 eig = sym_eig3(C);
    frame.mu = mu;
    frame.eigenvalues = eig.values;

    const double mu_norm = norm(mu);
    const Vec3 z_raw = eig.vectors.col(0);
    const double alignment = dot(z_raw, mu);
    Vec3 z = z_raw;
    if (std::fabs(alignment) > cfg.eps_sign * mu_norm) {
        if (alignment < 0.0)
            z = -z_raw;
    } else {
        frame.fallback_used = Fallback::sign_unstable;
    }

    Vec3 seed = mu;
    if (!(mu_norm > cfg.eps_mu)) {
        seed = eig.vectors.col(2);
        frame.fallback_used = Fallback::mu_small;
    }
    Vec3 x = seed - dot(seed, z) * z;
    if (!(norm(x) > cfg.eps_mu)) {
        seed = eig.vectors.col(1);
        x = seed - dot(seed, z) * z;
        frame.fallback_used = Fallback::x_parallel_z;
    }
    x = x / norm(x);
    Vec3 y = cross(z, x);
    y = y / norm(y);

    frame.F = orthonormalize(Mat3::from_columns(x, y, z));

    // C below rounding level of the raw second moment counts as zero
    const double spread = C.trace();
    const double gap = eig.values[1] - eig.values[0];
    if (gap <= cfg.eps_gap * spread || spread <= cfg.eps_gap * (spread + dot(mu, mu)))
        frame.degenerate = true;
    return frame;
}

std::vector<Frame> frames_for_molecule(const Molecule& mol, const Graph& graph, const FrameConfig& cfg)
{
    std::vector<Frame> frames;
    frames.reserve(mol.size());
    for (std::size_t i = 0; i < mol.size(); ++i)
        frames.push_back(build_frame(mol, graph, i, cfg));
    return frames;
}

FrameSummary summarize(const std::vector<Frame>& frames)
{
    FrameSummary s;
    for (const auto& f : frames) {
        ++s.by_fallback[static_cast<std::size_t>(f.fallback_used)];
        if (f.degenerate)
            ++s.degenerate;
        if (!f.regular())
            ++s.irregular;
    }
    return s;
}

std::vector<Frame> rotated(const std::vector<Frame>& frames, const Mat3& rotation)
{
    std::vector<Frame> out = frames;
    for (auto& f : out) {
        f.F = rotation * f.F;
        f.mu = rotation * f.mu;
    }
    return out;
}

} // namespace svtpol
