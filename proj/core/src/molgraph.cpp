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

#include "svtpol/molgraph.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "svtpol/error.hpp"

namespace svtpol {

namespace {

constexpr double symmetry_tolerance = 1e-9;

std::vector<std::string_view> split_fields(std::string_view s, char sep)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string where(std::size_t line_no, std::string_view id)
{
    std::string w = "line " + std::to_string(line_no);
    if (!id.empty())
        w += " (record '" + std::string(id) + "')";
    return w;
}

double parse_real(std::string_view s, std::size_t line_no, std::string_view id, std::string_view field)
{
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v))
        throw DataError(where(line_no, id) + ": bad real '" + std::string(s) + "' in field " + std::string(field));
    return v;
}

int parse_int(std::string_view s, std::size_t line_no, std::string_view id)
{
    int v = 0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end || v <= 0)
        throw DataError(where(line_no, id) + ": bad atomic number '" + std::string(s) + "'");
    return v;
}

void append_real(std::string& out, double v)
{
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    out.append(buf, ptr);
}

bool is_symmetric(const Mat3& m)
{
    return std::fabs(m(0, 1) - m(1, 0)) <= symmetry_tolerance && std::fabs(m(0, 2) - m(2, 0)) <= symmetry_tolerance &&
           std::fabs(m(1, 2) - m(2, 1)) <= symmetry_tolerance;
}

} // namespace

void validate(const Molecule& mol)
{
    const std::string id = mol.molecule_id.empty() ? "<unnamed>" : mol.molecule_id;
    if (mol.atomic_numbers.empty())
        throw DataError("molecule '" + id + "' has no atoms");
    if (mol.atomic_numbers.size() != mol.positions.size())
        throw DataError("molecule '" + id + "': " + std::to_string(mol.atomic_numbers.size()) + " atomic numbers but " +
                        std::to_string(mol.positions.size()) + " positions");
    for (int z : mol.atomic_numbers)
        if (z <= 0)
            throw DataError("molecule '" + id + "': non-positive atomic number");
    for (const auto& p : mol.positions)
        if (!all_finite(p))
            throw DataError("molecule '" + id + "': non-finite position");
    if (mol.polarizability) {
        if (!all_finite(*mol.polarizability))
            throw DataError("molecule '" + id + "': non-finite polarizability");
        if (!is_symmetric(*mol.polarizability))
            throw DataError("molecule '" + id + "': polarizability is not symmetric");
    }
}

Molecule transformed(const Molecule& mol, const Mat3& rotation, Vec3 translation)
{
    Molecule out = mol;
    for (auto& p : out.positions)
        p = rotation * p + translation;
    if (out.polarizability)
        out.polarizability = conjugate(rotation, *out.polarizability);
    return out;
}

Molecule parse_record(std::string_view line, std::size_t line_no)
{
    if (!line.empty() && line.back() == '\r')
        line.remove_suffix(1);
    const auto fields = split_fields(line, '\t');
    const std::string_view id = fields.empty() ? std::string_view{} : fields[0];
    if (fields.size() != 4 && fields.size() != 5)
        throw DataError(where(line_no, id) + ": expected 4 or 5 tab-separated fields, got " +
                        std::to_string(fields.size()));

    Molecule mol;
    mol.molecule_id = std::string(fields[0]);
    mol.conformer_id = std::string(fields[1]);
    if (mol.molecule_id.empty())
        throw DataError(where(line_no, id) + ": empty molecule id");

    for (auto tok : split_fields(fields[2], ','))
        mol.atomic_numbers.push_back(parse_int(tok, line_no, id));

    for (auto atom : split_fields(fields[3], ';')) {
        const auto xyz = split_fields(atom, ',');
        if (xyz.size() != 3)
            throw DataError(where(line_no, id) + ": position '" + std::string(atom) + "' does not have 3 components");
        mol.positions.push_back({parse_real(xyz[0], line_no, id, "positions"),
                                 parse_real(xyz[1], line_no, id, "positions"),
                                 parse_real(xyz[2], line_no, id, "positions")});
    }
    if (mol.positions.size() != mol.atomic_numbers.size())
        throw DataError(where(line_no, id) + ": " + std::to_string(mol.atomic_numbers.size()) +
                        " atomic numbers but " + std::to_string(mol.positions.size()) + " positions");

    if (fields.size() == 5 && !fields[4].empty()) {
        const auto comps = split_fields(fields[4], ',');
        if (comps.size() != 9)
            throw DataError(where(line_no, id) + ": polarizability needs 9 components, got " +
                            std::to_string(comps.size()));
        Mat3 a;
        for (std::size_t k = 0; k < 9; ++k)
            a.e[k] = parse_real(comps[k], line_no, id, "polarizability");
        if (!is_symmetric(a))
            throw DataError(where(line_no, id) + ": polarizability is not symmetric");
        mol.polarizability = a;
    }
    return mol;
}

std::string format_record(const Molecule& mol)
{
    std::string out = mol.molecule_id;
    out += '\t';
    out += mol.conformer_id;
    out += '\t';
    for (std::size_t i = 0; i < mol.atomic_numbers.size(); ++i) {
        if (i)
            out += ',';
        out += std::to_string(mol.atomic_numbers[i]);
    }
    out += '\t';
    for (std::size_t i = 0; i < mol.positions.size(); ++i) {
        if (i)
            out += ';';
        append_real(out, mol.positions[i].x);
        out += ',';
        append_real(out, mol.positions[i].y);
        out += ',';
        append_real(out, mol.positions[i].z);
    }
    if (mol.polarizability) {
        out += '\t';
        for (std::size_t k = 0; k < 9; ++k) {
            if (k)
                out += ',';
            append_real(out, mol.polarizability->e[k]);
        }
    }
    return out;
}

std::vector<Molecule> read_dataset(std::istream& in)
{
    std::vector<Molecule> mols;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#' || line == "\r")
            continue;
        mols.push_back(parse_record(line, line_no));
    }
    return mols;
}

std::vector<Molecule> read_dataset(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open dataset '" + path.string() + "'");
    return read_dataset(in);
}

void write_dataset(std::ostream& out, std::span<const Molecule> mols)
{
    for (const auto& m : mols)
        out << format_record(m) << '\n';
}

void write_dataset(const std::filesystem::path& path, std::span<const Molecule> mols)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot write dataset '" + path.string() + "'");
    write_dataset(out, mols);
    if (!out)
        throw DataError("error writing dataset '" + path.string() + "'");
}

Graph build_graph(const Molecule& mol, double cutoff)
{
    if (!(cutoff > 0.0))
        throw std::invalid_argument("cutoff must be positive");
    const std::size_t n = mol.positions.size();
    const double cutoff2 = cutoff * cutoff;

    Graph g;
    g.num_nodes = n;
    g.cutoff = cutoff;
    g.neighbor_offsets.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j)
                continue;
            const Vec3 r = mol.positions[i] - mol.positions[j];
            const double d2 = dot(r, r);
            if (d2 <= 0.0)
                throw DataError("coincident atoms " + std::to_string(i) + " and " + std::to_string(j) +
                                " in molecule '" + mol.molecule_id + "'");
            if (d2 > cutoff2)
                continue;
            g.edges.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), r, d2,
                               1.0 / (d2 + edge_inverse_epsilon)});
        }
        g.neighbor_offsets[i + 1] = g.edges.size();
    }
    return g;
}

bool is_connected(const Graph& graph)
{
    if (graph.num_nodes == 0)
        return true;
    std::vector<std::size_t> parent(graph.num_nodes);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x)
            x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const auto& e : graph.edges)
        parent[find(e.receiver)] = find(e.sender);
    const auto root = find(0);
    for (std::size_t i = 1; i < graph.num_nodes; ++i)
        if (find(i) != root)
            return false;
    return true;
}

std::string_view to_string(Split s)
{
    switch (s) {
    case Split::train:
        return "train";
    case Split::val:
        return "val";
    case Split::test:
        return "test";
    }
    return "?";
}

Split split_from_string(std::string_view s)
{
    if (s == "train")
        return Split::train;
    if (s == "val")
        return Split::val;
    if (s == "test")
        return Split::test;
    throw std::invalid_argument("unknown split '" + std::string(s) + "'");
}

Split SplitAssignment::of(const Molecule& mol) const
{
    const auto it = by_molecule.find(mol.molecule_id);
    if (it == by_molecule.end())
        throw DataError("molecule '" + mol.molecule_id + "' has no split assignment");
    return it->second;
}

std::vector<std::size_t> SplitAssignment::select(std::span<const Molecule> mols, Split which) const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < mols.size(); ++i)
        if (of(mols[i]) == which)
            out.push_back(i);
    return out;
}

std::array<std::size_t, 3> SplitAssignment::counts() const
{
    std::array<std::size_t, 3> c{};
    for (const auto& [id, s] : by_molecule)
        ++c[static_cast<std::size_t>(s)];
    return c;
}

SplitAssignment split_by_molecule(std::span<const Molecule> mols, std::uint64_t seed, SplitFractions fractions)
{
    if (mols.empty())
        throw std::invalid_argument("cannot split an empty dataset");
    const double total = fractions.train + fractions.val + fractions.test;
    if (fractions.train < 0 || fractions.val < 0 || fractions.test < 0 || std::fabs(total - 1.0) > 1e-9)
        throw std::invalid_argument("split fractions must be non-negative and sum to 1");

    std::set<std::string> unique;
    for (const auto& m : mols)
        unique.insert(m.molecule_id);
    std::vector<std::string> ids(unique.begin(), unique.end());
    Rng rng(seed);
    rng.shuffle(ids);

    const std::size_t n = ids.size();
    const auto n_train = std::min(n, static_cast<std::size_t>(std::llround(fractions.train * static_cast<double>(n))));
    const auto n_val =
        std::min(n - n_train, static_cast<std::size_t>(std::llround(fractions.val * static_cast<double>(n))));

    SplitAssignment out;
    for (std::size_t k = 0; k < n; ++k) {
        const Split s = k < n_train ? Split::train : (k < n_train + n_val ? Split::val : Split::test);
        out.by_molecule.emplace(ids[k], s);
    }
    return out;
}

SplitAssignment assign_all(std::span<const Molecule> mols, Split which)
{
    SplitAssignment out;
    for (const auto& m : mols)
        out.by_molecule.emplace(m.molecule_id, which);
    return out;
}

double SynthParams::atomic_term(int z) const
{
    const auto it = atomic.find(z);
    if (it == atomic.end())
        throw DataError("synthetic oracle has no parameters for Z=" + std::to_string(z));
    return it->second;
}

Mat3 synth_polarizability(const Molecule& mol, const SynthParams& params)
{
    const std::size_t n = mol.size();
    std::vector<double> a(n);
    Mat3 alpha;
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = params.atomic_term(mol.atomic_numbers[i]);
        alpha += a[i] * Mat3::identity();
    }
    const double cutoff2 = params.cutoff * params.cutoff;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const Vec3 r = mol.positions[j] - mol.positions[i];
            const double d2 = dot(r, r);
            if (d2 > cutoff2)
                continue;
            if (d2 <= 0.0)
                throw DataError("coincident atoms in molecule '" + mol.molecule_id + "'");
            const double d = std::sqrt(d2);
            const Vec3 u = r / d;
            const double pair = std::sqrt(a[i] * a[j]) * std::exp(-d / params.decay_length);
            const Mat3 parallel = Mat3::outer(u, u);
            alpha += (params.parallel_factor * pair) * parallel +
                     (params.perpendicular_factor * pair) * (Mat3::identity() - parallel);
        }
    }
    return alpha;
}

namespace {

constexpr std::array<double, 6> element_weights{0.40, 0.30, 0.10, 0.10, 0.05, 0.05};
constexpr double min_separation = 0.8;
constexpr double max_bond = 2.0;

int draw_element(Rng& rng)
{
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t k = 0; k < element_weights.size(); ++k) {
        acc += element_weights[k];
        if (u < acc)
            return synthetic_elements[k];
    }
    return synthetic_elements.back();
}

Vec3 random_direction(Rng& rng)
{
    while (true) {
        const Vec3 v{rng.normal(), rng.normal(), rng.normal()};
        const double n = norm(v);
        if (n > 1e-8)
            return v / n;
    }
}

// Grows a cluster atom by atom: each new atom sits at a bond length from
// a random existing atom and no closer than min_separation to any other.
std::vector<Vec3> grow_geometry(std::size_t n, Rng& rng)
{
    std::vector<Vec3> pos{{0.0, 0.0, 0.0}};
    while (pos.size() < n) {
        const Vec3 anchor = pos[rng.index(pos.size())];
        const Vec3 candidate = anchor + rng.uniform(min_separation, max_bond) * random_direction(rng);
        const bool clear = std::all_of(pos.begin(), pos.end(), [&](Vec3 p) {
            const Vec3 d = candidate - p;
            return dot(d, d) >= min_separation * min_separation;
        });
        if (clear)
            pos.push_back(candidate);
    }
    Vec3 centroid;
    for (const auto& p : pos)
        centroid += p;
    centroid = centroid / static_cast<double>(n);
    for (auto& p : pos)
        p -= centroid;
    return pos;
}

} // namespace

std::vector<Molecule> gen_synthetic(std::size_t n, std::uint64_t seed, const SynthParams& params)
{
    if (n == 0)
        throw std::invalid_argument("gen_synthetic needs n >= 1");
    Rng rng(seed);
    std::vector<Molecule> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        Molecule mol;
        char id[32];
        std::snprintf(id, sizeof id, "synth-%06zu", k);
        mol.molecule_id = id;
        mol.conformer_id = "0";
        const std::size_t atoms = 4 + rng.index(13);
        while (true) {
            mol.atomic_numbers.clear();
            for (std::size_t a = 0; a < atoms; ++a)
                mol.atomic_numbers.push_back(draw_element(rng));
            mol.positions = grow_geometry(atoms, rng);
            if (is_connected(build_graph(mol, params.cutoff)))
                break;
        }
        mol.polarizability = synth_polarizability(mol, params);
        out.push_back(std::move(mol));
    }
    return out;
}

} // namespace svtpol
