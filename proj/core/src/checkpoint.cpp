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

#include "svtpol/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "svtpol/error.hpp"

namespace svtpol {

namespace {

constexpr std::array<char, 8> magic{'S', 'V', 'T', 'P', 'O', 'L', 'C', 'K'};
constexpr std::uint32_t max_string = 1u << 20;
constexpr std::uint32_t max_rank = 8;

void put_u64(std::ostream& out, std::uint64_t v)
{
    char b[8];
    for (int k = 0; k < 8; ++k)
        b[k] = static_cast<char>((v >> (8 * k)) & 0xff);
    out.write(b, 8);
}

void put_u32(std::ostream& out, std::uint32_t v)
{
    char b[4];
    for (int k = 0; k < 4; ++k)
        b[k] = static_cast<char>((v >> (8 * k)) & 0xff);
    out.write(b, 4);
}

void put_string(std::ostream& out, const std::string& s)
{
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_block(std::ostream& out, const ad::ParamStore& store)
{
    put_u32(out, static_cast<std::uint32_t>(store.size()));
    for (const auto& e : store.entries()) {
        put_string(out, e.name);
        put_u32(out, static_cast<std::uint32_t>(e.value.shape.size()));
        for (auto d : e.value.shape)
            put_u64(out, d);
        for (double v : e.value.data)
            put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
}

class Reader
{
public:
    explicit Reader(std::istream& in) : in_(in) {}

    void bytes(char* dst, std::size_t n)
    {
        in_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw DataError("truncated checkpoint");
    }
    std::uint64_t u64()
    {
        unsigned char b[8];
        bytes(reinterpret_cast<char*>(b), 8);
        std::uint64_t v = 0;
        for (int k = 7; k >= 0; --k)
            v = (v << 8) | b[k];
        return v;
    }
    std::uint32_t u32()
    {
        unsigned char b[4];
        bytes(reinterpret_cast<char*>(b), 4);
        std::uint32_t v = 0;
        for (int k = 3; k >= 0; --k)
            v = (v << 8) | b[k];
        return v;
    }
    std::string string()
    {
        const auto n = u32();
        if (n > max_string)
            throw DataError("corrupt checkpoint: string of " + std::to_string(n) + " bytes");
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    ad::ParamStore block()
    {
        ad::ParamStore store;
        const auto count = u32();
        for (std::uint32_t k = 0; k < count; ++k) {
            auto name = string();
            const auto rank = u32();
            if (rank > max_rank)
                throw DataError("corrupt checkpoint: tensor '" + name + "' of rank " + std::to_string(rank));
            ad::Shape shape(rank);
            for (auto& d : shape)
                d = u64();
            const auto n = ad::numel(shape);
            if (n > (1ull << 32))
                throw DataError("corrupt checkpoint: tensor '" + name + "' too large");
            ad::Buffer data(n);
            for (auto& v : data)
                v = std::bit_cast<double>(u64());
            store.add(std::move(name), ad::Tensor(std::move(shape), std::move(data)));
        }
        return store;
    }

private:
    std::istream& in_;
};

} // namespace

const std::string& Checkpoint::get(const std::string& key) const
{
    for (const auto& [k, v] : config)
        if (k == key)
            return v;
    throw DataError("checkpoint has no config key '" + key + "'");
}

void save_checkpoint(std::ostream& out, const Checkpoint& ckpt)
{
    out.write(magic.data(), magic.size());
    put_u32(out, Checkpoint::version);
    put_u32(out, static_cast<std::uint32_t>(ckpt.config.size()));
    for (const auto& [k, v] : ckpt.config) {
        put_string(out, k);
        put_string(out, v);
    }
    put_block(out, ckpt.params);
    put_u64(out, ckpt.optimizer.step);
    put_block(out, ckpt.optimizer.m);
    put_block(out, ckpt.optimizer.v);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot write checkpoint '" + path.string() + "'");
    save_checkpoint(out, ckpt);
    if (!out)
        throw DataError("error writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(std::istream& in)
{
    Reader r(in);
    std::array<char, 8> head{};
    r.bytes(head.data(), head.size());
    if (head != magic)
        throw DataError("not a checkpoint file (bad magic)");
    const auto version = r.u32();
    if (version != Checkpoint::version)
        throw DataError("unsupported checkpoint version " + std::to_string(version));

    Checkpoint ckpt;
    const auto n_config = r.u32();
    for (std::uint32_t k = 0; k < n_config; ++k) {
        auto key = r.string();
        auto value = r.string();
        ckpt.config.emplace_back(std::move(key), std::move(value));
    }
    ckpt.params = r.block();
    ckpt.optimizer.step = r.u64();
    ckpt.optimizer.m = r.block();
    ckpt.optimizer.v = r.block();
    return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open checkpoint '" + path.string() + "'");
    return load_checkpoint(in);
}

} // namespace svtpol
