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

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "svtpol/params.hpp"

namespace svtpol {

/// Binary checkpoint layout (all integers and reals little-endian):
///
///   "SVTPOLCK"                      8 bytes
///   version                         u32
///   config entry count              u32, then (key, value) strings
///   parameter block                 see below
///   optimizer step                  u64
///   first-moment block, second-moment block
///
/// A string is a u32 byte length followed by the bytes. A block is a u32
/// tensor count followed by (name, u32 rank, u64 dims..., f64 values...).
struct Checkpoint
{
    static constexpr std::uint32_t version = 1;

    /// Flat key=value echo of the model and training configuration.
    std::vector<std::pair<std::string, std::string>> config;
    ad::ParamStore params;
    ad::AdamState optimizer;

    /// Value of a config key; throws DataError if absent.
    const std::string& get(const std::string& key) const;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void save_checkpoint(std::ostream& out, const Checkpoint& ckpt);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace svtpol
