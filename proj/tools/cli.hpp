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

#include <iosfwd>

namespace svtpol::cli {

enum ExitCode : int {
    exit_ok = 0,
    exit_threshold = 1,  ///< check-equivariance above its threshold
    exit_usage = 2,
    exit_data = 3,       ///< I/O, malformed data, numerical failure
};

/// Environment variable naming the default data directory.
inline constexpr const char* data_dir_env = "SVTPOL_DATA_DIR";

/// Entry point of the svtpol tool; argv[0] is the program name.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace svtpol::cli
