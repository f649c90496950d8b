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

#include <stdexcept>
#include <string>

namespace svtpol {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error
{
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input files, missing labels, inconsistent checkpoints.
class DataError : public Error
{
public:
    explicit DataError(const std::string& what) : Error(what) {}
};

/// Numerical failures: non-finite values, degenerate bases.
class NumericError : public Error
{
public:
    explicit NumericError(const std::string& what) : Error(what) {}
};

/// Shape mismatches inside the differentiation engine.
class ShapeError : public Error
{
public:
    explicit ShapeError(const std::string& what) : Error(what) {}
};

} // namespace svtpol
