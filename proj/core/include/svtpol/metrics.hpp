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

#include <array>
#include <cstddef>
#include <span>
#include <string_view>

#include "svtpol/linalg3.hpp"
#include "svtpol/tape.hpp"

namespace svtpol {

/// Per-molecule tensor error metrics (bohr^3).
///   tensor  mean |d| over the 9 components
///   trace   |tr d|
///   aniso   mean |d| over the 6 off-diagonal components
///   frob    ||d||_F
/// with d = pred - truth.
enum class Metric { tensor, trace, aniso, frob };

inline constexpr std::array<Metric, 4> all_metrics{Metric::tensor, Metric::trace, Metric::aniso, Metric::frob};

std::string_view to_string(Metric m);
Metric metric_from_string(std::string_view s);

double metric_value(Metric m, const Mat3& pred, const Mat3& truth);
/// d metric / d pred. Kinks of |.| and ||.|| take the zero subgradient.
Mat3 metric_gradient(Metric m, const Mat3& pred, const Mat3& truth);

inline double tensor_mae(const Mat3& p, const Mat3& t) { return metric_value(Metric::tensor, p, t); }
inline double trace_mae(const Mat3& p, const Mat3& t) { return metric_value(Metric::trace, p, t); }
inline double aniso_mae(const Mat3& p, const Mat3& t) { return metric_value(Metric::aniso, p, t); }
inline double frob_mae(const Mat3& p, const Mat3& t) { return metric_value(Metric::frob, p, t); }

/// One value per metric, indexed by Metric.
struct MetricValues
{
    std::array<double, 4> v{};

    double& operator[](Metric m) { return v[static_cast<std::size_t>(m)]; }
    double operator[](Metric m) const { return v[static_cast<std::size_t>(m)]; }
};

struct MetricReport
{
    std::size_t molecules = 0;
    MetricValues mae;    ///< averaged over molecules
    MetricValues scale;  ///< same metrics of the ground truth against zero
};

/// Averages over molecules. Throws std::invalid_argument on length
/// mismatch; an empty input gives zeros.
MetricReport metric_report(std::span<const Mat3> pred, std::span<const Mat3> truth);

/// Mean of metric m over the batch: pred [B, 9] against B targets.
/// Evaluated and differentiated with metric_value/metric_gradient.
ad::Var metric_loss(Metric m, ad::Var pred, std::span<const Mat3> truth);

} // namespace svtpol
