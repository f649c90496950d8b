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

#include "svtpol/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "svtpol/error.hpp"

namespace svtpol {

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

constexpr bool off_diagonal(std::size_t k) { return k % 4 != 0; }

} // namespace

std::string_view to_string(Metric m)
{
    switch (m) {
    case Metric::tensor: return "tensor";
    case Metric::trace: return "trace";
    case Metric::aniso: return "aniso";
    case Metric::frob: return "frob";
    }
    return "?";
}

Metric metric_from_string(std::string_view s)
{
    for (auto m : all_metrics)
        if (to_string(m) == s)
            return m;
    throw std::invalid_argument("unknown metric '" + std::string(s) + "' (expected tensor, trace, aniso or frob)");
}

double metric_value(Metric m, const Mat3& pred, const Mat3& truth)
{
    const Mat3 d = pred - truth;
    switch (m) {
    case Metric::tensor: {
        double s = 0.0;
        for (double x : d.e)
            s += std::abs(x);
        return s / 9.0;
    }
    case Metric::trace:
        return std::abs(d.trace());
    case Metric::aniso: {
        double s = 0.0;
        for (std::size_t k = 0; k < 9; ++k)
            if (off_diagonal(k))
                s += std::abs(d.e[k]);
        return s / 6.0;
    }
    case Metric::frob:
        return frobenius_norm(d);
    }
    return 0.0;
}

Mat3 metric_gradient(Metric m, const Mat3& pred, const Mat3& truth)
{
    const Mat3 d = pred - truth;
    Mat3 g = Mat3::zero();
    switch (m) {
    case Metric::tensor:
        for (std::size_t k = 0; k < 9; ++k)
            g.e[k] = sign(d.e[k]) / 9.0;
        break;
    case Metric::trace: {
        const double s = sign(d.trace());
        g.e[0] = g.e[4] = g.e[8] = s;
        break;
    }
    case Metric::aniso:
        for (std::size_t k = 0; k < 9; ++k)
            if (off_diagonal(k))
                g.e[k] = sign(d.e[k]) / 6.0;
        break;
    case Metric::frob: {
        const double n = frobenius_norm(d);
        if (n > 0.0)
            for (std::size_t k = 0; k < 9; ++k)
                g.e[k] = d.e[k] / n;
        break;
    }
    }
    return g;
}

MetricReport metric_report(std::span<const Mat3> pred, std::span<const Mat3> truth)
{
    if (pred.size() != truth.size())
        throw std::invalid_argument("metric_report: " + std::to_string(pred.size()) + " predictions for " +
                                    std::to_string(truth.size()) + " targets");
    MetricReport r;
    r.molecules = pred.size();
    if (pred.empty())
        return r;
    for (std::size_t k = 0; k < pred.size(); ++k)
        for (auto m : all_metrics) {
            r.mae[m] += metric_value(m, pred[k], truth[k]);
            r.scale[m] += metric_value(m, Mat3::zero(), truth[k]);
        }
    for (auto m : all_metrics) {
        r.mae[m] /= static_cast<double>(pred.size());
        r.scale[m] /= static_cast<double>(pred.size());
    }
    return r;
}

ad::Var metric_loss(Metric m, ad::Var pred, std::span<const Mat3> truth)
{
    if (pred.rows() != truth.size() || pred.row_size() != 9)
        throw ShapeError("metric_loss: predictions " + ad::to_string(pred.shape()) + " for " +
                         std::to_string(truth.size()) + " targets");
    const std::size_t n = truth.size();
    const auto values = pred.data();
    std::vector<Mat3> preds(n);
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(9 * k), 9, preds[k].e.begin());
        total += metric_value(m, preds[k], truth[k]);
    }
    const double inv_n = n == 0 ? 0.0 : 1.0 / static_cast<double>(n);
    ad::Tensor out(ad::Shape{}, {total * inv_n});

    std::vector<Mat3> targets(truth.begin(), truth.end());
    ad::Tape& tape = *pred.tape();
    const std::size_t parent = pred.id();
    return tape.record(std::move(out), {parent},
                       [m, preds = std::move(preds), targets = std::move(targets), parent, inv_n](ad::Tape& t,
                                                                                                  std::size_t self) {
                           if (!t.requires_grad(parent))
                               return;
                           const double g = t.grad(self)[0] * inv_n;
                           auto dst = t.grad_mut(parent);
                           for (std::size_t k = 0; k < preds.size(); ++k) {
                               const Mat3 d = metric_gradient(m, preds[k], targets[k]);
                               for (std::size_t c = 0; c < 9; ++c)
                                   dst[9 * k + c] += g * d.e[c];
                           }
                       });
}

} // namespace svtpol
