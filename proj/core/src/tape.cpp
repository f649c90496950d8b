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

#include "svtpol/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Core>

#include "svtpol/error.hpp"

namespace svtpol::ad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap as_matrix(std::span<const double> s, std::size_t rows, std::size_t cols)
{
    return ConstMap(s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MutMap as_matrix(std::span<double> s, std::size_t rows, std::size_t cols)
{
    return MutMap(s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

Eigen::Map<const Eigen::ArrayXd> as_array(std::span<const double> s)
{
    return Eigen::Map<const Eigen::ArrayXd>(s.data(), static_cast<Eigen::Index>(s.size()));
}

Eigen::Map<Eigen::ArrayXd> as_array(std::span<double> s)
{
    return Eigen::Map<Eigen::ArrayXd>(s.data(), static_cast<Eigen::Index>(s.size()));
}

void require_same_tape(Var a, Var b)
{
    if (a.tape() != b.tape() || a.tape() == nullptr)
        throw ShapeError("operands recorded on different tapes");
}

void require_same_shape(const char* op, Var a, Var b)
{
    require_same_tape(a, b);
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

std::size_t cols_of(Var a) { return a.row_size(); }

} // namespace

std::size_t numel(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape)
{
    std::string s = "[";
    for (std::size_t k = 0; k < shape.size(); ++k) {
        if (k)
            s += ", ";
        s += std::to_string(shape[k]);
    }
    return s + "]";
}

Tensor::Tensor(Shape s, Buffer d) : shape(std::move(s)), data(std::move(d))
{
    if (numel(shape) != data.size())
        throw ShapeError("tensor of shape " + to_string(shape) + " given " + std::to_string(data.size()) + " values");
}

const Shape& Var::shape() const { return tape_->shape(id_); }
std::span<const double> Var::data() const { return tape_->value(id_); }
std::span<const double> Var::grad() const { return tape_->grad(id_); }
Tensor Var::value() const
{
    const auto d = data();
    return Tensor(shape(), d);
}
double Var::item() const
{
    if (size() != 1)
        throw ShapeError("item() on a value of shape " + to_string(shape()));
    return data()[0];
}
std::size_t Var::rows() const { return shape().empty() ? 1 : shape()[0]; }
std::size_t Var::row_size() const
{
    const auto& s = shape();
    return s.empty() ? 1 : numel(Shape(s.begin() + 1, s.end()));
}

Var Tape::constant(Tensor t)
{
    nodes_.push_back(Node{std::move(t), {}, false, {}});
    return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor t)
{
    nodes_.push_back(Node{std::move(t), {}, true, {}});
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> parents, Backward backward)
{
    const bool needs = std::any_of(parents.begin(), parents.end(), [&](std::size_t p) { return nodes_[p].requires_grad; });
    nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : Backward{}});
    return Var(this, nodes_.size() - 1);
}

std::span<const double> Tape::grad(std::size_t id) const
{
    const auto& n = nodes_[id];
    if (!n.grad.empty() || n.value.data.empty())
        return n.grad;
    auto& zeros = const_cast<Buffer&>(zeros_);
    if (zeros.size() < n.value.data.size())
        zeros.assign(n.value.data.size(), 0.0);
    return std::span<const double>(zeros.data(), n.value.data.size());
}

std::span<double> Tape::grad_mut(std::size_t id)
{
    auto& n = nodes_[id];
    if (n.grad.empty())
        n.grad.assign(n.value.data.size(), 0.0);
    return n.grad;
}

void Tape::backward(Var loss)
{
    if (loss.tape() != this)
        throw ShapeError("backward on a value from another tape");
    if (loss.size() != 1)
        throw ShapeError("backward needs a single-element loss, got shape " + to_string(loss.shape()));
    for (auto& n : nodes_)
        n.grad.clear();
    grad_mut(loss.id())[0] = 1.0;
    for (std::size_t k = loss.id() + 1; k-- > 0;) {
        auto& n = nodes_[k];
        if (n.backward && !n.grad.empty())
            n.backward(*this, k);
    }
}

// ---------------------------------------------------------------------------

Var add(Var a, Var b)
{
    require_same_shape("add", a, b);
    Tensor out(a.shape());
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t k = 0; k < out.size(); ++k)
        out.data[k] = x[k] + y[k];
    const auto ia = a.id(), ib = b.id();
    return a.tape()->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        for (auto id : {ia, ib}) {
            if (!t.requires_grad(id))
                continue;
            auto ga = t.grad_mut(id);
            for (std::size_t k = 0; k < g.size(); ++k)
                ga[k] += g[k];
        }
    });
}

Var sub(Var a, Var b)
{
    require_same_shape("sub", a, b);
    Tensor out(a.shape());
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t k = 0; k < out.size(); ++k)
        out.data[k] = x[k] - y[k];
    const auto ia = a.id(), ib = b.id();
    return a.tape()->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        if (t.requires_grad(ia)) {
            auto ga = t.grad_mut(ia);
            for (std::size_t k = 0; k < g.size(); ++k)
                ga[k] += g[k];
        }
        if (t.requires_grad(ib)) {
            auto gb = t.grad_mut(ib);
            for (std::size_t k = 0; k < g.size(); ++k)
                gb[k] -= g[k];
        }
    });
}

Var mul(Var a, Var b)
{
    require_same_shape("mul", a, b);
    Tensor out(a.shape());
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t k = 0; k < out.size(); ++k)
        out.data[k] = x[k] * y[k];
    const auto ia = a.id(), ib = b.id();
    return a.tape()->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        const auto x = t.value(ia);
        const auto y = t.value(ib);
        if (t.requires_grad(ia)) {
            auto ga = t.grad_mut(ia);
            for (std::size_t k = 0; k < g.size(); ++k)
                ga[k] += g[k] * y[k];
        }
        if (t.requires_grad(ib)) {
            auto gb = t.grad_mut(ib);
            for (std::size_t k = 0; k < g.size(); ++k)
                gb[k] += g[k] * x[k];
        }
    });
}

Var scale(Var a, double s)
{
    Tensor out(a.shape());
    const auto x = a.data();
    for (std::size_t k = 0; k < out.size(); ++k)
        out.data[k] = s * x[k];
    const auto ia = a.id();
    return a.tape()->record(std::move(out), {ia}, [ia, s](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        auto ga = t.grad_mut(ia);
        for (std::size_t k = 0; k < g.size(); ++k)
            ga[k] += s * g[k];
    });
}

Var add_row(Var a, Var bias)
{
    require_same_tape(a, bias);
    const std::size_t n = a.rows(), m = cols_of(a);
    if (bias.size() != m)
        throw ShapeError("add_row: bias of shape " + to_string(bias.shape()) + " does not match rows of " +
                         to_string(a.shape()));
    Tensor out(a.shape());
    const auto x = a.data();
    const auto b = bias.data();
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c)
            out.data[r * m + c] = x[r * m + c] + b[c];
    const auto ia = a.id(), ib = bias.id();
    return a.tape()->record(std::move(out), {ia, ib}, [ia, ib, n, m](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        if (t.requires_grad(ia)) {
            auto ga = t.grad_mut(ia);
            for (std::size_t k = 0; k < g.size(); ++k)
                ga[k] += g[k];
        }
        if (t.requires_grad(ib)) {
            auto gb = t.grad_mut(ib);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < m; ++c)
                    gb[c] += g[r * m + c];
        }
    });
}

Var mul_rows(Var a, Var gate)
{
    require_same_tape(a, gate);
    const std::size_t n = a.rows(), m = cols_of(a);
    if (gate.size() != n)
        throw ShapeError("mul_rows: gate of shape " + to_string(gate.shape()) + " does not match " +
                         to_string(a.shape()));
    Tensor out(a.shape());
    const auto x = a.data();
    const auto s = gate.data();
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c)
            out.data[r * m + c] = x[r * m + c] * s[r];
    const auto ia = a.id(), is = gate.id();
    return a.tape()->record(std::move(out), {ia, is}, [ia, is, n, m](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        const auto x = t.value(ia);
        const auto s = t.value(is);
        if (t.requires_grad(ia)) {
            auto ga = t.grad_mut(ia);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < m; ++c)
                    ga[r * m + c] += g[r * m + c] * s[r];
        }
        if (t.requires_grad(is)) {
            auto gs = t.grad_mut(is);
            for (std::size_t r = 0; r < n; ++r) {
                double acc = 0.0;
                for (std::size_t c = 0; c < m; ++c)
                    acc += g[r * m + c] * x[r * m + c];
                gs[r] += acc;
            }
        }
    });
}

Var matmul(Var a, Var b)
{
    require_same_tape(a, b);
    const std::size_t n = a.rows(), k = cols_of(a);
    const std::size_t kb = b.rows(), m = cols_of(b);
    if (k != kb)
        throw ShapeError("matmul: shape mismatch " + to_string(a.shape()) + " x " + to_string(b.shape()));
    Tensor out(Shape{n, m});
    as_matrix(std::span<double>(out.data), n, m).noalias() = as_matrix(a.data(), n, k) * as_matrix(b.data(), k, m);
    const auto ia = a.id(), ib = b.id();
    return a.tape()->record(std::move(out), {ia, ib}, [ia, ib, n, k, m](Tape& t, std::size_t self) {
        const auto g = as_matrix(t.grad(self), n, m);
        if (t.requires_grad(ia))
            as_matrix(t.grad_mut(ia), n, k).noalias() += g * as_matrix(t.value(ib), k, m).transpose();
        if (t.requires_grad(ib))
            as_matrix(t.grad_mut(ib), k, m).noalias() += as_matrix(t.value(ia), n, k).transpose() * g;
    });
}

Var affine(Var a, Var w, Var bias)
{
    require_same_tape(a, w);
    require_same_tape(a, bias);
    const std::size_t n = a.rows(), k = cols_of(a);
    const std::size_t kb = w.rows(), m = cols_of(w);
    if (k != kb || bias.size() != m)
        throw ShapeError("affine: shape mismatch " + to_string(a.shape()) + " x " + to_string(w.shape()) + " + " +
                         to_string(bias.shape()));
    Tensor out(Shape{n, m});
    auto y = as_matrix(std::span<double>(out.data), n, m);
    y.noalias() = as_matrix(a.data(), n, k) * as_matrix(w.data(), k, m);
    y.rowwise() += as_matrix(bias.data(), 1, m).row(0);
    const auto ia = a.id(), iw = w.id(), ib = bias.id();
    return a.tape()->record(std::move(out), {ia, iw, ib}, [ia, iw, ib, n, k, m](Tape& t, std::size_t self) {
        const auto g = as_matrix(t.grad(self), n, m);
        if (t.requires_grad(ia))
            as_matrix(t.grad_mut(ia), n, k).noalias() += g * as_matrix(t.value(iw), k, m).transpose();
        if (t.requires_grad(iw))
            as_matrix(t.grad_mut(iw), k, m).noalias() += as_matrix(t.value(ia), n, k).transpose() * g;
        if (t.requires_grad(ib))
            as_matrix(t.grad_mut(ib), 1, m) += g.colwise().sum();
    });
}

Var concat(std::span<const Var> parts)
{
    if (parts.empty())
        throw ShapeError("concat of nothing");
    const std::size_t n = parts[0].rows();
    std::vector<std::size_t> widths;
    std::vector<std::size_t> ids;
    std::size_t total = 0;
    for (const auto& p : parts) {
        require_same_tape(parts[0], p);
        if (p.rows() != n)
            throw ShapeError("concat: row mismatch " + to_string(parts[0].shape()) + " vs " + to_string(p.shape()));
        widths.push_back(cols_of(p));
        ids.push_back(p.id());
        total += widths.back();
    }
    Tensor out(Shape{n, total});
    std::size_t offset = 0;
    for (std::size_t q = 0; q < parts.size(); ++q) {
        const auto x = parts[q].data();
        const auto w = widths[q];
        for (std::size_t r = 0; r < n; ++r)
            std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(r * w), w, out.data.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
        offset += w;
    }
    return parts[0].tape()->record(std::move(out), ids, [ids, widths, n, total](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        std::size_t offset = 0;
        for (std::size_t q = 0; q < ids.size(); ++q) {
            const auto w = widths[q];
            if (t.requires_grad(ids[q])) {
                auto gq = t.grad_mut(ids[q]);
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t c = 0; c < w; ++c)
                        gq[r * w + c] += g[r * total + offset + c];
            }
            offset += w;
        }
    });
}

Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }

Var slice(Var a, std::size_t begin, std::size_t end)
{
    const std::size_t n = a.rows(), m = cols_of(a);
    if (begin > end || end > m)
        throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for " +
                         to_string(a.shape()));
    const std::size_t w = end - begin;
    Tensor out(Shape{n, w});
    const auto x = a.data();
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < w; ++c)
            out.data[r * w + c] = x[r * m + begin + c];
    const auto ia = a.id();
    return a.tape()->record(std::move(out), {ia}, [ia, n, m, w, begin](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        auto ga = t.grad_mut(ia);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < w; ++c)
                ga[r * m + begin + c] += g[r * w + c];
    });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end)
{
    const std::size_t n = a.rows(), m = cols_of(a);
    if (begin > end || end > n)
        throw ShapeError("slice_rows [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + to_string(a.shape()));
    const auto x = a.data();
    Tensor out(Shape{end - begin, m}, x.subspan(begin * m, (end - begin) * m));
    const auto ia = a.id();
    return a.tape()->record(std::move(out), {ia}, [ia, m, begin](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        auto ga = t.grad_mut(ia);
        for (std::size_t k = 0; k < g.size(); ++k)
            ga[begin * m + k] += g[k];
    });
}

Var reshape(Var a, Shape shape)
{
    if (numel(shape) != a.size())
        throw ShapeError("reshape " + to_string(a.shape()) + " -> " + to_string(shape));
    const auto x = a.data();
    Tensor out(std::move(shape), x);
    const auto ia = a.id();
    return a.tape()->record(std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        auto ga = t.grad_mut(ia);
        for (std::size_t k = 0; k < g.size(); ++k)
            ga[k] += g[k];
    });
}

Var sum(Var a, int axis)
{
    const std::size_t n = a.rows(), m = cols_of(a);
    const auto x = a.data();
    const auto ia = a.id();
    if (axis == 0) {
        Tensor out(Shape{m});
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c)
                out.data[c] += x[r * m + c];
        return a.tape()->record(std::move(out), {ia}, [ia, n, m](Tape& t, std::size_t self) {
            const auto g = t.grad(self);
            auto ga = t.grad_mut(ia);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < m; ++c)
                    ga[r * m + c] += g[c];
        });
    }
    if (axis == 1) {
        Tensor out(Shape{n, 1});
        for (std::size_t r = 0; r < n; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < m; ++c)
                acc += x[r * m + c];
            out.data[r] = acc;
        }
        return a.tape()->record(std::move(out), {ia}, [ia, n, m](Tape& t, std::size_t self) {
            const auto g = t.grad(self);
            auto ga = t.grad_mut(ia);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < m; ++c)
                    ga[r * m + c] += g[r];
        });
    }
    throw ShapeError("sum: axis must be 0 or 1");
}

Var sum_all(Var a)
{
    const auto x = a.data();
    Tensor out(Shape{1});
    for (double v : x)
        out.data[0] += v;
    const auto ia = a.id();
    return a.tape()->record(std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        for (auto& v : t.grad_mut(ia))
            v += g;
    });
}

Var tanh(Var a)
{
    Tensor out(a.shape());
    const auto x = as_array(a.data());
    // 1 - 2 / (1 + e^{2x}) keeps the vectorized exp; saturates cleanly
    as_array(std::span<double>(out.data)) = 1.0 - 2.0 / (1.0 + (2.0 * x).exp());
    const auto ia = a.id();
    return a.tape()->record(std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
        const auto g = as_array(t.grad(self));
        const auto y = as_array(t.value(self));
        as_array(t.grad_mut(ia)) += g * (1.0 - y.square());
    });
}

Var logistic(Var a)
{
    Tensor out(a.shape());
    const auto x = as_array(a.data());
    as_array(std::span<double>(out.data)) = 1.0 / (1.0 + (-x).exp());
    const auto ia = a.id();
    return a.tape()->record(std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
        const auto g = as_array(t.grad(self));
        const auto y = as_array(t.value(self));
        as_array(t.grad_mut(ia)) += g * y * (1.0 - y);
    });
}

Var gather_rows(Var a, std::span<const std::uint32_t> index)
{
    const std::size_t n = a.rows(), m = cols_of(a);
    Tensor out(Shape{index.size(), m});
    const auto x = a.data();
    for (std::size_t r = 0; r < index.size(); ++r) {
        if (index[r] >= n)
            throw ShapeError("gather_rows: index " + std::to_string(index[r]) + " out of range for " +
                             to_string(a.shape()));
        std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(index[r] * m), m,
                    out.data.begin() + static_cast<std::ptrdiff_t>(r * m));
    }
    const auto ia = a.id();
    std::vector<std::uint32_t> idx(index.begin(), index.end());
    return a.tape()->record(std::move(out), {ia}, [ia, m, idx = std::move(idx)](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        auto ga = t.grad_mut(ia);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            double* dst = ga.data() + idx[r] * m;
            const double* src = g.data() + r * m;
            for (std::size_t c = 0; c < m; ++c)
                dst[c] += src[c];
        }
    });
}

Var scatter_add_rows(Var a, std::span<const std::uint32_t> index, std::size_t rows)
{
    const std::size_t n = a.rows(), m = cols_of(a);
    if (index.size() != n)
        throw ShapeError("scatter_add_rows: " + std::to_string(index.size()) + " indices for " + to_string(a.shape()));
    Tensor out(Shape{rows, m});
    const auto x = a.data();
    for (std::size_t r = 0; r < n; ++r) {
        if (index[r] >= rows)
            throw ShapeError("scatter_add_rows: index out of range");
        double* dst = out.data.data() + index[r] * m;
        const double* src = x.data() + r * m;
        for (std::size_t c = 0; c < m; ++c)
            dst[c] += src[c];
    }
    const auto ia = a.id();
    std::vector<std::uint32_t> idx(index.begin(), index.end());
    return a.tape()->record(std::move(out), {ia}, [ia, m, idx = std::move(idx)](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        auto ga = t.grad_mut(ia);
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const double* src = g.data() + idx[r] * m;
            double* dst = ga.data() + r * m;
            for (std::size_t c = 0; c < m; ++c)
                dst[c] += src[c];
        }
    });
}

Var batched_matmul(Var a, Var b, std::size_t p, std::size_t q, std::size_t r)
{
    require_same_tape(a, b);
    const std::size_t e = a.rows();
    if (b.rows() != e || cols_of(a) != p * q || cols_of(b) != q * r)
        throw ShapeError("batched_matmul: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                         " do not hold " + std::to_string(p) + "x" + std::to_string(q) + " and " +
                         std::to_string(q) + "x" + std::to_string(r) + " blocks");
    Tensor out(Shape{e, p * r});
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t n = 0; n < e; ++n) {
        const double* A = x.data() + n * p * q;
        const double* B = y.data() + n * q * r;
        double* C = out.data.data() + n * p * r;
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t k = 0; k < q; ++k) {
                const double aik = A[i * q + k];
                for (std::size_t j = 0; j < r; ++j)
                    C[i * r + j] += aik * B[k * r + j];
            }
    }
    const auto ia = a.id(), ib = b.id();
    return a.tape()->record(std::move(out), {ia, ib}, [ia, ib, e, p, q, r](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        const auto x = t.value(ia);
        const auto y = t.value(ib);
        const bool ga_on = t.requires_grad(ia), gb_on = t.requires_grad(ib);
        double* GA = ga_on ? t.grad_mut(ia).data() : nullptr;
        double* GB = gb_on ? t.grad_mut(ib).data() : nullptr;
        for (std::size_t n = 0; n < e; ++n) {
            const double* A = x.data() + n * p * q;
            const double* B = y.data() + n * q * r;
            const double* G = g.data() + n * p * r;
            if (ga_on) {
                double* dA = GA + n * p * q;
                for (std::size_t i = 0; i < p; ++i)
                    for (std::size_t k = 0; k < q; ++k) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < r; ++j)
                            acc += G[i * r + j] * B[k * r + j];
                        dA[i * q + k] += acc;
                    }
            }
            if (gb_on) {
                double* dB = GB + n * q * r;
                for (std::size_t i = 0; i < p; ++i)
                    for (std::size_t k = 0; k < q; ++k) {
                        const double aik = A[i * q + k];
                        for (std::size_t j = 0; j < r; ++j)
                            dB[k * r + j] += aik * G[i * r + j];
                    }
            }
        }
    });
}

Var rotate_vectors(Var a, std::span<const Mat3> rot)
{
    const std::size_t e = a.rows(), m = cols_of(a);
    if (rot.size() != e || m % 3 != 0)
        throw ShapeError("rotate_vectors: " + std::to_string(rot.size()) + " rotations for " + to_string(a.shape()));
    const std::size_t channels = m / 3;
    Tensor out(a.shape());
    const auto x = a.data();
    for (std::size_t n = 0; n < e; ++n)
        for (std::size_t c = 0; c < channels; ++c) {
            const double* v = x.data() + n * m + 3 * c;
            const Vec3 w = rot[n] * Vec3{v[0], v[1], v[2]};
            double* o = out.data.data() + n * m + 3 * c;
            o[0] = w.x;
            o[1] = w.y;
            o[2] = w.z;
        }
    const auto ia = a.id();
    std::vector<Mat3> rots(rot.begin(), rot.end());
    return a.tape()->record(std::move(out), {ia}, [ia, m, channels, rots = std::move(rots)](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        auto ga = t.grad_mut(ia);
        for (std::size_t n = 0; n < rots.size(); ++n) {
            const Mat3 rt = rots[n].transposed();
            for (std::size_t c = 0; c < channels; ++c) {
                const double* gv = g.data() + n * m + 3 * c;
                const Vec3 w = rt * Vec3{gv[0], gv[1], gv[2]};
                double* o = ga.data() + n * m + 3 * c;
                o[0] += w.x;
                o[1] += w.y;
                o[2] += w.z;
            }
        }
    });
}

Var conjugate_tensors(Var a, std::span<const Mat3> rot)
{
    const std::size_t e = a.rows(), m = cols_of(a);
    if (rot.size() != e || m % 9 != 0)
        throw ShapeError("conjugate_tensors: " + std::to_string(rot.size()) + " rotations for " +
                         to_string(a.shape()));
    const std::size_t channels = m / 9;
    Tensor out(a.shape());
    const auto x = a.data();
    for (std::size_t n = 0; n < e; ++n)
        for (std::size_t c = 0; c < channels; ++c) {
            Mat3 block;
            std::copy_n(x.data() + n * m + 9 * c, 9, block.e.begin());
            const Mat3 res = conjugate(rot[n], block);
            std::copy_n(res.e.begin(), 9, out.data.data() + n * m + 9 * c);
        }
    const auto ia = a.id();
    std::vector<Mat3> rots(rot.begin(), rot.end());
    return a.tape()->record(std::move(out), {ia}, [ia, m, channels, rots = std::move(rots)](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        auto ga = t.grad_mut(ia);
        for (std::size_t n = 0; n < rots.size(); ++n) {
            const Mat3 rt = rots[n].transposed();
            for (std::size_t c = 0; c < channels; ++c) {
                Mat3 block;
                std::copy_n(g.data() + n * m + 9 * c, 9, block.e.begin());
                // adjoint of T -> R T R^T is G -> R^T G R
                const Mat3 res = conjugate(rt, block);
                double* o = ga.data() + n * m + 9 * c;
                for (std::size_t k = 0; k < 9; ++k)
                    o[k] += res.e[k];
            }
        }
    });
}

} // namespace svtpol::ad
