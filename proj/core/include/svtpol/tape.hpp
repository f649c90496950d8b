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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "svtpol/linalg3.hpp"

namespace svtpol::ad {

using Shape = std::vector<std::size_t>;

/// Allocates on 64-byte boundaries so vectorized kernels see the same
/// alignment, and therefore round the same way, on every run.
template <class T>
struct AlignedAllocator
{
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept
    {
    }

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <class U>
    friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept
    {
        return true;
    }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major array.
struct Tensor
{
    Shape shape;
    Buffer data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(numel(shape), 0.0) {}
    Tensor(Shape s, Buffer d);
    Tensor(Shape s, std::span<const double> d) : Tensor(std::move(s), Buffer(d.begin(), d.end())) {}
    Tensor(Shape s, std::initializer_list<double> d) : Tensor(std::move(s), Buffer(d)) {}

    std::size_t size() const { return data.size(); }
    /// Leading dimension; 1 for scalars.
    std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
    /// Elements per leading index.
    std::size_t row_size() const { return rows() == 0 ? 0 : size() / rows(); }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; valid as long as
/// the tape is alive.
class Var
{
public:
    Var() = default;

    const Shape& shape() const;
    std::span<const double> data() const;
    /// Gradient after Tape::backward; all zeros for values the loss does
    /// not depend on.
    std::span<const double> grad() const;
    Tensor value() const;
    double item() const;

    std::size_t rows() const;
    std::size_t row_size() const;
    std::size_t size() const { return data().size(); }

    Tape* tape() const { return tape_; }
    std::size_t id() const { return id_; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Records a computation for one reverse sweep. Single writer; values
/// are immutable once recorded.
class Tape
{
public:
    using Backward = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Value that takes no gradient.
    Var constant(Tensor t);
    /// Leaf whose gradient is tracked.
    Var variable(Tensor t);

    /// Resets every gradient, seeds d loss / d loss = 1 and sweeps the
    /// tape backwards. `loss` must hold exactly one element.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }

    // Internals used by the op implementations.
    Var record(Tensor value, std::vector<std::size_t> parents, Backward backward);
    const Shape& shape(std::size_t id) const { return nodes_[id].value.shape; }
    std::span<const double> value(std::size_t id) const { return nodes_[id].value.data; }
    std::span<const double> grad(std::size_t id) const;
    /// Mutable gradient buffer, allocated on first use.
    std::span<double> grad_mut(std::size_t id);
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }
    Var var(std::size_t id) { return Var(this, id); }

private:
    struct Node
    {
        Tensor value;
        Buffer grad;
        bool requires_grad = false;
        Backward backward;
    };
    std::vector<Node> nodes_;
    Buffer zeros_;
};

// ---------------------------------------------------------------------------
// Operations. Unless stated otherwise the operands are matrices
// [rows, cols] (a Var of any shape is read as [shape[0], rest]).

Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product of equal shapes.
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// a [n, m] + bias [m] on every row.
Var add_row(Var a, Var bias);
/// a [n, m] * g [n, 1]: row r scaled by g[r].
Var mul_rows(Var a, Var g);
/// [n, k] x [k, m] -> [n, m].
Var matmul(Var a, Var b);
/// a [n, k] x w [k, m] + bias [m] on every row.
Var affine(Var a, Var w, Var bias);
/// Concatenate along the trailing axis; all parts have the same rows.
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
/// Columns [begin, end) of a matrix.
Var slice(Var a, std::size_t begin, std::size_t end);
/// Rows [begin, end).
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var reshape(Var a, Shape shape);
/// axis 0: [n, m] -> [m]; axis 1: [n, m] -> [n, 1].
Var sum(Var a, int axis);
Var sum_all(Var a);
Var tanh(Var a);
/// 1 / (1 + exp(-a)).
Var logistic(Var a);
/// out[r] = a[index[r]].
Var gather_rows(Var a, std::span<const std::uint32_t> index);
/// out[index[r]] += a[r] for an output of `rows` rows.
Var scatter_add_rows(Var a, std::span<const std::uint32_t> index, std::size_t rows);
/// Per-row matrix product: a [E, p*q] as E matrices p x q, b [E, q*r]
/// -> [E, p*r].
Var batched_matmul(Var a, Var b, std::size_t p, std::size_t q, std::size_t r);
/// a [E, C*3]: every 3-vector of row e multiplied by the constant rot[e].
Var rotate_vectors(Var a, std::span<const Mat3> rot);
/// a [E, C*9]: every 3x3 block of row e conjugated, rot[e] T rot[e]^T.
Var conjugate_tensors(Var a, std::span<const Mat3> rot);

} // namespace svtpol::ad
