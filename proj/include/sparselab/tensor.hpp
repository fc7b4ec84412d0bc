#pragma once

// Dense 64-bit tensors with a tape-based reverse-mode autodiff.
//
// A Tensor is a cheap handle onto shared storage: copying the handle aliases
// the same values and gradient (use clone() for a deep copy). Ops take a Tape,
// compute their output eagerly, and record a closure that pushes the output
// gradient back to the inputs. Tape::backward walks those closures in reverse
// recording order.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sparselab {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor {
public:
    Tensor();
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    const Shape& shape() const;
    std::size_t size() const;
    std::size_t rank() const;
    std::size_t rows() const;  // rank-2 only
    std::size_t cols() const;  // rank-2 only

    std::span<const double> values() const;
    std::span<double> values();
    double item() const;

    bool requires_grad() const;
    void set_requires_grad(bool on);

    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> grad();
    /// Allocates the gradient buffer (zero-filled) if absent. Const on the
    /// handle: gradient accumulation is not a change to the tensor's value.
    std::span<double> ensure_grad() const;
    void zero_grad();
    void clear_grad();

    /// Creation sequence number; strictly increasing across all tensors.
    std::uint64_t id() const;
    bool aliases(const Tensor& other) const;
    Tensor clone() const;

private:
    struct Storage;
    std::shared_ptr<Storage> storage_;
};

class Tape {
public:
    using Backward = std::function<void()>;

    /// Records an op. Every input must have been created before the output.
    void record(std::span<const Tensor> inputs, const Tensor& output, Backward backward);

    /// Seeds d(loss)=1 and runs every recorded backward closure in reverse.
    /// Gradients of non-output tensors (parameters, inputs) accumulate across
    /// calls; intermediate gradients are recomputed each call.
    void backward(const Tensor& loss);

    std::size_t size() const { return entries_.size(); }
    void clear() { entries_.clear(); }

    /// Output ids in recording order (used by the ordering tests).
    std::vector<std::uint64_t> recorded_ids() const;

private:
    struct Entry {
        Tensor output;
        Backward backward;
    };
    std::vector<Entry> entries_;
};

// ---- primitives ---------------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
/// x[m×n] + bias[n] broadcast over rows.
Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double factor);
Tensor relu(Tape& tape, const Tensor& x);
Tensor softmax_rows(Tape& tape, const Tensor& x);
/// Sets x[i][j] = -inf for j > i. Used ahead of softmax_rows for causal attention.
Tensor causal_mask(Tape& tape, const Tensor& x);
/// Normalizes over the last dimension, then applies gain and bias.
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
/// Gathers rows of table[V×d] for each id.
Tensor embedding(Tape& tape, const Tensor& table, std::span<const int> ids);
/// Rank-2 sub-block [row0, row0+nrows) × [col0, col0+ncols).
Tensor slice(Tape& tape, const Tensor& x, std::size_t row0, std::size_t nrows, std::size_t col0,
             std::size_t ncols);
Tensor concat_rows(Tape& tape, std::span<const Tensor> parts);
Tensor concat_cols(Tape& tape, std::span<const Tensor> parts);
Tensor sum(Tape& tape, const Tensor& x);
/// Mean over rows of -log softmax(logits)[target].
Tensor cross_entropy_loss(Tape& tape, const Tensor& logits, std::span<const int> targets);

}  // namespace sparselab
