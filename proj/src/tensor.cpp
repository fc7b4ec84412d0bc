#include "sparselab/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>

#include "sparselab/errors.hpp"
#include "sparselab/kernels.hpp"

namespace sparselab {

namespace {

std::atomic<std::uint64_t> next_tensor_id{1};

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                             shape_str(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
}

bool any_requires_grad(std::span<const Tensor> ts) {
    return std::any_of(ts.begin(), ts.end(), [](const Tensor& t) { return t.requires_grad(); });
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

struct Tensor::Storage {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::uint64_t id = 0;
};

Tensor::Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : storage_(std::make_shared<Storage>()) {
    for (auto d : shape) {
        if (d == 0) {
            throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
        }
    }
    if (shape_size(shape) != values.size()) {
        throw DimensionError("shape " + shape_str(shape) + " does not match " +
                             std::to_string(values.size()) + " values");
    }
    storage_->shape = std::move(shape);
    storage_->values = std::move(values);
    storage_->requires_grad = requires_grad;
    storage_->id = next_tensor_id.fetch_add(1, std::memory_order_relaxed);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

const Shape& Tensor::shape() const { return storage_->shape; }
std::size_t Tensor::size() const { return storage_->values.size(); }
std::size_t Tensor::rank() const { return storage_->shape.size(); }

std::size_t Tensor::rows() const {
    require_rank2(*this, "rows");
    return storage_->shape[0];
}

std::size_t Tensor::cols() const {
    require_rank2(*this, "cols");
    return storage_->shape[1];
}

std::span<const double> Tensor::values() const { return storage_->values; }
std::span<double> Tensor::values() { return storage_->values; }

double Tensor::item() const {
    if (size() != 1) {
        throw ContractError("item() on tensor of shape " + shape_str(shape()));
    }
    return storage_->values[0];
}

bool Tensor::requires_grad() const { return storage_->requires_grad; }
void Tensor::set_requires_grad(bool on) { storage_->requires_grad = on; }
bool Tensor::has_grad() const { return storage_->has_grad; }

std::span<const double> Tensor::grad() const {
    if (!storage_->has_grad) {
        throw ContractError("tensor has no gradient buffer");
    }
    return storage_->grad;
}

std::span<double> Tensor::grad() {
    if (!storage_->has_grad) {
        throw ContractError("tensor has no gradient buffer");
    }
    return storage_->grad;
}

std::span<double> Tensor::ensure_grad() const {
    if (!storage_->has_grad) {
        storage_->grad.assign(storage_->values.size(), 0.0);
        storage_->has_grad = true;
    }
    return storage_->grad;
}

void Tensor::zero_grad() {
    storage_->grad.assign(storage_->values.size(), 0.0);
    storage_->has_grad = true;
}

void Tensor::clear_grad() {
    storage_->grad.clear();
    storage_->grad.shrink_to_fit();
    storage_->has_grad = false;
}

std::uint64_t Tensor::id() const { return storage_->id; }
bool Tensor::aliases(const Tensor& other) const { return storage_ == other.storage_; }

Tensor Tensor::clone() const {
    return Tensor(storage_->shape, storage_->values, storage_->requires_grad);
}

// ---- tape ---------------------------------------------------------------

void Tape::record(std::span<const Tensor> inputs, const Tensor& output, Backward backward) {
    for (const auto& in : inputs) {
        if (in.id() >= output.id()) {
            throw ContractError("tape: input created after the op output");
        }
    }
    entries_.push_back(Entry{output, std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
    if (loss.size() != 1) {
        throw ContractError("backward: loss must be a scalar, got shape " +
                            shape_str(loss.shape()));
    }
    for (auto& e : entries_) {
        e.output.zero_grad();
    }
    Tensor seed = loss;
    seed.ensure_grad()[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        it->backward();
    }
}

std::vector<std::uint64_t> Tape::recorded_ids() const {
    std::vector<std::uint64_t> ids;
    ids.reserve(entries_.size());
    for (const auto& e : entries_) {
        ids.push_back(e.output.id());
    }
    return ids;
}

// ---- primitives ---------------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) {
        throw DimensionError("matmul: inner dimensions differ for " + shape_str(a.shape()) +
                             " x " + shape_str(b.shape()));
    }
    Tensor out = Tensor::zeros({m, n}, a.requires_grad() || b.requires_grad());
    kernels::gemm_nn(a.values(), b.values(), out.values(), m, k, n);
    if (out.requires_grad()) {
        const Tensor ins[] = {a, b};
        tape.record(ins, out, [a, b, out, m, k, n]() mutable {
            const auto dc = std::as_const(out).grad();
            std::vector<double> tmp;
            if (a.requires_grad()) {
                tmp.assign(m * k, 0.0);
                kernels::gemm_nt(dc, b.values(), tmp, m, n, k);
                auto ga = a.ensure_grad();
                for (std::size_t i = 0; i < tmp.size(); ++i) {
                    ga[i] += tmp[i];
                }
            }
            if (b.requires_grad()) {
                tmp.assign(k * n, 0.0);
                kernels::gemm_tn(std::as_const(a).values(), dc, tmp, k, m, n);
                auto gb = b.ensure_grad();
                for (std::size_t i = 0; i < tmp.size(); ++i) {
                    gb[i] += tmp[i];
                }
            }
        });
    }
    return out;
}

Tensor transpose(Tape& tape, const Tensor& a) {
    require_rank2(a, "transpose");
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out = Tensor::zeros({n, m}, a.requires_grad());
    auto src = a.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            dst[j * m + i] = src[i * n + j];
        }
    }
    if (out.requires_grad()) {
        const Tensor ins[] = {a};
        tape.record(ins, out, [a, out, m, n]() mutable {
            const auto g = std::as_const(out).grad();
            auto ga = a.ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    ga[i * n + j] += g[j * m + i];
                }
            }
        });
    }
    return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    const Tensor ins[] = {a, b};
    Tensor out = Tensor::zeros(a.shape(), any_requires_grad(ins));
    auto av = a.values(), bv = b.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) {
        ov[i] = av[i] + bv[i];
    }
    if (out.requires_grad()) {
        tape.record(ins, out, [a, b, out]() mutable {
            const auto g = std::as_const(out).grad();
            for (const Tensor* t : {&a, &b}) {
                if (t->requires_grad()) {
                    auto gt = t->ensure_grad();
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        gt[i] += g[i];
                    }
                }
            }
        });
    }
    return out;
}

Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias) {
    require_rank2(x, "add_bias");
    const std::size_t m = x.rows(), n = x.cols();
    if (bias.size() != n || bias.rank() != 1) {
        throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not fit " +
                             shape_str(x.shape()));
    }
    const Tensor ins[] = {x, bias};
    Tensor out = Tensor::zeros({m, n}, any_requires_grad(ins));
    auto xv = x.values(), bv = bias.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            ov[i * n + j] = xv[i * n + j] + bv[j];
        }
    }
    if (out.requires_grad()) {
        tape.record(ins, out, [x, bias, out, m, n]() mutable {
            const auto g = std::as_const(out).grad();
            if (x.requires_grad()) {
                auto gx = x.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    gx[i] += g[i];
                }
            }
            if (bias.requires_grad()) {
                auto gb = bias.ensure_grad();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        gb[j] += g[i * n + j];
                    }
                }
            }
        });
    }
    return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    const Tensor ins[] = {a, b};
    Tensor out = Tensor::zeros(a.shape(), any_requires_grad(ins));
    auto av = a.values(), bv = b.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) {
        ov[i] = av[i] * bv[i];
    }
    if (out.requires_grad()) {
        tape.record(ins, out, [a, b, out]() mutable {
            const auto g = std::as_const(out).grad();
            const auto av = std::as_const(a).values();
            const auto bv = std::as_const(b).values();
            if (a.requires_grad()) {
                auto ga = a.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    ga[i] += g[i] * bv[i];
                }
            }
            if (b.requires_grad()) {
                auto gb = b.ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    gb[i] += g[i] * av[i];
                }
            }
        });
    }
    return out;
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
    Tensor out = Tensor::zeros(x.shape(), x.requires_grad());
    auto xv = x.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) {
        ov[i] = xv[i] * factor;
    }
    if (out.requires_grad()) {
        const Tensor ins[] = {x};
        tape.record(ins, out, [x, out, factor]() mutable {
            const auto g = std::as_const(out).grad();
            auto gx = x.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                gx[i] += g[i] * factor;
            }
        });
    }
    return out;
}

Tensor relu(Tape& tape, const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape(), x.requires_grad());
    auto xv = x.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) {
        ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    }
    if (out.requires_grad()) {
        const Tensor ins[] = {x};
        tape.record(ins, out, [x, out]() mutable {
            const auto g = std::as_const(out).grad();
            const auto xv = std::as_const(x).values();
            auto gx = x.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (xv[i] > 0.0) {
                    gx[i] += g[i];
                }
            }
        });
    }
    return out;
}

Tensor softmax_rows(Tape& tape, const Tensor& x) {
    require_rank2(x, "softmax_rows");
    const std::size_t m = x.rows(), n = x.cols();
    for (double v : x.values()) {
        if (std::isnan(v)) {
            throw NumericError("softmax_rows: NaN input");
        }
    }
    Tensor out = Tensor::zeros({m, n}, x.requires_grad());
    if (!kernels::softmax_rows(x.values(), out.values(), m, n)) {
        throw NumericError("softmax_rows: row without a finite entry");
    }
    if (out.requires_grad()) {
        const Tensor ins[] = {x};
        tape.record(ins, out, [x, out, m, n]() mutable {
            const auto g = std::as_const(out).grad();
            const auto y = std::as_const(out).values();
            auto gx = x.ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    dot += g[i * n + j] * y[i * n + j];
                }
                for (std::size_t j = 0; j < n; ++j) {
                    gx[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
                }
            }
        });
    }
    return out;
}

Tensor causal_mask(Tape& tape, const Tensor& x) {
    require_rank2(x, "causal_mask");
    const std::size_t m = x.rows(), n = x.cols();
    Tensor out = x.clone();
    out.set_requires_grad(x.requires_grad());
    auto ov = out.values();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            ov[i * n + j] = -std::numeric_limits<double>::infinity();
        }
    }
    if (out.requires_grad()) {
        const Tensor ins[] = {x};
        tape.record(ins, out, [x, out, m, n]() mutable {
            const auto g = std::as_const(out).grad();
            auto gx = x.ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j <= i && j < n; ++j) {
                    gx[i * n + j] += g[i * n + j];
                }
            }
        });
    }
    return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
    if (x.rank() == 0) {
        throw DimensionError("layer_norm: scalar input");
    }
    const std::size_t n = x.shape().back();
    if (gain.size() != n || bias.size() != n) {
        throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                             shape_str(bias.shape()) + " do not match last dimension of " +
                             shape_str(x.shape()));
    }
    const std::size_t m = x.size() / n;
    const Tensor ins[] = {x, gain, bias};
    Tensor out = Tensor::zeros(x.shape(), any_requires_grad(ins));
    std::vector<double> xhat(x.size());
    std::vector<double> inv_std(m);
    auto xv = x.values(), gv = gain.values(), bv = bias.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < m; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            mean += xv[i * n + j];
        }
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = xv[i * n + j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            xhat[i * n + j] = (xv[i * n + j] - mean) * inv_std[i];
            ov[i * n + j] = xhat[i * n + j] * gv[j] + bv[j];
        }
    }
    if (out.requires_grad()) {
        tape.record(ins, out,
                    [x, gain, bias, out, m, n, xhat = std::move(xhat),
                     inv_std = std::move(inv_std)]() mutable {
                        const auto g = std::as_const(out).grad();
                        const auto gv = std::as_const(gain).values();
                        if (gain.requires_grad()) {
                            auto gg = gain.ensure_grad();
                            for (std::size_t i = 0; i < m; ++i) {
                                for (std::size_t j = 0; j < n; ++j) {
                                    gg[j] += g[i * n + j] * xhat[i * n + j];
                                }
                            }
                        }
                        if (bias.requires_grad()) {
                            auto gb = bias.ensure_grad();
                            for (std::size_t i = 0; i < m; ++i) {
                                for (std::size_t j = 0; j < n; ++j) {
                                    gb[j] += g[i * n + j];
                                }
                            }
                        }
                        if (x.requires_grad()) {
                            auto gx = x.ensure_grad();
                            const double inv_n = 1.0 / static_cast<double>(n);
                            for (std::size_t i = 0; i < m; ++i) {
                                double sum_d = 0.0, sum_dx = 0.0;
                                for (std::size_t j = 0; j < n; ++j) {
                                    const double d = g[i * n + j] * gv[j];
                                    sum_d += d;
                                    sum_dx += d * xhat[i * n + j];
                                }
                                for (std::size_t j = 0; j < n; ++j) {
                                    const double d = g[i * n + j] * gv[j];
                                    gx[i * n + j] += inv_std[i] * inv_n *
                                                     (static_cast<double>(n) * d - sum_d -
                                                      xhat[i * n + j] * sum_dx);
                                }
                            }
                        }
                    });
    }
    return out;
}

Tensor embedding(Tape& tape, const Tensor& table, std::span<const int> ids) {
    require_rank2(table, "embedding");
    const std::size_t vocab = table.rows(), d = table.cols();
    if (ids.empty()) {
        throw DimensionError("embedding: empty id list");
    }
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
            throw IndexError("embedding: id " + std::to_string(id) + " outside [0, " +
                             std::to_string(vocab) + ")");
        }
    }
    Tensor out = Tensor::zeros({ids.size(), d}, table.requires_grad());
    auto tv = table.values();
    auto ov = out.values();
    for (std::size_t r = 0; r < ids.size(); ++r) {
        const auto src = static_cast<std::size_t>(ids[r]) * d;
        std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(src), d,
                    ov.begin() + static_cast<std::ptrdiff_t>(r * d));
    }
    if (out.requires_grad()) {
        const Tensor ins[] = {table};
        tape.record(ins, out,
                    [table, out, d, ids = std::vector<int>(ids.begin(), ids.end())]() mutable {
                        const auto g = std::as_const(out).grad();
                        auto gt = table.ensure_grad();
                        for (std::size_t r = 0; r < ids.size(); ++r) {
                            const auto dst = static_cast<std::size_t>(ids[r]) * d;
                            for (std::size_t j = 0; j < d; ++j) {
                                gt[dst + j] += g[r * d + j];
                            }
                        }
                    });
    }
    return out;
}

Tensor slice(Tape& tape, const Tensor& x, std::size_t row0, std::size_t nrows, std::size_t col0,
             std::size_t ncols) {
    require_rank2(x, "slice");
    const std::size_t m = x.rows(), n = x.cols();
    if (nrows == 0 || ncols == 0 || row0 + nrows > m || col0 + ncols > n) {
        throw DimensionError("slice: block out of range for " + shape_str(x.shape()));
    }
    Tensor out = Tensor::zeros({nrows, ncols}, x.requires_grad());
    auto xv = x.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < nrows; ++i) {
        for (std::size_t j = 0; j < ncols; ++j) {
            ov[i * ncols + j] = xv[(row0 + i) * n + col0 + j];
        }
    }
    if (out.requires_grad()) {
        const Tensor ins[] = {x};
        tape.record(ins, out, [x, out, row0, nrows, col0, ncols, n]() mutable {
            const auto g = std::as_const(out).grad();
            auto gx = x.ensure_grad();
            for (std::size_t i = 0; i < nrows; ++i) {
                for (std::size_t j = 0; j < ncols; ++j) {
                    gx[(row0 + i) * n + col0 + j] += g[i * ncols + j];
                }
            }
        });
    }
    return out;
}

Tensor concat_rows(Tape& tape, std::span<const Tensor> parts) {
    if (parts.empty()) {
        throw DimensionError("concat_rows: no inputs");
    }
    const std::size_t n = parts[0].cols();
    std::size_t m = 0;
    for (const auto& p : parts) {
        if (p.cols() != n) {
            throw DimensionError("concat_rows: column mismatch " + shape_str(parts[0].shape()) +
                                 " vs " + shape_str(p.shape()));
        }
        m += p.rows();
    }
    Tensor out = Tensor::zeros({m, n}, any_requires_grad(parts));
    auto ov = out.values();
    std::size_t offset = 0;
    for (const auto& p : parts) {
        std::copy(p.values().begin(), p.values().end(),
                  ov.begin() + static_cast<std::ptrdiff_t>(offset));
        offset += p.size();
    }
    if (out.requires_grad()) {
        tape.record(parts, out,
                    [parts = std::vector<Tensor>(parts.begin(), parts.end()), out]() mutable {
                        const auto g = std::as_const(out).grad();
                        std::size_t offset = 0;
                        for (auto& p : parts) {
                            if (p.requires_grad()) {
                                auto gp = p.ensure_grad();
                                for (std::size_t i = 0; i < gp.size(); ++i) {
                                    gp[i] += g[offset + i];
                                }
                            }
                            offset += p.size();
                        }
                    });
    }
    return out;
}

Tensor concat_cols(Tape& tape, std::span<const Tensor> parts) {
    if (parts.empty()) {
        throw DimensionError("concat_cols: no inputs");
    }
    const std::size_t m = parts[0].rows();
    std::size_t n = 0;
    for (const auto& p : parts) {
        if (p.rows() != m) {
            throw DimensionError("concat_cols: row mismatch " + shape_str(parts[0].shape()) +
                                 " vs " + shape_str(p.shape()));
        }
        n += p.cols();
    }
    Tensor out = Tensor::zeros({m, n}, any_requires_grad(parts));
    auto ov = out.values();
    std::size_t col0 = 0;
    for (const auto& p : parts) {
        const std::size_t pc = p.cols();
        auto pv = p.values();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < pc; ++j) {
                ov[i * n + col0 + j] = pv[i * pc + j];
            }
        }
        col0 += pc;
    }
    if (out.requires_grad()) {
        tape.record(parts, out,
                    [parts = std::vector<Tensor>(parts.begin(), parts.end()), out, m,
                     n]() mutable {
                        const auto g = std::as_const(out).grad();
                        std::size_t col0 = 0;
                        for (auto& p : parts) {
                            const std::size_t pc = p.cols();
                            if (p.requires_grad()) {
                                auto gp = p.ensure_grad();
                                for (std::size_t i = 0; i < m; ++i) {
                                    for (std::size_t j = 0; j < pc; ++j) {
                                        gp[i * pc + j] += g[i * n + col0 + j];
                                    }
                                }
                            }
                            col0 += pc;
                        }
                    });
    }
    return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
    double total = 0.0;
    for (double v : x.values()) {
        total += v;
    }
    Tensor out = Tensor::scalar(total, x.requires_grad());
    if (out.requires_grad()) {
        const Tensor ins[] = {x};
        tape.record(ins, out, [x, out]() mutable {
            const double g = std::as_const(out).grad()[0];
            auto gx = x.ensure_grad();
            for (auto& v : gx) {
                v += g;
            }
        });
    }
    return out;
}

Tensor cross_entropy_loss(Tape& tape, const Tensor& logits, std::span<const int> targets) {
    require_rank2(logits, "cross_entropy_loss");
    const std::size_t batch = logits.rows(), vocab = logits.cols();
    if (targets.size() != batch) {
        throw DimensionError("cross_entropy_loss: " + std::to_string(targets.size()) +
                             " targets for logits " + shape_str(logits.shape()));
    }
    for (int t : targets) {
        if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
            throw IndexError("cross_entropy_loss: target " + std::to_string(t) +
                             " outside [0, " + std::to_string(vocab) + ")");
        }
    }
    std::vector<double> probs(logits.size());
    if (!kernels::softmax_rows(logits.values(), probs, batch, vocab)) {
        throw NumericError("cross_entropy_loss: non-finite logits");
    }
    auto lv = logits.values();
    double total = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
        const double* row = lv.data() + i * vocab;
        const double mx = *std::max_element(row, row + vocab);
        double z = 0.0;
        for (std::size_t j = 0; j < vocab; ++j) {
            z += std::exp(row[j] - mx);
        }
        total += -(row[targets[i]] - mx - std::log(z));
    }
    Tensor out = Tensor::scalar(total / static_cast<double>(batch), logits.requires_grad());
    if (out.requires_grad()) {
        const Tensor ins[] = {logits};
        tape.record(ins, out,
                    [logits, out, batch, vocab, probs = std::move(probs),
                     targets = std::vector<int>(targets.begin(), targets.end())]() mutable {
                        const double g = std::as_const(out).grad()[0] /
                                         static_cast<double>(batch);
                        auto gl = logits.ensure_grad();
                        for (std::size_t i = 0; i < batch; ++i) {
                            for (std::size_t j = 0; j < vocab; ++j) {
                                const double onehot =
                                    static_cast<std::size_t>(targets[i]) == j ? 1.0 : 0.0;
                                gl[i * vocab + j] += g * (probs[i * vocab + j] - onehot);
                            }
                        }
                    });
    }
    return out;
}

}  // namespace sparselab
