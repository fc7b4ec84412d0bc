#include "sparselab/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "sparselab/errors.hpp"
#include "sparselab/rng.hpp"

namespace sparselab {

void ModelConfig::validate() const {
    std::vector<std::string> problems;
    auto positive = [&](std::size_t v, const char* name) {
        if (v == 0) {
            problems.push_back(std::string(name) + " must be positive");
        }
    };
    positive(vocab_size, "vocab_size");
    positive(d_model, "d_model");
    positive(n_heads, "n_heads");
    positive(n_layers, "n_layers");
    positive(d_ff, "d_ff");
    positive(max_seq_len, "max_seq_len");
    if (n_heads != 0 && d_model % n_heads != 0) {
        problems.push_back("d_model (" + std::to_string(d_model) +
                           ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
    }
    if (vocab_size == 1) {
        problems.push_back("vocab_size must leave room for data tokens beside the start token");
    }
    if (!problems.empty()) {
        std::string msg = "invalid model config:";
        for (const auto& p : problems) {
            msg += "\n  " + p;
        }
        throw ConfigError(msg);
    }
}

// ---- registry -----------------------------------------------------------

void ParamRegistry::add(std::string name, Tensor tensor, std::size_t fan_in,
                        std::size_t fan_out) {
    if (find(name) != nullptr) {
        throw ContractError("duplicate parameter name: " + name);
    }
    const bool prunable = tensor.rank() >= 2;
    if (prunable && (fan_in == 0 || fan_out == 0)) {
        throw ContractError("matrix parameter " + name + " needs fan_in and fan_out");
    }
    tensor.set_requires_grad(true);
    entries_.push_back(ParamEntry{std::move(name), std::move(tensor), prunable,
                                  prunable ? fan_in : 0, prunable ? fan_out : 0});
}

const ParamEntry* ParamRegistry::find(const std::string& name) const {
    auto it = std::find_if(entries_.begin(), entries_.end(),
                           [&](const ParamEntry& e) { return e.name == name; });
    return it == entries_.end() ? nullptr : &*it;
}

ParamEntry* ParamRegistry::find(const std::string& name) {
    return const_cast<ParamEntry*>(std::as_const(*this).find(name));
}

const ParamEntry& ParamRegistry::at(const std::string& name) const {
    const auto* e = find(name);
    if (e == nullptr) {
        throw ContractError("unknown parameter: " + name);
    }
    return *e;
}

ParamEntry& ParamRegistry::at(const std::string& name) {
    return const_cast<ParamEntry&>(std::as_const(*this).at(name));
}

std::size_t ParamRegistry::total_count() const {
    return std::accumulate(entries_.begin(), entries_.end(), std::size_t{0},
                           [](std::size_t acc, const ParamEntry& e) { return acc + e.tensor.size(); });
}

std::size_t ParamRegistry::prunable_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) {
        if (e.prunable) {
            n += e.tensor.size();
        }
    }
    return n;
}

void ParamRegistry::zero_grad() {
    for (auto& e : entries_) {
        e.tensor.zero_grad();
    }
}

ParamRegistry ParamRegistry::clone() const {
    ParamRegistry out;
    for (const auto& e : entries_) {
        out.entries_.push_back(ParamEntry{e.name, e.tensor.clone(), e.prunable, e.fan_in, e.fan_out});
        out.entries_.back().tensor.set_requires_grad(true);
    }
    return out;
}

bool ParamRegistry::bitwise_equal(const ParamRegistry& other) const {
    if (entries_.size() != other.entries_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& a = entries_[i];
        const auto& b = other.entries_[i];
        if (a.name != b.name || a.prunable != b.prunable || a.fan_in != b.fan_in ||
            a.fan_out != b.fan_out || a.tensor.shape() != b.tensor.shape()) {
            return false;
        }
        const auto av = a.tensor.values();
        const auto bv = b.tensor.values();
        for (std::size_t k = 0; k < av.size(); ++k) {
            if (std::bit_cast<std::uint64_t>(av[k]) != std::bit_cast<std::uint64_t>(bv[k])) {
                return false;
            }
        }
    }
    return true;
}

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

// ---- construction -------------------------------------------------------

namespace {

class Builder {
public:
    Builder(ParamRegistry& reg, std::uint64_t seed) : reg_(reg), rng_(seed) {}

    void matrix(const std::string& name, std::size_t rows, std::size_t cols) {
        const double lim = glorot_limit(rows, cols);
        std::vector<double> v(rows * cols);
        for (auto& x : v) {
            x = rng_.uniform(-lim, lim);
        }
        reg_.add(name, Tensor({rows, cols}, std::move(v)), rows, cols);
    }

    void vector(const std::string& name, std::size_t n, double fill) {
        reg_.add(name, Tensor({n}, std::vector<double>(n, fill)));
    }

    void linear(const std::string& name, std::size_t in, std::size_t out) {
        matrix(name + ".weight", in, out);
        vector(name + ".bias", out, 0.0);
    }

    void norm(const std::string& name, std::size_t d) {
        vector(name + ".gain", d, 1.0);
        vector(name + ".bias", d, 0.0);
    }

    void attention(const std::string& name, std::size_t d) {
        for (const char* p : {"q", "k", "v", "o"}) {
            linear(name + "." + p, d, d);
        }
    }

    void ffn(const std::string& name, std::size_t d, std::size_t d_ff) {
        linear(name + ".w1", d, d_ff);
        linear(name + ".w2", d_ff, d);
    }

private:
    ParamRegistry& reg_;
    Rng rng_;
};

}  // namespace

ParamRegistry build_model(const ModelConfig& cfg) {
    cfg.validate();
    ParamRegistry reg;
    Builder b(reg, cfg.seed);
    const std::size_t d = cfg.d_model;
    b.matrix("embed.token", cfg.vocab_size, d);
    b.matrix("embed.position", cfg.max_seq_len, d);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "enc." + std::to_string(l);
        b.norm(p + ".ln1", d);
        b.attention(p + ".attn", d);
        b.norm(p + ".ln2", d);
        b.ffn(p + ".ffn", d, cfg.d_ff);
    }
    b.norm("enc.norm", d);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "dec." + std::to_string(l);
        b.norm(p + ".ln1", d);
        b.attention(p + ".self", d);
        b.norm(p + ".ln2", d);
        b.attention(p + ".cross", d);
        b.norm(p + ".ln3", d);
        b.ffn(p + ".ffn", d, cfg.d_ff);
    }
    b.norm("dec.norm", d);
    b.linear("out", d, cfg.vocab_size);
    return reg;
}

// ---- forward ------------------------------------------------------------

namespace {

constexpr double kNormEps = 1e-5;

class Forward {
public:
    Forward(Tape& tape, const ModelConfig& cfg, const ParamRegistry& reg)
        : tape_(tape), cfg_(cfg), reg_(reg) {}

    const Tensor& p(const std::string& name) const { return reg_.at(name).tensor; }

    Tensor linear(const Tensor& x, const std::string& name) {
        return add_bias(tape_, matmul(tape_, x, p(name + ".weight")), p(name + ".bias"));
    }

    Tensor norm(const Tensor& x, const std::string& name) {
        return layer_norm(tape_, x, p(name + ".gain"), p(name + ".bias"), kNormEps);
    }

    Tensor embed(std::span<const int> ids, std::size_t batch, std::size_t len) {
        std::vector<int> pos(batch * len);
        for (std::size_t r = 0; r < pos.size(); ++r) {
            pos[r] = static_cast<int>(r % len);
        }
        return add(tape_, embedding(tape_, p("embed.token"), ids),
                   embedding(tape_, p("embed.position"), pos));
    }

    Tensor attention(const Tensor& xq, const Tensor& xkv, std::size_t batch, std::size_t lq,
                     std::size_t lk, const std::string& name, bool causal) {
        const Tensor q = linear(xq, name + ".q");
        const Tensor k = linear(xkv, name + ".k");
        const Tensor v = linear(xkv, name + ".v");
        const std::size_t dh = cfg_.head_dim();
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
        std::vector<Tensor> rows;
        rows.reserve(batch);
        std::vector<Tensor> heads(cfg_.n_heads);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t h = 0; h < cfg_.n_heads; ++h) {
                const Tensor qh = slice(tape_, q, b * lq, lq, h * dh, dh);
                const Tensor kh = slice(tape_, k, b * lk, lk, h * dh, dh);
                const Tensor vh = slice(tape_, v, b * lk, lk, h * dh, dh);
                Tensor s = scale(tape_, matmul(tape_, qh, transpose(tape_, kh)), inv_sqrt);
                if (causal) {
                    s = causal_mask(tape_, s);
                }
                heads[h] = matmul(tape_, softmax_rows(tape_, s), vh);
            }
            rows.push_back(concat_cols(tape_, heads));
        }
        return linear(concat_rows(tape_, rows), name + ".o");
    }

    Tensor ffn(const Tensor& x, const std::string& name) {
        return linear(relu(tape_, linear(x, name + ".w1")), name + ".w2");
    }

    Tensor run(const TokenBatch& batch) {
        const std::size_t B = batch.batch, ls = batch.src_len, lt = batch.tgt_len;
        Tensor x = embed(batch.src, B, ls);
        for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
            const std::string pre = "enc." + std::to_string(l);
            const Tensor h = norm(x, pre + ".ln1");
            x = add(tape_, x, attention(h, h, B, ls, ls, pre + ".attn", false));
            x = add(tape_, x, ffn(norm(x, pre + ".ln2"), pre + ".ffn"));
        }
        const Tensor memory = norm(x, "enc.norm");

        std::vector<int> dec_in(B * lt);
        for (std::size_t b = 0; b < B; ++b) {
            dec_in[b * lt] = kBosToken;
            for (std::size_t t = 1; t < lt; ++t) {
                dec_in[b * lt + t] = batch.tgt[b * lt + t - 1];
            }
        }
        Tensor y = embed(dec_in, B, lt);
        for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
            const std::string pre = "dec." + std::to_string(l);
            const Tensor h = norm(y, pre + ".ln1");
            y = add(tape_, y, attention(h, h, B, lt, lt, pre + ".self", true));
            y = add(tape_, y, attention(norm(y, pre + ".ln2"), memory, B, lt, ls, pre + ".cross", false));
            y = add(tape_, y, ffn(norm(y, pre + ".ln3"), pre + ".ffn"));
        }
        y = norm(y, "dec.norm");
        const double logit_scale = 1.0 / std::sqrt(static_cast<double>(cfg_.d_model));
        return add_bias(tape_, scale(tape_, matmul(tape_, y, p("out.weight")), logit_scale),
                        p("out.bias"));
    }

private:
    Tape& tape_;
    const ModelConfig& cfg_;
    const ParamRegistry& reg_;
};

void check_batch(const ModelConfig& cfg, const TokenBatch& batch) {
    if (batch.batch == 0 || batch.src_len == 0 || batch.tgt_len == 0) {
        throw DimensionError("empty token batch");
    }
    if (batch.src_len > cfg.max_seq_len || batch.tgt_len > cfg.max_seq_len) {
        throw LengthError("sequence length " + std::to_string(std::max(batch.src_len, batch.tgt_len)) +
                          " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
    }
    if (batch.src.size() != batch.batch * batch.src_len ||
        batch.tgt.size() != batch.batch * batch.tgt_len) {
        throw DimensionError("token matrix sizes do not match batch dimensions");
    }
    auto check_ids = [&](const std::vector<int>& ids) {
        for (int id : ids) {
            if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size) {
                throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " +
                                 std::to_string(cfg.vocab_size));
            }
        }
    };
    check_ids(batch.src);
    check_ids(batch.tgt);
}

}  // namespace

Tensor forward_logits(Tape& tape, const ModelConfig& cfg, const ParamRegistry& reg,
                      const TokenBatch& batch) {
    check_batch(cfg, batch);
    return Forward(tape, cfg, reg).run(batch);
}

Tensor forward_loss(Tape& tape, const ModelConfig& cfg, const ParamRegistry& reg,
                    const TokenBatch& batch) {
    const Tensor logits = forward_logits(tape, cfg, reg, batch);
    return cross_entropy_loss(tape, logits, batch.tgt);
}

EvalResult evaluate(const ModelConfig& cfg, const ParamRegistry& reg,
                    std::span<const TokenBatch> batches) {
    EvalResult r;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& batch : batches) {
        Tape tape;
        const Tensor logits = forward_logits(tape, cfg, reg, batch);
        const Tensor loss = cross_entropy_loss(tape, logits, batch.tgt);
        const std::size_t n = batch.tgt.size();
        loss_sum += loss.item() * static_cast<double>(n);
        const std::size_t vocab = logits.cols();
        const auto lv = logits.values();
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = lv.subspan(i * vocab, vocab);
            const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
            correct += best == batch.tgt[i] ? 1 : 0;
        }
        r.tokens += n;
    }
    if (r.tokens > 0) {
        r.loss = loss_sum / static_cast<double>(r.tokens);
        r.token_accuracy = static_cast<double>(correct) / static_cast<double>(r.tokens);
    }
    return r;
}

}  // namespace sparselab
