#pragma once

// Tiny encoder-decoder transformer over a toy vocabulary.
//
// Layout (pre-LN):
//   x   = tok_emb[src] + pos_emb[0..L)
//   enc = n_layers × { x += SelfAttn(LN(x)); x += FFN(LN(x)) }, then LN
//   y   = tok_emb[bos, tgt[0..L-1)] + pos_emb[0..L)
//   dec = n_layers × { y += CausalSelfAttn(LN(y)); y += CrossAttn(LN(y), enc);
//                      y += FFN(LN(y)) }, then LN
//   logits = (y · W_out) / √d_model + b_out
//
// Token id 0 is reserved as the decoder start symbol.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sparselab/tensor.hpp"

namespace sparselab {

inline constexpr int kBosToken = 0;

struct ModelConfig {
    std::size_t vocab_size = 32;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_layers = 2;
    std::size_t d_ff = 256;
    std::size_t max_seq_len = 16;
    std::uint64_t seed = 1;

    std::size_t head_dim() const { return d_model / n_heads; }
    /// Throws ConfigError listing every violated constraint.
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

struct ParamEntry {
    std::string name;
    Tensor tensor;
    bool prunable = false;
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;
};

/// Ordered, uniquely named parameters. Matrices (rank ≥ 2) are prunable and
/// carry fan-in/fan-out; vectors (biases, norm gains) are not.
class ParamRegistry {
public:
    void add(std::string name, Tensor tensor, std::size_t fan_in = 0, std::size_t fan_out = 0);

    std::size_t size() const { return entries_.size(); }
    std::span<ParamEntry> entries() { return entries_; }
    std::span<const ParamEntry> entries() const { return entries_; }

    const ParamEntry* find(const std::string& name) const;
    ParamEntry* find(const std::string& name);
    const ParamEntry& at(const std::string& name) const;
    ParamEntry& at(const std::string& name);

    std::size_t total_count() const;
    std::size_t prunable_count() const;

    void zero_grad();
    /// Deep copy; the result shares no storage with *this.
    ParamRegistry clone() const;
    /// Same names, shapes, flags and bit-identical values.
    bool bitwise_equal(const ParamRegistry& other) const;

private:
    std::vector<ParamEntry> entries_;
};

/// Glorot-uniform bound √(6/(fan_in+fan_out)).
double glorot_limit(std::size_t fan_in, std::size_t fan_out);

ParamRegistry build_model(const ModelConfig& cfg);

/// Row-major token matrices: batch rows of src_len / tgt_len ids.
struct TokenBatch {
    std::size_t batch = 0;
    std::size_t src_len = 0;
    std::size_t tgt_len = 0;
    std::vector<int> src;
    std::vector<int> tgt;
};

/// Logits [batch·tgt_len × vocab] for next-token prediction under teacher forcing.
Tensor forward_logits(Tape& tape, const ModelConfig& cfg, const ParamRegistry& reg,
                      const TokenBatch& batch);

/// Mean cross-entropy of the target tokens.
Tensor forward_loss(Tape& tape, const ModelConfig& cfg, const ParamRegistry& reg,
                    const TokenBatch& batch);

struct EvalResult {
    double loss = 0.0;
    double token_accuracy = 0.0;
    std::size_t tokens = 0;
};

/// Teacher-forced loss and exact-match token accuracy over the given batches.
EvalResult evaluate(const ModelConfig& cfg, const ParamRegistry& reg,
                    std::span<const TokenBatch> batches);

}  // namespace sparselab
