#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "phtr/rng.hpp"
#include "phtr/tensor.hpp"

namespace phtr {

// Named parameter list in a stable order; the checkpoint layer serializes it
// verbatim and optimizers slot into it by name.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

struct LinearParams {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  static LinearParams init(int64_t in, int64_t out, Rng& rng,
                           double stddev = 0.02);
  Tensor forward(const Tensor& x) const;  // x: [seq, in] -> [seq, out]
  void collect(const std::string& prefix, NamedTensors& out) const;
};

struct LayerNormParams {
  Tensor gamma;  // [dim]
  Tensor beta;   // [dim]

  static LayerNormParams init(int64_t dim);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, NamedTensors& out) const;
};

struct AttentionParams {
  LinearParams query;
  LinearParams key;
  LinearParams value;
  LinearParams output;

  static AttentionParams init(int64_t hidden, Rng& rng);
  void collect(const std::string& prefix, NamedTensors& out) const;
};

// Pre-norm transformer block: x += attn(LN(x)); x += mlp(LN(x)). The decoder
// variant inserts a cross-attention sublayer between them.
struct BlockParams {
  LayerNormParams ln_attn;
  AttentionParams attn;
  LayerNormParams ln_mlp;
  LinearParams mlp_in;   // [hidden, intermediate]
  LinearParams mlp_out;  // [intermediate, hidden]

  static BlockParams init(int64_t hidden, int64_t intermediate, Rng& rng);
  void collect(const std::string& prefix, NamedTensors& out) const;
};

struct CrossBlockParams {
  BlockParams base;
  LayerNormParams ln_cross;
  AttentionParams cross;

  static CrossBlockParams init(int64_t hidden, int64_t intermediate, Rng& rng);
  void collect(const std::string& prefix, NamedTensors& out) const;
};

// Scaled dot-product multi-head attention. queries_from: [Tq, hidden],
// keys_values_from: [Tk, hidden]. An optional additive mask [Tq, Tk] is added
// to the attention scores before softmax. dropout_rng == nullptr means eval
// mode (no dropout).
Tensor multi_head_attention(const Tensor& queries_from,
                            const Tensor& keys_values_from,
                            const AttentionParams& params, int64_t num_heads,
                            const Tensor* additive_mask, double dropout,
                            Rng* dropout_rng);

Tensor transformer_block(const Tensor& x, const BlockParams& params,
                         int64_t num_heads, const Tensor* self_mask,
                         double dropout, Rng* dropout_rng);

Tensor cross_transformer_block(const Tensor& x, const Tensor& memory,
                               const CrossBlockParams& params,
                               int64_t num_heads, const Tensor* self_mask,
                               double dropout, Rng* dropout_rng);

// Additive causal mask: entry (i, j) is 0 for j <= i and -1e30 otherwise.
// The -1e30 logit underflows to an exact 0.0 attention weight after softmax,
// which is what makes the causality tests bit-exact.
Tensor causal_mask(int64_t length);

// The first `count` rows of a learned embedding table, as a differentiable
// view used for positional embeddings.
Tensor position_rows(const Tensor& table, int64_t count);

}  // namespace phtr
