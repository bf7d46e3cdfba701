#include "phtr/nn.hpp"

#include <cmath>

#include "phtr/errors.hpp"

namespace phtr {

LinearParams LinearParams::init(int64_t in, int64_t out, Rng& rng,
                                double stddev) {
  LinearParams p;
  p.weight = Tensor::randn({in, out}, rng, stddev, true);
  p.bias = Tensor::zeros({out}, true);
  return p;
}

Tensor LinearParams::forward(const Tensor& x) const {
  return add(matmul(x, weight), bias);
}

void LinearParams::collect(const std::string& prefix, NamedTensors& out) const {
  out.emplace_back(prefix + ".w", weight);
  out.emplace_back(prefix + ".b", bias);
}

LayerNormParams LayerNormParams::init(int64_t dim) {
  LayerNormParams p;
  p.gamma = Tensor::full({dim}, 1.0, true);
  p.beta = Tensor::zeros({dim}, true);
  return p;
}

Tensor LayerNormParams::forward(const Tensor& x) const {
  constexpr double kEps = 1e-5;
  return layer_norm(x, gamma, beta, kEps);
}

void LayerNormParams::collect(const std::string& prefix,
                              NamedTensors& out) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

AttentionParams AttentionParams::init(int64_t hidden, Rng& rng) {
  AttentionParams p;
  p.query = LinearParams::init(hidden, hidden, rng);
  p.key = LinearParams::init(hidden, hidden, rng);
  p.value = LinearParams::init(hidden, hidden, rng);
  p.output = LinearParams::init(hidden, hidden, rng);
  return p;
}

void AttentionParams::collect(const std::string& prefix,
                              NamedTensors& out) const {
  query.collect(prefix + ".q", out);
  key.collect(prefix + ".k", out);
  value.collect(prefix + ".v", out);
  output.collect(prefix + ".o", out);
}

BlockParams BlockParams::init(int64_t hidden, int64_t intermediate, Rng& rng) {
  BlockParams p;
  p.ln_attn = LayerNormParams::init(hidden);
  p.attn = AttentionParams::init(hidden, rng);
  p.ln_mlp = LayerNormParams::init(hidden);
  p.mlp_in = LinearParams::init(hidden, intermediate, rng);
  p.mlp_out = LinearParams::init(intermediate, hidden, rng);
  return p;
}

void BlockParams::collect(const std::string& prefix, NamedTensors& out) const {
  ln_attn.collect(prefix + ".ln_attn", out);
  attn.collect(prefix + ".attn", out);
  ln_mlp.collect(prefix + ".ln_mlp", out);
  mlp_in.collect(prefix + ".mlp_in", out);
  mlp_out.collect(prefix + ".mlp_out", out);
}

CrossBlockParams CrossBlockParams::init(int64_t hidden, int64_t intermediate,
                                        Rng& rng) {
  CrossBlockParams p;
  p.base = BlockParams::init(hidden, intermediate, rng);
  p.ln_cross = LayerNormParams::init(hidden);
  p.cross = AttentionParams::init(hidden, rng);
  return p;
}

void CrossBlockParams::collect(const std::string& prefix,
                               NamedTensors& out) const {
  base.ln_attn.collect(prefix + ".ln_attn", out);
  base.attn.collect(prefix + ".attn", out);
  ln_cross.collect(prefix + ".ln_cross", out);
  cross.collect(prefix + ".cross", out);
  base.ln_mlp.collect(prefix + ".ln_mlp", out);
  base.mlp_in.collect(prefix + ".mlp_in", out);
  base.mlp_out.collect(prefix + ".mlp_out", out);
}

Tensor multi_head_attention(const Tensor& queries_from,
                            const Tensor& keys_values_from,
                            const AttentionParams& params, int64_t num_heads,
                            const Tensor* additive_mask, double dropout_p,
                            Rng* dropout_rng) {
  const int64_t hidden = queries_from.dim(1);
  if (hidden % num_heads != 0) {
    throw ShapeError("hidden size not divisible by head count");
  }
  const int64_t head_dim = hidden / num_heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  const Tensor q = params.query.forward(queries_from);
  const Tensor k = params.key.forward(keys_values_from);
  const Tensor v = params.value.forward(keys_values_from);

  std::vector<Tensor> head_outputs;
  head_outputs.reserve(static_cast<size_t>(num_heads));
  for (int64_t h = 0; h < num_heads; ++h) {
    const int64_t lo = h * head_dim;
    const int64_t hi = lo + head_dim;
    const Tensor qh = slice(q, 1, lo, hi);
    const Tensor kh = slice(k, 1, lo, hi);
    const Tensor vh = slice(v, 1, lo, hi);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_scale);
    if (additive_mask != nullptr) {
      scores = add(scores, *additive_mask);
    }
    const Tensor weights = softmax(scores, 1);
    head_outputs.push_back(matmul(weights, vh));
  }
  Tensor merged = num_heads == 1 ? head_outputs[0] : concat(head_outputs, 1);
  Tensor out = params.output.forward(merged);
  if (dropout_rng != nullptr && dropout_p > 0.0) {
    out = dropout(out, dropout_p, true, dropout_rng->next_u64());
  }
  return out;
}

Tensor transformer_block(const Tensor& x, const BlockParams& params,
                         int64_t num_heads, const Tensor* self_mask,
                         double dropout_p, Rng* dropout_rng) {
  const Tensor normed = params.ln_attn.forward(x);
  Tensor h = add(x, multi_head_attention(normed, normed, params.attn, num_heads,
                                         self_mask, dropout_p, dropout_rng));
  Tensor mlp = params.mlp_out.forward(gelu(params.mlp_in.forward(
      params.ln_mlp.forward(h))));
  if (dropout_rng != nullptr && dropout_p > 0.0) {
    mlp = dropout(mlp, dropout_p, true, dropout_rng->next_u64());
  }
  return add(h, mlp);
}

Tensor cross_transformer_block(const Tensor& x, const Tensor& memory,
                               const CrossBlockParams& params,
                               int64_t num_heads, const Tensor* self_mask,
                               double dropout_p, Rng* dropout_rng) {
  const Tensor normed = params.base.ln_attn.forward(x);
  Tensor h = add(x, multi_head_attention(normed, normed, params.base.attn,
                                         num_heads, self_mask, dropout_p,
                                         dropout_rng));
  const Tensor cross_in = params.ln_cross.forward(h);
  h = add(h, multi_head_attention(cross_in, memory, params.cross, num_heads,
                                  nullptr, dropout_p, dropout_rng));
  Tensor mlp = params.base.mlp_out.forward(gelu(params.base.mlp_in.forward(
      params.base.ln_mlp.forward(h))));
  if (dropout_rng != nullptr && dropout_p > 0.0) {
    mlp = dropout(mlp, dropout_p, true, dropout_rng->next_u64());
  }
  return add(h, mlp);
}

Tensor causal_mask(int64_t length) {
  Tensor mask = Tensor::zeros({length, length});
  for (int64_t i = 0; i < length; ++i) {
    for (int64_t j = i + 1; j < length; ++j) {
      mask.mutable_data()[static_cast<size_t>(i * length + j)] = -1e30;
    }
  }
  return mask;
}

Tensor position_rows(const Tensor& table, int64_t count) {
  if (count > table.dim(0)) {
    throw ShapeError("sequence longer than the position table");
  }
  return slice(table, 0, 0, count);
}

}  // namespace phtr
