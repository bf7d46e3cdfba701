#include "phtr/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "phtr/errors.hpp"

namespace phtr {
namespace {

int64_t check_patch_side(const Image& image, const EncoderConfig& cfg) {
  if (image.height != image.width) {
    throw ShapeError("encoder input must be square");
  }
  if (image.height != cfg.image_size &&
      image.height != cfg.finetune_image_size) {
    throw ShapeError("encoder input side must be image_size or finetune_image_size");
  }
  if (image.height % cfg.patch_size != 0) {
    throw ShapeError("image side not divisible by patch size");
  }
  return image.height / cfg.patch_size;
}

// Sparse bilinear regrid matrix [to^2, from^2] over the patch grid, using the
// half-pixel center convention. Multiplying it into the patch rows of the
// position table keeps the regrid differentiable with a single matmul.
Tensor grid_interpolation_matrix(int64_t from, int64_t to) {
  std::vector<double> m(static_cast<size_t>(to * to * from * from), 0.0);
  const double scale = static_cast<double>(from) / static_cast<double>(to);
  for (int64_t oy = 0; oy < to; ++oy) {
    const double sy = std::clamp((oy + 0.5) * scale - 0.5, 0.0,
                                 static_cast<double>(from - 1));
    const int64_t y0 = static_cast<int64_t>(std::floor(sy));
    const int64_t y1 = std::min(y0 + 1, from - 1);
    const double fy = sy - static_cast<double>(y0);
    for (int64_t ox = 0; ox < to; ++ox) {
      const double sx = std::clamp((ox + 0.5) * scale - 0.5, 0.0,
                                   static_cast<double>(from - 1));
      const int64_t x0 = static_cast<int64_t>(std::floor(sx));
      const int64_t x1 = std::min(x0 + 1, from - 1);
      const double fx = sx - static_cast<double>(x0);
      const int64_t row = oy * to + ox;
      auto put = [&](int64_t y, int64_t x, double w) {
        m[static_cast<size_t>(row * from * from + y * from + x)] += w;
      };
      put(y0, x0, (1.0 - fy) * (1.0 - fx));
      put(y0, x1, (1.0 - fy) * fx);
      put(y1, x0, fy * (1.0 - fx));
      put(y1, x1, fy * fx);
    }
  }
  return Tensor::from_data({to * to, from * from}, std::move(m));
}

Tensor positional_table(const EncoderConfig& cfg, const EncoderParams& params,
                        int64_t side) {
  const int64_t trained_side = cfg.image_size / cfg.patch_size;
  if (side == trained_side) return params.pos_embed;
  const Tensor specials = slice(params.pos_embed, 0, 0, 2);
  const Tensor patch_pos =
      slice(params.pos_embed, 0, 2, 2 + trained_side * trained_side);
  const Tensor regrid =
      matmul(grid_interpolation_matrix(trained_side, side), patch_pos);
  return concat({specials, regrid}, 0);
}

// Prefix with class/distill tokens, add positions, run all blocks.
Tensor run_trunk(const Tensor& patch_embeds, int64_t side,
                 const EncoderConfig& cfg, const EncoderParams& params,
                 Rng* dropout_rng) {
  Tensor x = concat({params.class_token, params.distill_token, patch_embeds}, 0);
  x = add(x, positional_table(cfg, params, side));
  if (dropout_rng != nullptr && cfg.dropout > 0.0) {
    x = dropout(x, cfg.dropout, true, dropout_rng->next_u64());
  }
  for (const BlockParams& block : params.blocks) {
    x = transformer_block(x, block, cfg.num_heads, nullptr, cfg.dropout,
                          dropout_rng);
  }
  return params.final_ln.forward(x);
}

}  // namespace

EncoderParams EncoderParams::init(const EncoderConfig& cfg, int64_t num_labels,
                                  Rng& rng) {
  const int64_t patch_dim = cfg.patch_size * cfg.patch_size;
  EncoderParams p;
  p.patch_embed = LinearParams::init(patch_dim, cfg.hidden_size, rng);
  p.class_token = Tensor::randn({1, cfg.hidden_size}, rng, 0.02, true);
  p.distill_token = Tensor::randn({1, cfg.hidden_size}, rng, 0.02, true);
  p.mask_token = Tensor::randn({1, cfg.hidden_size}, rng, 0.02, true);
  p.pos_embed =
      Tensor::randn({2 + cfg.num_patches(), cfg.hidden_size}, rng, 0.02, true);
  p.blocks.reserve(static_cast<size_t>(cfg.num_layers));
  for (int64_t i = 0; i < cfg.num_layers; ++i) {
    p.blocks.push_back(BlockParams::init(cfg.hidden_size,
                                         cfg.intermediate_size, rng));
  }
  p.final_ln = LayerNormParams::init(cfg.hidden_size);
  p.mim_head = LinearParams::init(cfg.hidden_size, patch_dim, rng);
  p.class_head = LinearParams::init(cfg.hidden_size, num_labels, rng);
  p.distill_head = LinearParams::init(cfg.hidden_size, num_labels, rng);
  return p;
}

NamedTensors EncoderParams::named_parameters() const {
  NamedTensors out;
  patch_embed.collect("enc.patch_embed", out);
  out.emplace_back("enc.class_token", class_token);
  out.emplace_back("enc.distill_token", distill_token);
  out.emplace_back("enc.mask_token", mask_token);
  out.emplace_back("enc.pos_embed", pos_embed);
  for (size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].collect("enc.block" + std::to_string(i), out);
  }
  final_ln.collect("enc.final_ln", out);
  mim_head.collect("enc.mim_head", out);
  class_head.collect("enc.class_head", out);
  distill_head.collect("enc.distill_head", out);
  return out;
}

Tensor patchify(const Image& image, const EncoderConfig& cfg) {
  const int64_t side = check_patch_side(image, cfg);
  const int64_t p = cfg.patch_size;
  std::vector<double> data(static_cast<size_t>(side * side * p * p));
  size_t idx = 0;
  for (int64_t gy = 0; gy < side; ++gy) {
    for (int64_t gx = 0; gx < side; ++gx) {
      for (int64_t py = 0; py < p; ++py) {
        for (int64_t px = 0; px < p; ++px) {
          data[idx++] = image.at(gy * p + py, gx * p + px);
        }
      }
    }
  }
  return Tensor::from_data({side * side, p * p}, std::move(data));
}

Image unpatchify(const Tensor& patches, int64_t image_side,
                 const EncoderConfig& cfg) {
  const int64_t p = cfg.patch_size;
  const int64_t side = image_side / p;
  if (image_side % p != 0 || patches.rank() != 2 ||
      patches.dim(0) != side * side || patches.dim(1) != p * p) {
    throw ShapeError("patch tensor does not match the requested image side");
  }
  Image image(image_side, image_side);
  const std::span<const double> data = patches.data();
  size_t idx = 0;
  for (int64_t gy = 0; gy < side; ++gy) {
    for (int64_t gx = 0; gx < side; ++gx) {
      for (int64_t py = 0; py < p; ++py) {
        for (int64_t px = 0; px < p; ++px) {
          image.at(gy * p + py, gx * p + px) = data[idx++];
        }
      }
    }
  }
  return image;
}

VisualFeatures encode(const Image& image, const EncoderConfig& cfg,
                      const EncoderParams& params, Rng* dropout_rng) {
  const int64_t side = check_patch_side(image, cfg);
  const Tensor patch_embeds = params.patch_embed.forward(patchify(image, cfg));
  VisualFeatures features;
  features.tokens = run_trunk(patch_embeds, side, cfg, params, dropout_rng);
  features.grid_rows = side;
  features.grid_cols = side;
  return features;
}

MimResult mim_loss(const Image& image, double mask_ratio,
                   const EncoderConfig& cfg, const EncoderParams& params,
                   uint64_t seed, Rng* dropout_rng) {
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) {
    throw DataError("mask_ratio must lie strictly between 0 and 1");
  }
  const int64_t side = check_patch_side(image, cfg);
  const int64_t n = side * side;
  const int64_t k = static_cast<int64_t>(std::ceil(mask_ratio * n));
  if (k <= 0) throw DataError("masking selected zero patches");

  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<int64_t> masked(order.begin(), order.begin() + k);
  std::sort(masked.begin(), masked.end());

  const Tensor patches = patchify(image, cfg);
  const Tensor patch_embeds = params.patch_embed.forward(patches);

  std::vector<double> keep(static_cast<size_t>(n * cfg.hidden_size), 1.0);
  for (int64_t pos : masked) {
    for (int64_t d = 0; d < cfg.hidden_size; ++d) {
      keep[static_cast<size_t>(pos * cfg.hidden_size + d)] = 0.0;
    }
  }
  std::vector<double> drop(keep.size());
  for (size_t i = 0; i < keep.size(); ++i) drop[i] = 1.0 - keep[i];
  const Tensor keep_mask = Tensor::from_data({n, cfg.hidden_size}, std::move(keep));
  const Tensor drop_mask = Tensor::from_data({n, cfg.hidden_size}, std::move(drop));
  const Tensor tiled_mask_token =
      matmul(Tensor::full({n, 1}, 1.0), params.mask_token);
  const Tensor mixed =
      add(mul(patch_embeds, keep_mask), mul(tiled_mask_token, drop_mask));

  const Tensor encoded = run_trunk(mixed, side, cfg, params, dropout_rng);
  const Tensor patch_states = slice(encoded, 0, 2, 2 + n);

  std::vector<double> selector(static_cast<size_t>(k * n), 0.0);
  const int64_t patch_dim = cfg.patch_size * cfg.patch_size;
  std::vector<double> target(static_cast<size_t>(k * patch_dim));
  const std::span<const double> patch_values = patches.data();
  for (int64_t row = 0; row < k; ++row) {
    const int64_t pos = masked[static_cast<size_t>(row)];
    selector[static_cast<size_t>(row * n + pos)] = 1.0;
    std::copy_n(patch_values.begin() + pos * patch_dim, patch_dim,
                target.begin() + row * patch_dim);
  }
  const Tensor masked_states =
      matmul(Tensor::from_data({k, n}, std::move(selector)), patch_states);
  const Tensor recon = params.mim_head.forward(masked_states);
  const Tensor diff =
      sub(recon, Tensor::from_data({k, patch_dim}, std::move(target)));

  MimResult result;
  result.loss = mean_all(mul(diff, diff));
  result.masked_positions = std::move(masked);
  return result;
}

std::pair<Tensor, Tensor> classification_logits(const VisualFeatures& features,
                                                const EncoderParams& params) {
  const Tensor cls = slice(features.tokens, 0, 0, 1);
  const Tensor dist = slice(features.tokens, 0, 1, 2);
  return {params.class_head.forward(cls), params.distill_head.forward(dist)};
}

Tensor distill_loss(const Tensor& class_logits, const Tensor& distill_logits,
                    int true_label, int teacher_hard_label) {
  const int true_ids[] = {true_label};
  const int teacher_ids[] = {teacher_hard_label};
  const Tensor ce_true =
      cross_entropy(class_logits, std::span<const int>(true_ids), -1);
  const Tensor ce_teacher =
      cross_entropy(distill_logits, std::span<const int>(teacher_ids), -1);
  return add(scale(ce_true, 0.5), scale(ce_teacher, 0.5));
}

}  // namespace phtr
