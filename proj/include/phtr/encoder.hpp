#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "phtr/config.hpp"
#include "phtr/image.hpp"
#include "phtr/nn.hpp"
#include "phtr/rng.hpp"
#include "phtr/tensor.hpp"

namespace phtr {

// Output of the vision encoder. Token layout is fixed: index 0 is the class
// token, index 1 the distillation token, then patches in row-major grid order.
struct VisualFeatures {
  Tensor tokens;  // [(2 + grid_rows * grid_cols), hidden]
  int64_t grid_rows = 0;
  int64_t grid_cols = 0;
};

struct EncoderParams {
  LinearParams patch_embed;  // [patch_size^2, hidden]
  Tensor class_token;        // [1, hidden]
  Tensor distill_token;      // [1, hidden]
  Tensor mask_token;         // [1, hidden]
  Tensor pos_embed;          // [2 + num_patches, hidden], at image_size grid
  std::vector<BlockParams> blocks;
  LayerNormParams final_ln;
  LinearParams mim_head;      // [hidden, patch_size^2]
  LinearParams class_head;    // [hidden, num_labels]
  LinearParams distill_head;  // [hidden, num_labels]

  static EncoderParams init(const EncoderConfig& cfg, int64_t num_labels,
                            Rng& rng);
  NamedTensors named_parameters() const;  // names under the "enc." prefix
};

// Row-major non-overlapping patches, each flattened to patch_size^2 values.
// Accepts squares of side image_size or finetune_image_size.
Tensor patchify(const Image& image, const EncoderConfig& cfg);
Image unpatchify(const Tensor& patches, int64_t image_side,
                 const EncoderConfig& cfg);

// Full forward pass: patch embedding, [class, distill] prefix, learned
// positional embeddings (bilinearly regridded when the image is at the
// fine-tune size), pre-norm blocks, final layer norm. dropout_rng == nullptr
// selects eval mode.
VisualFeatures encode(const Image& image, const EncoderConfig& cfg,
                      const EncoderParams& params, Rng* dropout_rng = nullptr);

// Masked-image-modeling objective: ceil(mask_ratio * num_patches) seeded
// patch positions have their embeddings replaced by the mask token; the loss
// is the mean squared error between the reconstruction head's output and the
// original pixels of masked patches only.
struct MimResult {
  Tensor loss;
  std::vector<int64_t> masked_positions;
};
MimResult mim_loss(const Image& image, double mask_ratio,
                   const EncoderConfig& cfg, const EncoderParams& params,
                   uint64_t seed, Rng* dropout_rng = nullptr);

// (class-head logits, distill-head logits), both [1, num_labels].
std::pair<Tensor, Tensor> classification_logits(const VisualFeatures& features,
                                                const EncoderParams& params);

// 0.5 * CE(class_logits, true_label) + 0.5 * CE(distill_logits,
// teacher_hard_label). The teacher is any callable returning a hard label.
Tensor distill_loss(const Tensor& class_logits, const Tensor& distill_logits,
                    int true_label, int teacher_hard_label);
using TeacherFn = std::function<int(const Image&)>;

}  // namespace phtr
