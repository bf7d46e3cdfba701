#include "phtr/pipeline.hpp"

#include "phtr/data.hpp"
#include "phtr/errors.hpp"
#include "phtr/rng.hpp"
#include "phtr/tensor.hpp"

namespace phtr {

Transcription transcription_from(const GeneratedSequence& generated,
                                 const Vocabulary& vocab) {
  Transcription out;
  out.truncated = generated.truncated;
  out.score = generated.score;
  std::vector<int> kept;
  kept.reserve(generated.ids.size());
  for (size_t i = 0; i < generated.ids.size(); ++i) {
    const int id = generated.ids[i];
    if (id == Vocabulary::kPad || id == Vocabulary::kBos ||
        id == Vocabulary::kEos) {
      continue;
    }
    kept.push_back(id);
    out.confidences.push_back(generated.confidences[i]);
  }
  out.text = vocab.decode(kept);
  return out;
}

Transcription transcribe_page(const Image& image, int64_t dpi,
                              const EncoderParams& enc_params,
                              const DecoderParams& dec_params,
                              const Vocabulary& vocab,
                              const ExperimentConfig& cfg,
                              uint64_t sample_ordinal) {
  TapeSuspend suspend;
  const Image input =
      preprocess_page(image, dpi, cfg.enc.finetune_image_size);
  const VisualFeatures features = encode(input, cfg.enc, enc_params);

  GeneratedSequence generated;
  const DecodeConfig& dc = cfg.decode;
  if (dc.strategy == "greedy") {
    generated = generate_greedy(features, cfg.dec, dec_params);
  } else if (dc.strategy == "beam") {
    generated = generate_beam(features, cfg.dec, dec_params,
                              static_cast<int>(dc.beam_width),
                              dc.length_norm_alpha);
  } else if (dc.strategy == "nucleus") {
    generated = generate_nucleus(features, cfg.dec, dec_params, dc.top_p,
                                 dc.temperature,
                                 Rng::mix(cfg.seed, sample_ordinal));
  } else {
    throw UsageError("unknown decode strategy '" + dc.strategy + "'");
  }
  return transcription_from(generated, vocab);
}

EvalReport score_pages(const std::vector<PageSample>& pages,
                       const EncoderParams& enc_params,
                       const DecoderParams& dec_params,
                       const Vocabulary& vocab, const ExperimentConfig& cfg) {
  TapeSuspend suspend;
  std::vector<EvalPair> pairs;
  pairs.reserve(pages.size());
  for (const PageSample& page : pages) {
    const Image input =
        preprocess_page(page.image, page.dpi, cfg.enc.finetune_image_size);
    const VisualFeatures features = encode(input, cfg.enc, enc_params);
    const GeneratedSequence generated =
        generate_greedy(features, cfg.dec, dec_params);
    pairs.push_back(
        {page.transcript, transcription_from(generated, vocab).text});
  }
  return evaluate(pairs);
}

}  // namespace phtr
