#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "phtr/config.hpp"
#include "phtr/decoder.hpp"
#include "phtr/encoder.hpp"
#include "phtr/generate.hpp"
#include "phtr/image.hpp"
#include "phtr/metrics.hpp"
#include "phtr/render.hpp"
#include "phtr/vocab.hpp"

namespace phtr {

// Decoded text with one confidence per codepoint, aligned for refinement.
struct Transcription {
  std::string text;
  std::vector<double> confidences;
  bool truncated = false;
  double score = 0.0;
};

// Strips PAD/BOS/EOS (and their confidences) and decodes the rest; NEWLINE
// becomes '\n'. Every surviving token is one codepoint, so confidences align
// one-to-one with utf8_codepoints(text).
Transcription transcription_from(const GeneratedSequence& generated,
                                 const Vocabulary& vocab);

// Preprocesses a page to the fine-tune input size, encodes it, and decodes
// with cfg.decode (greedy, beam, or nucleus). Greedy and beam are
// deterministic; nucleus draws from (cfg.seed, sample_ordinal), so callers
// pass distinct ordinals for distinct pages.
Transcription transcribe_page(const Image& image, int64_t dpi,
                              const EncoderParams& enc_params,
                              const DecoderParams& dec_params,
                              const Vocabulary& vocab,
                              const ExperimentConfig& cfg,
                              uint64_t sample_ordinal = 0);

// Greedy-decodes every page and scores the predictions against the
// transcripts. Always greedy, independent of cfg.decode, so validation
// curves are comparable across decode settings.
EvalReport score_pages(const std::vector<PageSample>& pages,
                       const EncoderParams& enc_params,
                       const DecoderParams& dec_params,
                       const Vocabulary& vocab, const ExperimentConfig& cfg);

}  // namespace phtr
