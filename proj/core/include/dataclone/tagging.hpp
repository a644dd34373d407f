#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dataclone/corpus.hpp"
#include "dataclone/model.hpp"
#include "dataclone/vocab.hpp"

namespace dataclone::tagging {

// BIO label space: 0 = O, then B/I per entity category in enum order.
inline constexpr uint32_t kOutsideLabel = 0;
inline constexpr size_t kNumLabels = 1 + 2 * corpus::kNumEntityCategories;

uint32_t b_label(corpus::EntityCategory c);
uint32_t i_label(corpus::EntityCategory c);
std::string label_name(uint32_t label);

struct TaggedSentence {
  std::vector<std::string> words;
  std::vector<uint32_t> labels;
};

// Word-level entity span, [start, end) over word indices.
struct WordSpan {
  corpus::EntityCategory category = corpus::EntityCategory::SymptomOrSign;
  size_t start = 0;
  size_t end = 0;

  bool operator==(const WordSpan&) const = default;
};

// Projects gold character spans onto whitespace-free word tokens. Every
// entity must cover at least one whole word.
TaggedSentence make_tagged(const corpus::AnnotatedNote& annotated);

// Decodes a BIO sequence; an I after O or after a different category opens a
// new span.
std::vector<WordSpan> spans_from_labels(const std::vector<uint32_t>& labels);

struct CategoryScore {
  corpus::EntityCategory category = corpus::EntityCategory::MedicationName;
  size_t tp = 0;
  size_t fp = 0;
  size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  size_t support = 0;
};

struct F1Report {
  std::array<CategoryScore, corpus::kNumEntityCategories> per_category;
  double weighted_f1 = 0.0;
};

// Entity-level exact span-and-type match, support-weighted mean F1 with the
// zero convention for empty denominators.
F1Report score_spans(const std::vector<std::vector<WordSpan>>& gold,
                     const std::vector<std::vector<WordSpan>>& predicted);

// Same scoring from labeled sentences; sentence counts and per-sentence word
// counts must line up.
F1Report weighted_f1(const std::vector<TaggedSentence>& pred,
                     const std::vector<TaggedSentence>& gold);

struct TaggerConfig {
  size_t steps = 300;
  size_t batch_size = 8;
  double lr = 1e-3;
  uint64_t seed = 0;
};

// Fine-tunes a copy of the given non-causal encoder plus a fresh linear tag
// head on bucketed word ids; returns encoder weights with tag_head.* attached.
model::ModelParams train_tagger(const model::ModelParams& encoder, const model::Vocab& vocab,
                                const std::vector<TaggedSentence>& train,
                                const TaggerConfig& config);

// Argmax tags per word (ties to the lowest label id).
std::vector<uint32_t> predict_tags(const model::ModelParams& params, const model::Vocab& vocab,
                                   const std::vector<std::string>& words);

// Tags every sentence and scores it against the gold annotation.
F1Report evaluate_tagger(const model::ModelParams& params, const model::Vocab& vocab,
                         const std::vector<TaggedSentence>& test);

}  // namespace dataclone::tagging
