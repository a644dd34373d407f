#include "dataclone/tagging.hpp"

#include <algorithm>
#include <cmath>

#include "dataclone/errors.hpp"
#include "dataclone/optim.hpp"
#include "dataclone/parallel.hpp"
#include "dataclone/rng.hpp"

namespace dataclone::tagging {

uint32_t b_label(corpus::EntityCategory c) { return 1 + 2 * static_cast<uint32_t>(c); }
uint32_t i_label(corpus::EntityCategory c) { return 2 + 2 * static_cast<uint32_t>(c); }

std::string label_name(uint32_t label) {
  if (label == kOutsideLabel) return "O";
  if (label >= kNumLabels) fail(ErrorCode::InvalidArgument, "unknown tag label");
  const auto c = static_cast<corpus::EntityCategory>((label - 1) / 2);
  return (label % 2 == 1 ? "B-" : "I-") + to_string(c);
}

TaggedSentence make_tagged(const corpus::AnnotatedNote& annotated) {
  const std::vector<model::WordSpan> words = model::split_words(annotated.note.text);
  TaggedSentence out;
  out.words.reserve(words.size());
  for (const model::WordSpan& w : words) out.words.push_back(w.word);
  out.labels.assign(words.size(), kOutsideLabel);

  for (const corpus::Entity& e : annotated.entities) {
    bool first = true;
    bool any = false;
    for (size_t i = 0; i < words.size(); ++i) {
      if (words[i].start >= e.start && words[i].end <= e.end) {
        out.labels[i] = first ? b_label(e.category) : i_label(e.category);
        first = false;
        any = true;
      }
    }
    if (!any)
      fail(ErrorCode::AlignmentError,
           "entity '" + e.surface + "' covers no whole word in note " + annotated.note.id);
  }
  return out;
}

std::vector<WordSpan> spans_from_labels(const std::vector<uint32_t>& labels) {
  std::vector<WordSpan> spans;
  for (size_t i = 0; i < labels.size(); ++i) {
    const uint32_t label = labels[i];
    if (label == kOutsideLabel) continue;
    if (label >= kNumLabels) fail(ErrorCode::InvalidArgument, "unknown tag label");
    const auto category = static_cast<corpus::EntityCategory>((label - 1) / 2);
    const bool begins = label % 2 == 1;
    if (!begins && !spans.empty() && spans.back().end == i && spans.back().category == category) {
      spans.back().end = i + 1;
    } else {
      spans.push_back({category, i, i + 1});
    }
  }
  return spans;
}

F1Report score_spans(const std::vector<std::vector<WordSpan>>& gold,
                     const std::vector<std::vector<WordSpan>>& predicted) {
  if (gold.size() != predicted.size())
    fail(ErrorCode::AlignmentError, "gold and predicted sentence counts differ");

  F1Report report;
  for (size_t c = 0; c < corpus::kNumEntityCategories; ++c)
    report.per_category[c].category = static_cast<corpus::EntityCategory>(c);

  for (size_t s = 0; s < gold.size(); ++s) {
    std::vector<bool> matched(gold[s].size(), false);
    for (const WordSpan& p : predicted[s]) {
      bool hit = false;
      for (size_t gi = 0; gi < gold[s].size(); ++gi) {
        if (!matched[gi] && gold[s][gi] == p) {
          matched[gi] = true;
          hit = true;
          break;
        }
      }
      auto& row = report.per_category[static_cast<size_t>(p.category)];
      if (hit)
        row.tp += 1;
      else
        row.fp += 1;
    }
    for (size_t gi = 0; gi < gold[s].size(); ++gi)
      if (!matched[gi]) report.per_category[static_cast<size_t>(gold[s][gi].category)].fn += 1;
  }

  size_t total_support = 0;
  for (auto& row : report.per_category) {
    row.support = row.tp + row.fn;
    total_support += row.support;
    row.precision = row.tp + row.fp == 0 ? 0.0
                                         : static_cast<double>(row.tp) /
                                               static_cast<double>(row.tp + row.fp);
    row.recall =
        row.support == 0 ? 0.0 : static_cast<double>(row.tp) / static_cast<double>(row.support);
    row.f1 = row.precision + row.recall == 0.0
                 ? 0.0
                 : 2.0 * row.precision * row.recall / (row.precision + row.recall);
  }
  if (total_support > 0)
    for (const auto& row : report.per_category)
      report.weighted_f1 +=
          row.f1 * static_cast<double>(row.support) / static_cast<double>(total_support);
  return report;
}

F1Report weighted_f1(const std::vector<TaggedSentence>& pred,
                     const std::vector<TaggedSentence>& gold) {
  if (pred.size() != gold.size())
    fail(ErrorCode::AlignmentError, "predicted and gold sentence counts differ");
  std::vector<std::vector<WordSpan>> gold_spans(gold.size());
  std::vector<std::vector<WordSpan>> pred_spans(pred.size());
  for (size_t i = 0; i < gold.size(); ++i) {
    if (pred[i].labels.size() != gold[i].labels.size())
      fail(ErrorCode::AlignmentError,
           "sentence " + std::to_string(i) + " has misaligned token counts");
    gold_spans[i] = spans_from_labels(gold[i].labels);
    pred_spans[i] = spans_from_labels(pred[i].labels);
  }
  return score_spans(gold_spans, pred_spans);
}

namespace {

struct EncodedSentence {
  std::vector<model::TokenId> ids;
  std::vector<uint32_t> labels;        // aligned with ids; BOS/EOS are O
  std::vector<bool> loss_positions;    // true at word positions
};

EncodedSentence encode_sentence(const model::Vocab& vocab, const TaggedSentence& sentence,
                                size_t context_len) {
  EncodedSentence enc;
  enc.ids = model::encode_word_sequence(vocab, sentence.words, context_len);
  enc.labels.assign(enc.ids.size(), kOutsideLabel);
  enc.loss_positions.assign(enc.ids.size(), false);
  const size_t n_words = enc.ids.size() - 2;  // BOS + words + EOS
  for (size_t i = 0; i < n_words; ++i) {
    enc.labels[i + 1] = sentence.labels[i];
    enc.loss_positions[i + 1] = true;
  }
  return enc;
}

}  // namespace

model::ModelParams train_tagger(const model::ModelParams& encoder, const model::Vocab& vocab,
                                const std::vector<TaggedSentence>& train,
                                const TaggerConfig& config) {
  if (train.empty()) fail(ErrorCode::EmptyCorpus, "no tagged sentences to train on");
  if (encoder.hparams.causal)
    fail(ErrorCode::InvalidArgument, "tagger needs a non-causal encoder");
  if (encoder.hparams.vocab_size != vocab.size())
    fail(ErrorCode::InvalidArgument, "encoder and vocab sizes differ");

  std::vector<EncodedSentence> encoded;
  encoded.reserve(train.size());
  for (const TaggedSentence& s : train) {
    if (s.words.empty()) continue;
    if (s.words.size() != s.labels.size())
      fail(ErrorCode::InvalidArgument, "tagged sentence with mismatched labels");
    encoded.push_back(encode_sentence(vocab, s, encoder.hparams.context_len));
  }
  if (encoded.empty()) fail(ErrorCode::EmptyCorpus, "no non-empty tagged sentences");

  model::ModelParams params = encoder;
  {
    Rng rng(Rng::derive(config.seed, "tagger-head"));
    Tensor w({kNumLabels, params.hparams.d_model});
    const double scale = 0.1 / std::sqrt(static_cast<double>(params.hparams.d_model));
    for (double& x : w.data) x = rng.normal() * scale;
    params.tensors["tag_head.w"] = std::move(w);
    params.tensors["tag_head.b"] = Tensor({kNumLabels});
  }

  optim::Adam adam(params.tensors, {.lr = config.lr});
  Rng pick_rng(Rng::derive(config.seed, "tagger-pick"));
  for (size_t step = 0; step < config.steps; ++step) {
    std::vector<size_t> batch(config.batch_size);
    for (size_t& idx : batch) idx = static_cast<size_t>(pick_rng.below(encoded.size()));

    std::vector<TensorMap> grads(batch.size());
    parallel_for(batch.size(), [&](size_t i) {
      const EncodedSentence& s = encoded[batch[i]];
      grads[i] = model::tagger_loss_and_grad(params, s.ids, s.labels, s.loss_positions).grad;
    });
    TensorMap mean = zeros_like(params.tensors);
    for (const TensorMap& g : grads)
      axpy_into(mean, g, 1.0 / static_cast<double>(batch.size()));
    adam.step(params.tensors, mean);
    if (!all_finite(params.tensors))
      fail(ErrorCode::Diverged, "non-finite parameters at step " + std::to_string(step + 1));
  }
  return params;
}

std::vector<uint32_t> predict_tags(const model::ModelParams& params, const model::Vocab& vocab,
                                   const std::vector<std::string>& words) {
  if (words.empty()) return {};
  const std::vector<model::TokenId> ids =
      model::encode_word_sequence(vocab, words, params.hparams.context_len);
  const Tensor logits = model::tagger_logits(params, ids);
  const size_t n_words = ids.size() - 2;
  std::vector<uint32_t> labels(words.size(), kOutsideLabel);
  for (size_t i = 0; i < n_words; ++i) {
    size_t best = 0;
    for (size_t c = 1; c < logits.cols(); ++c)
      if (logits.at(i + 1, c) > logits.at(i + 1, best)) best = c;
    labels[i] = static_cast<uint32_t>(best);
  }
  return labels;
}

F1Report evaluate_tagger(const model::ModelParams& params, const model::Vocab& vocab,
                         const std::vector<TaggedSentence>& test) {
  std::vector<std::vector<WordSpan>> gold(test.size());
  std::vector<std::vector<WordSpan>> predicted(test.size());
  parallel_for(test.size(), [&](size_t i) {
    gold[i] = spans_from_labels(test[i].labels);
    predicted[i] = spans_from_labels(predict_tags(params, vocab, test[i].words));
  });
  return score_spans(gold, predicted);
}

}  // namespace dataclone::tagging
