#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dataclone/corpus.hpp"
#include "dataclone/model.hpp"
#include "dataclone/vocab.hpp"

namespace dataclone::eval {

struct CloneConfig {
  size_t max_new = 96;
  double temperature = 1.0;
  size_t top_k = 40;
  uint64_t seed = 0;
};

// One generated note per prompt: the model completes the instruction, the
// decoded continuation becomes the note text. Prompts whose continuation is
// empty or whitespace are dropped (count reported through n_dropped); if every
// generation degenerates that way the model is rejected.
std::vector<corpus::Note> generate_clone(const model::ModelParams& params,
                                         const model::LoraAdapter* adapter,
                                         const model::Vocab& vocab,
                                         const std::vector<std::string>& prompts,
                                         const CloneConfig& config, size_t* n_dropped = nullptr);

// exp of the token-weighted mean next-token NLL over target positions.
double perplexity(const model::ModelParams& params, const model::LoraAdapter* adapter,
                  const std::vector<model::TokenExample>& examples);

// Masked-token perplexity of a non-causal encoder; mask_seed fixes the masks
// so before/after comparisons score the same positions.
double mlm_perplexity(const model::ModelParams& params,
                      const std::vector<std::vector<model::TokenId>>& sequences,
                      uint64_t mask_seed);

struct MlmAdaptConfig {
  size_t steps = 200;
  size_t batch_size = 8;
  double lr = 1e-3;
  size_t eval_every = 50;  // evaluation cadence for the perplexity curve
  uint64_t seed = 0;
};

struct MlmAdaptResult {
  // (step, masked perplexity against the evaluation corpus). Always starts
  // with the step-0 point, so a 0-step run yields a single entry.
  std::vector<std::pair<size_t, double>> ppl_curve;
};

// Adam-trained masked-language-model adaptation of a non-causal encoder, in
// place. Perplexity is tracked against eval_corpus (held-out source text),
// not the adaptation corpus itself.
MlmAdaptResult mlm_adapt(model::ModelParams& params,
                         const std::vector<std::vector<model::TokenId>>& corpus,
                         const std::vector<std::vector<model::TokenId>>& eval_corpus,
                         const MlmAdaptConfig& config);

}  // namespace dataclone::eval
