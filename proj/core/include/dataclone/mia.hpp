#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dataclone/jsonl.hpp"
#include "dataclone/model.hpp"

namespace dataclone::mia {

// Mann-Whitney AUC with midrank tie handling: the probability that a random
// positive outscores a random negative, ties counting one half.
double mann_whitney_auc(const std::vector<double>& positive, const std::vector<double>& negative);

struct Candidate {
  std::string id;
  bool member = false;
  model::TokenExample example;
};

struct MiaRecord {
  std::string id;
  bool member = false;
  double target_loglik = 0.0;
  double reference_loglik = 0.0;
  double score = 0.0;  // population fraction dominated by this candidate's LR

  double log_ratio() const { return target_loglik - reference_loglik; }
};

struct MiaResult {
  double auc = 0.5;
  std::vector<MiaRecord> records;
};

// Relative membership inference with gamma = 1 and a single reference model:
// LR(x) = loglik_target(x) - loglik_ref(x), score(x) = fraction of population
// points z with LR(x) >= LR(z), AUC over the member labels.
MiaResult rmia_audit(const model::ModelParams& target_params,
                     const model::LoraAdapter* target_adapter,
                     const model::ModelParams& reference_params,
                     const model::LoraAdapter* reference_adapter,
                     const std::vector<Candidate>& candidates,
                     const std::vector<model::TokenExample>& population);

Json mia_to_json(const MiaResult& result);

}  // namespace dataclone::mia
