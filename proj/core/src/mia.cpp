#include "dataclone/mia.hpp"

#include <algorithm>

#include "dataclone/errors.hpp"
#include "dataclone/parallel.hpp"

namespace dataclone::mia {

double mann_whitney_auc(const std::vector<double>& positive, const std::vector<double>& negative) {
  if (positive.empty() || negative.empty())
    fail(ErrorCode::SingleClass, "AUC needs both positive and negative scores");

  struct Tagged {
    double score;
    bool positive;
  };
  std::vector<Tagged> all;
  all.reserve(positive.size() + negative.size());
  for (double s : positive) all.push_back({s, true});
  for (double s : negative) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Tagged& a, const Tagged& b) { return a.score < b.score; });

  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < all.size()) {
    size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (size_t k = i; k < j; ++k)
      if (all[k].positive) rank_sum_pos += midrank;
    i = j;
  }
  const double np = static_cast<double>(positive.size());
  const double nn = static_cast<double>(negative.size());
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

MiaResult rmia_audit(const model::ModelParams& target_params,
                     const model::LoraAdapter* target_adapter,
                     const model::ModelParams& reference_params,
                     const model::LoraAdapter* reference_adapter,
                     const std::vector<Candidate>& candidates,
                     const std::vector<model::TokenExample>& population) {
  if (population.empty()) fail(ErrorCode::EmptyPopulation, "empty comparison population");
  if (candidates.empty()) fail(ErrorCode::SingleClass, "no audit candidates");

  auto log_ratio = [&](const model::TokenExample& x) {
    return model::sequence_loglik(target_params, target_adapter, x) -
           model::sequence_loglik(reference_params, reference_adapter, x);
  };

  std::vector<double> pop_lr(population.size());
  parallel_for(population.size(), [&](size_t i) { pop_lr[i] = log_ratio(population[i]); });
  std::sort(pop_lr.begin(), pop_lr.end());

  MiaResult result;
  result.records.resize(candidates.size());
  parallel_for(candidates.size(), [&](size_t i) {
    MiaRecord rec;
    rec.id = candidates[i].id;
    rec.member = candidates[i].member;
    rec.target_loglik =
        model::sequence_loglik(target_params, target_adapter, candidates[i].example);
    rec.reference_loglik =
        model::sequence_loglik(reference_params, reference_adapter, candidates[i].example);
    const auto above = std::upper_bound(pop_lr.begin(), pop_lr.end(), rec.log_ratio());
    rec.score = static_cast<double>(above - pop_lr.begin()) / static_cast<double>(pop_lr.size());
    result.records[i] = std::move(rec);
  });

  std::vector<double> pos;
  std::vector<double> neg;
  for (const MiaRecord& rec : result.records)
    (rec.member ? pos : neg).push_back(rec.score);
  result.auc = mann_whitney_auc(pos, neg);
  return result;
}

Json mia_to_json(const MiaResult& result) {
  Json records = Json::array();
  for (const MiaRecord& rec : result.records)
    records.push_back(Json{{"id", rec.id},
                           {"member", rec.member},
                           {"target_loglik", rec.target_loglik},
                           {"reference_loglik", rec.reference_loglik},
                           {"score", rec.score}});
  return Json{{"auc", result.auc}, {"records", records}};
}

}  // namespace dataclone::mia
