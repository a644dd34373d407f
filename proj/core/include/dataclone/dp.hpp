#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dataclone/accountant.hpp"
#include "dataclone/model.hpp"
#include "dataclone/tensor.hpp"

namespace dataclone::dp {

// Scales a per-example gradient so its joint L2 norm is at most max_norm.
// A non-finite max_norm is the "no clipping" sentinel.
TensorMap clip(const TensorMap& grads, double max_norm);

// DP-SGD aggregation: element-wise sum of the clipped gradients, plus
// N(0, (noise_multiplier * clip_norm)^2) per coordinate when the multiplier
// is positive, divided by the EXPECTED lot size (q * N), never the realized
// one. schema supplies tensor names and shapes so an empty lot still yields
// a pure-noise gradient. Noise is drawn in sorted tensor-name order.
TensorMap noisy_aggregate(const std::vector<TensorMap>& clipped, double clip_norm,
                          double noise_multiplier, double expected_lot, uint64_t seed,
                          const TensorMap& schema);

// Poisson subsampling: each index enters the lot independently with
// probability q. q = 1 returns every index, q = 0 none.
std::vector<size_t> poisson_sample(size_t n, double q, uint64_t seed);

// (epsilon, delta, C, sigma, q, T). Exactly one of epsilon_target and
// noise_multiplier may be left unset; resolve_spec derives it.
struct PrivacySpec {
  std::optional<double> epsilon_target;
  double delta = 1e-5;
  double clip_norm = 1.0;  // +inf disables clipping (non-private sentinel)
  std::optional<double> noise_multiplier;
  double sample_rate = 0.01;
  size_t steps = 1;
};

// Fills in the missing one of {sigma, epsilon} via the accountant. A spec
// with neither set is unresolvable.
PrivacySpec resolve_spec(const PrivacySpec& spec);

struct StepStat {
  size_t step = 0;
  size_t lot_size = 0;
  double mean_clipped_norm = 0.0;
  double loss = 0.0;  // mean pre-clip loss over the lot; 0 for an empty lot
};

struct DpTrainResult {
  accountant::PrivacyLedger ledger;
  std::vector<StepStat> curve;
};

// DP-SGD over next-token examples: per step, Poisson-sample a lot, take
// per-example gradients, clip, aggregate with noise, and apply
// theta <- theta - lr * g_hat. Updates the adapter tensors in place when an
// adapter is given, otherwise the full parameter set. Every step records one
// ledger entry and one curve row, including steps with empty lots.
DpTrainResult dp_train(model::ModelParams& params, model::LoraAdapter* adapter,
                       const std::vector<model::TokenExample>& examples, const PrivacySpec& spec,
                       double lr, uint64_t seed);

std::string curve_to_csv(const std::vector<StepStat>& curve);

// {orders, rdp, steps, spec} ledger document.
Json ledger_json(const accountant::PrivacyLedger& ledger, const PrivacySpec& spec, double epsilon);

}  // namespace dataclone::dp
