#include "dataclone/dp.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "dataclone/errors.hpp"
#include "dataclone/parallel.hpp"
#include "dataclone/rng.hpp"

namespace dataclone::dp {

TensorMap clip(const TensorMap& grads, double max_norm) {
  if (max_norm <= 0.0 || std::isnan(max_norm))
    fail(ErrorCode::InvalidArgument, "clip norm must be positive");
  if (!all_finite(grads)) fail(ErrorCode::NonFiniteGradient, "gradient is not finite");
  TensorMap out = grads;
  if (!std::isfinite(max_norm)) return out;
  const double norm = joint_l2_norm(out);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& [name, t] : out) t.vec() *= scale;
  }
  return out;
}

TensorMap noisy_aggregate(const std::vector<TensorMap>& clipped, double clip_norm,
                          double noise_multiplier, double expected_lot, uint64_t seed,
                          const TensorMap& schema) {
  if (!(expected_lot > 0.0)) fail(ErrorCode::InvalidArgument, "expected lot size must be positive");
  if (noise_multiplier < 0.0)
    fail(ErrorCode::InvalidArgument, "noise multiplier must be non-negative");
  if (noise_multiplier > 0.0 && !std::isfinite(clip_norm))
    fail(ErrorCode::InvalidArgument, "noise needs a finite clip norm");

  TensorMap sum = zeros_like(schema);
  for (const TensorMap& g : clipped) {
    if (!same_schema(g, schema)) fail(ErrorCode::InvalidArgument, "gradient schema mismatch");
    if (joint_l2_norm(g) > clip_norm + 1e-6)
      fail(ErrorCode::UnclippedInput, "gradient exceeds the clip norm");
    axpy_into(sum, g, 1.0);
  }
  if (noise_multiplier > 0.0) {
    Rng rng(Rng::derive(seed, "dp-noise"));
    const double sigma = noise_multiplier * clip_norm;
    for (auto& [name, t] : sum)
      for (double& x : t.data) x += sigma * rng.normal();
  }
  for (auto& [name, t] : sum) t.vec() /= expected_lot;
  return sum;
}

std::vector<size_t> poisson_sample(size_t n, double q, uint64_t seed) {
  if (q < 0.0 || q > 1.0) fail(ErrorCode::InvalidRate, "sampling rate must be in [0, 1]");
  Rng rng(Rng::derive(seed, "dp-select"));
  std::vector<size_t> lot;
  for (size_t i = 0; i < n; ++i)
    if (rng.uniform01() < q) lot.push_back(i);
  return lot;
}

PrivacySpec resolve_spec(const PrivacySpec& spec) {
  if (!(spec.delta > 0.0) || spec.delta >= 1.0)
    fail(ErrorCode::InvalidArgument, "delta must be in (0, 1)");
  if (!(spec.sample_rate > 0.0) || spec.sample_rate > 1.0)
    fail(ErrorCode::InvalidRate, "sampling rate must be in (0, 1]");
  PrivacySpec out = spec;
  if (!out.noise_multiplier.has_value()) {
    if (!out.epsilon_target.has_value())
      fail(ErrorCode::UnresolvedSpec, "neither noise multiplier nor epsilon target set");
    out.noise_multiplier = accountant::calibrate_sigma(*out.epsilon_target, out.delta,
                                                       out.sample_rate, out.steps);
  }
  return out;
}

DpTrainResult dp_train(model::ModelParams& params, model::LoraAdapter* adapter,
                       const std::vector<model::TokenExample>& examples, const PrivacySpec& spec,
                       double lr, uint64_t seed) {
  if (examples.empty()) fail(ErrorCode::EmptyCorpus, "no training examples");
  if (!(lr > 0.0)) fail(ErrorCode::InvalidArgument, "learning rate must be positive");
  if (!spec.noise_multiplier.has_value())
    fail(ErrorCode::UnresolvedSpec, "noise multiplier not resolved");
  if (!(spec.sample_rate > 0.0) || spec.sample_rate > 1.0)
    fail(ErrorCode::InvalidRate, "sampling rate must be in (0, 1]");
  const double sigma = *spec.noise_multiplier;

  TensorMap& trainable = adapter != nullptr ? adapter->tensors : params.tensors;
  const TensorMap schema = zeros_like(trainable);
  const double expected_lot = spec.sample_rate * static_cast<double>(examples.size());

  DpTrainResult result;
  result.curve.reserve(spec.steps);

  for (size_t step = 0; step < spec.steps; ++step) {
    const std::vector<size_t> lot =
        poisson_sample(examples.size(), spec.sample_rate, Rng::derive(seed, "dp-step", step));

    std::vector<TensorMap> clipped(lot.size());
    std::vector<double> losses(lot.size());
    std::vector<double> norms(lot.size());
    parallel_for(lot.size(), [&](size_t i) {
      const model::LossGrad lg = model::nll_and_grad(params, adapter, examples[lot[i]]);
      losses[i] = lg.loss;
      clipped[i] = clip(lg.grad, spec.clip_norm);
      norms[i] = joint_l2_norm(clipped[i]);
    });

    const TensorMap update = noisy_aggregate(clipped, spec.clip_norm, sigma, expected_lot,
                                             Rng::derive(seed, "dp-step", step), schema);
    for (auto& [name, t] : trainable) t.vec() -= lr * update.at(name).vec();
    if (!all_finite(trainable)) fail(ErrorCode::Diverged, "parameters became non-finite");

    result.ledger.record_step(spec.sample_rate, sigma);
    StepStat stat;
    stat.step = step;
    stat.lot_size = lot.size();
    if (!lot.empty()) {
      double loss_sum = 0.0;
      double norm_sum = 0.0;
      for (size_t i = 0; i < lot.size(); ++i) {
        loss_sum += losses[i];
        norm_sum += norms[i];
      }
      stat.loss = loss_sum / static_cast<double>(lot.size());
      stat.mean_clipped_norm = norm_sum / static_cast<double>(lot.size());
      if (!std::isfinite(stat.loss))
        fail(ErrorCode::Diverged, "loss diverged at step " + std::to_string(step));
    }
    result.curve.push_back(stat);
  }
  return result;
}

std::string curve_to_csv(const std::vector<StepStat>& curve) {
  std::string out = "step,lot_size,mean_clipped_norm,loss\n";
  char buf[128];
  for (const StepStat& s : curve) {
    std::snprintf(buf, sizeof(buf), "%zu,%zu,%.9g,%.9g\n", s.step, s.lot_size,
                  s.mean_clipped_norm, s.loss);
    out += buf;
  }
  return out;
}

Json ledger_json(const accountant::PrivacyLedger& ledger, const PrivacySpec& spec,
                 double epsilon) {
  Json doc = accountant::ledger_to_json(ledger);
  Json spec_json{{"delta", spec.delta},
                 {"sample_rate", spec.sample_rate},
                 {"steps", spec.steps}};
  spec_json["clip_norm"] =
      std::isfinite(spec.clip_norm) ? Json(spec.clip_norm) : Json("inf");
  if (spec.noise_multiplier.has_value()) spec_json["noise_multiplier"] = *spec.noise_multiplier;
  if (spec.epsilon_target.has_value()) spec_json["epsilon_target"] = *spec.epsilon_target;
  doc["spec"] = spec_json;
  doc["epsilon"] = std::isfinite(epsilon) ? Json(epsilon) : Json("inf");
  return doc;
}

}  // namespace dataclone::dp
