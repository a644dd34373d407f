#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "dataclone/dp.hpp"
#include "dataclone/model.hpp"
#include "dataclone/rng.hpp"
#include "helpers.hpp"

using namespace dataclone;
using namespace dataclone::dp;
using model::ModelParams;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

TensorMap random_grad(uint64_t seed, double scale) {
  Rng rng(seed);
  TensorMap g;
  g["w"] = Tensor({4, 3});
  g["b"] = Tensor({5});
  for (auto& [name, t] : g)
    for (double& x : t.data) x = scale * rng.normal();
  return g;
}

model::HParams dp_hparams() {
  model::HParams hp;
  hp.d_model = 8;
  hp.n_layers = 1;
  hp.n_heads = 2;
  hp.context_len = 16;
  hp.vocab_size = 270;
  return hp;
}

std::vector<model::TokenExample> dp_examples(size_t n) {
  std::vector<model::TokenExample> out;
  Rng rng(4242);
  for (size_t i = 0; i < n; ++i) {
    model::TokenExample ex;
    ex.ids.push_back(model::kBosId);
    for (size_t j = 0; j < 9; ++j)
      ex.ids.push_back(static_cast<model::TokenId>(260 + rng.below(10)));
    ex.target_mask.assign(ex.ids.size(), false);
    for (size_t j = 4; j < ex.ids.size(); ++j) ex.target_mask[j] = true;
    out.push_back(ex);
  }
  return out;
}

}  // namespace

TEST_CASE("clip caps the joint norm over 10k random gradients") {
  const double c = 1.0;
  for (uint64_t i = 0; i < 10000; ++i) {
    const TensorMap g = random_grad(i, i % 2 == 0 ? 0.05 : 2.0);
    const double before = joint_l2_norm(g);
    const TensorMap clipped = clip(g, c);
    const double after = joint_l2_norm(clipped);
    CHECK(after <= c * (1.0 + 1e-12));
    if (before <= c) {
      // small gradients pass through bitwise
      for (const auto& [name, t] : g)
        for (size_t j = 0; j < t.size(); ++j) CHECK(clipped.at(name).data[j] == t.data[j]);
    } else {
      // large ones keep their direction: out = in * (c / before)
      const double s = c / before;
      for (const auto& [name, t] : g)
        for (size_t j = 0; j < t.size(); ++j)
          CHECK(clipped.at(name).data[j] == doctest::Approx(t.data[j] * s).epsilon(1e-12));
    }
  }
}

TEST_CASE("clip validates its arguments") {
  CHECK_FAILS_WITH(clip(random_grad(1, 1.0), 0.0), ErrorCode::InvalidArgument);
  CHECK_FAILS_WITH(clip(random_grad(1, 1.0), -1.0), ErrorCode::InvalidArgument);
  TensorMap bad = random_grad(2, 1.0);
  bad["w"].data[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FAILS_WITH(clip(bad, 1.0), ErrorCode::NonFiniteGradient);
  // infinite max_norm disables clipping
  const TensorMap big = random_grad(3, 100.0);
  const TensorMap out = clip(big, kInf);
  for (const auto& [name, t] : big)
    for (size_t j = 0; j < t.size(); ++j) CHECK(out.at(name).data[j] == t.data[j]);
}

TEST_CASE("noisy_aggregate rejects inputs above the clip norm") {
  const TensorMap schema = zeros_like(random_grad(0, 1.0));
  TensorMap too_big = random_grad(5, 1.0);
  const double norm = joint_l2_norm(too_big);
  for (auto& [name, t] : too_big) t.vec() *= (1.0 + 1e-3) / norm;  // just over 1
  CHECK_FAILS_WITH(noisy_aggregate({too_big}, 1.0, 0.0, 4.0, 1, schema),
                   ErrorCode::UnclippedInput);
}

TEST_CASE("noisy_aggregate sums, scales by the expected lot, and is seeded") {
  const TensorMap schema = zeros_like(random_grad(0, 1.0));
  const TensorMap a = clip(random_grad(7, 0.2), 1.0);
  const TensorMap b = clip(random_grad(8, 0.2), 1.0);
  const double lot = 5.0;

  const TensorMap noiseless = noisy_aggregate({a, b}, 1.0, 0.0, lot, 3, schema);
  for (const auto& [name, t] : noiseless)
    for (size_t j = 0; j < t.size(); ++j)
      CHECK(t.data[j] ==
            doctest::Approx((a.at(name).data[j] + b.at(name).data[j]) / lot).epsilon(1e-12));

  const TensorMap noisy1 = noisy_aggregate({a, b}, 1.0, 0.5, lot, 3, schema);
  const TensorMap noisy2 = noisy_aggregate({a, b}, 1.0, 0.5, lot, 3, schema);
  const TensorMap noisy3 = noisy_aggregate({a, b}, 1.0, 0.5, lot, 4, schema);
  bool same_seed_equal = true;
  bool diff_seed_equal = true;
  for (const auto& [name, t] : noisy1)
    for (size_t j = 0; j < t.size(); ++j) {
      same_seed_equal &= t.data[j] == noisy2.at(name).data[j];
      diff_seed_equal &= t.data[j] == noisy3.at(name).data[j];
    }
  CHECK(same_seed_equal);
  CHECK(!diff_seed_equal);
}

TEST_CASE("noise standard deviation lands within 2 percent over 1e5 draws") {
  TensorMap schema;
  schema["w"] = Tensor({1000});
  const double c = 1.0;
  const double sigma = 1.3;
  const double lot = 7.0;

  double sum = 0.0;
  double sq = 0.0;
  size_t n = 0;
  for (uint64_t call = 0; call < 100; ++call) {
    // an empty lot yields the pure noise vector scaled by the expected lot
    const TensorMap out = noisy_aggregate({}, c, sigma, lot, 1000 + call, schema);
    for (double x : out.at("w").data) {
      sum += x;
      sq += x * x;
      ++n;
    }
  }
  REQUIRE(n == 100000);
  const double mean = sum / static_cast<double>(n);
  const double var = sq / static_cast<double>(n) - mean * mean;
  const double want_std = sigma * c / lot;
  CHECK(std::abs(mean) < 3 * want_std / std::sqrt(static_cast<double>(n)) * 1.5);
  CHECK(std::sqrt(var) == doctest::Approx(want_std).epsilon(0.02));
}

TEST_CASE("poisson_sample edge rates and determinism") {
  CHECK(poisson_sample(100, 0.0, 1).empty());
  const auto all = poisson_sample(100, 1.0, 1);
  REQUIRE(all.size() == 100);
  for (size_t i = 0; i < 100; ++i) CHECK(all[i] == i);
  CHECK_FAILS_WITH(poisson_sample(10, -0.01, 1), ErrorCode::InvalidRate);
  CHECK_FAILS_WITH(poisson_sample(10, 1.01, 1), ErrorCode::InvalidRate);

  CHECK(poisson_sample(1000, 0.3, 9) == poisson_sample(1000, 0.3, 9));
  CHECK(poisson_sample(1000, 0.3, 9) != poisson_sample(1000, 0.3, 10));

  const auto lot = poisson_sample(10000, 0.3, 11);
  CHECK(lot.size() > 2700);
  CHECK(lot.size() < 3300);
  for (size_t i = 1; i < lot.size(); ++i) CHECK(lot[i - 1] < lot[i]);
}

TEST_CASE("resolve_spec fills the missing side") {
  PrivacySpec eps_only;
  eps_only.epsilon_target = 4.0;
  eps_only.sample_rate = 0.05;
  eps_only.steps = 50;
  const PrivacySpec resolved = resolve_spec(eps_only);
  REQUIRE(resolved.noise_multiplier.has_value());
  CHECK(*resolved.noise_multiplier > 0.0);

  PrivacySpec sigma_only;
  sigma_only.noise_multiplier = 1.1;
  CHECK(*resolve_spec(sigma_only).noise_multiplier == 1.1);

  PrivacySpec neither;
  CHECK_FAILS_WITH(resolve_spec(neither), ErrorCode::UnresolvedSpec);

  PrivacySpec bad_delta = sigma_only;
  bad_delta.delta = 0.0;
  CHECK_FAILS_WITH(resolve_spec(bad_delta), ErrorCode::InvalidArgument);
  PrivacySpec bad_rate = sigma_only;
  bad_rate.sample_rate = 0.0;
  CHECK_FAILS_WITH(resolve_spec(bad_rate), ErrorCode::InvalidRate);
}

TEST_CASE("dp_train with sigma 0, no clipping, q 1 is bitwise vanilla SGD") {
  const model::HParams hp = dp_hparams();
  const auto examples = dp_examples(6);
  const double lr = 0.1;
  const size_t steps = 3;

  ModelParams dp_params = model::init_model(hp, 99);
  model::LoraAdapter dp_adapter = model::init_lora(dp_params, 2, 4.0, 101);
  PrivacySpec spec;
  spec.clip_norm = kInf;
  spec.noise_multiplier = 0.0;
  spec.sample_rate = 1.0;
  spec.steps = steps;
  dp_train(dp_params, &dp_adapter, examples, spec, lr, 7);

  // oracle: plain full-batch SGD with the same accumulation and update order
  ModelParams sgd_params = model::init_model(hp, 99);
  model::LoraAdapter sgd_adapter = model::init_lora(sgd_params, 2, 4.0, 101);
  const double expected_lot = static_cast<double>(examples.size());
  for (size_t step = 0; step < steps; ++step) {
    TensorMap sum = zeros_like(sgd_adapter.tensors);
    for (const auto& ex : examples)
      axpy_into(sum, model::nll_and_grad(sgd_params, &sgd_adapter, ex).grad, 1.0);
    for (auto& [name, t] : sum) t.vec() /= expected_lot;
    for (auto& [name, t] : sgd_adapter.tensors) t.vec() -= lr * sum.at(name).vec();
  }

  for (const auto& [name, t] : sgd_adapter.tensors) {
    const Tensor& dp_t = dp_adapter.tensors.at(name);
    for (size_t j = 0; j < t.size(); ++j) CHECK(dp_t.data[j] == t.data[j]);
  }
}

TEST_CASE("dp_train is seed-deterministic and fills ledger and curve") {
  const model::HParams hp = dp_hparams();
  const auto examples = dp_examples(8);
  PrivacySpec spec;
  spec.clip_norm = 0.5;
  spec.noise_multiplier = 1.0;
  spec.sample_rate = 0.5;
  spec.steps = 4;

  ModelParams p1 = model::init_model(hp, 103);
  model::LoraAdapter a1 = model::init_lora(p1, 2, 4.0, 105);
  const DpTrainResult r1 = dp_train(p1, &a1, examples, spec, 0.05, 11);

  ModelParams p2 = model::init_model(hp, 103);
  model::LoraAdapter a2 = model::init_lora(p2, 2, 4.0, 105);
  const DpTrainResult r2 = dp_train(p2, &a2, examples, spec, 0.05, 11);

  for (const auto& [name, t] : a1.tensors) {
    const Tensor& other = a2.tensors.at(name);
    for (size_t j = 0; j < t.size(); ++j) CHECK(t.data[j] == other.data[j]);
  }
  CHECK(r1.ledger.steps == spec.steps);
  CHECK(r1.curve.size() == spec.steps);
  CHECK(r1.ledger.rdp == r2.ledger.rdp);
  for (const StepStat& s : r1.curve) CHECK(s.mean_clipped_norm <= spec.clip_norm + 1e-9);

  ModelParams p3 = model::init_model(hp, 103);
  model::LoraAdapter a3 = model::init_lora(p3, 2, 4.0, 105);
  dp_train(p3, &a3, examples, spec, 0.05, 12);
  bool all_equal = true;
  for (const auto& [name, t] : a1.tensors) {
    const Tensor& other = a3.tensors.at(name);
    for (size_t j = 0; j < t.size(); ++j) all_equal &= t.data[j] == other.data[j];
  }
  CHECK(!all_equal);  // a different seed draws different lots and noise
}

TEST_CASE("empty lots still advance the ledger and inject noise") {
  const model::HParams hp = dp_hparams();
  const auto examples = dp_examples(3);
  PrivacySpec spec;
  spec.clip_norm = 1.0;
  spec.noise_multiplier = 2.0;
  spec.sample_rate = 1e-9;  // lots are empty with overwhelming probability
  spec.steps = 3;

  ModelParams params = model::init_model(hp, 107);
  model::LoraAdapter adapter = model::init_lora(params, 2, 4.0, 109);
  const TensorMap before = adapter.tensors;
  const DpTrainResult result = dp_train(params, &adapter, examples, spec, 0.05, 13);

  CHECK(result.ledger.steps == 3);
  for (const StepStat& s : result.curve) {
    CHECK(s.lot_size == 0);
    CHECK(s.loss == 0.0);
  }
  bool changed = false;
  for (const auto& [name, t] : adapter.tensors)
    for (size_t j = 0; j < t.size(); ++j) changed |= t.data[j] != before.at(name).data[j];
  CHECK(changed);  // pure noise still moves the parameters
}

TEST_CASE("dp_train validates spec and inputs") {
  const model::HParams hp = dp_hparams();
  ModelParams params = model::init_model(hp, 113);
  const auto examples = dp_examples(2);

  PrivacySpec unresolved;
  CHECK_FAILS_WITH(dp_train(params, nullptr, examples, unresolved, 0.1, 1),
                   ErrorCode::UnresolvedSpec);

  PrivacySpec ok;
  ok.noise_multiplier = 0.0;
  ok.clip_norm = kInf;
  ok.sample_rate = 1.0;
  CHECK_FAILS_WITH(dp_train(params, nullptr, {}, ok, 0.1, 1), ErrorCode::EmptyCorpus);
  CHECK_FAILS_WITH(dp_train(params, nullptr, examples, ok, 0.0, 1), ErrorCode::InvalidArgument);
}

TEST_CASE("dp_train without an adapter updates the base parameters") {
  const model::HParams hp = dp_hparams();
  ModelParams params = model::init_model(hp, 127);
  const TensorMap before = params.tensors;
  PrivacySpec spec;
  spec.clip_norm = kInf;
  spec.noise_multiplier = 0.0;
  spec.sample_rate = 1.0;
  spec.steps = 1;
  dp_train(params, nullptr, dp_examples(3), spec, 0.1, 1);
  bool changed = false;
  for (const auto& [name, t] : params.tensors)
    for (size_t j = 0; j < t.size(); ++j) changed |= t.data[j] != before.at(name).data[j];
  CHECK(changed);
}

TEST_CASE("curve_to_csv is a stable header plus one row per step") {
  std::vector<StepStat> curve = {{0, 3, 0.9, 5.5}, {1, 0, 0.0, 0.0}};
  const std::string csv = curve_to_csv(curve);
  CHECK(csv.find("step,lot_size,mean_clipped_norm,loss\n") == 0);
  CHECK(csv.find("0,3,0.9,5.5") != std::string::npos);
  CHECK(csv.find("1,0,0,0") != std::string::npos);
}
