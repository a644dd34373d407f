#include <doctest.h>

#include <cmath>
#include <vector>

#include "dataclone/mia.hpp"
#include "dataclone/rng.hpp"
#include "helpers.hpp"

using namespace dataclone;
using namespace dataclone::mia;

namespace {

// O(n^2) oracle: mean over all (pos, neg) pairs of 1/0.5/0 for >/=/<.
double brute_force_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  double wins = 0.0;
  for (double p : pos)
    for (double n : neg) {
      if (p > n) wins += 1.0;
      else if (p == n) wins += 0.5;
    }
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

model::HParams mia_hparams() {
  model::HParams hp;
  hp.d_model = 8;
  hp.n_layers = 1;
  hp.n_heads = 2;
  hp.context_len = 16;
  hp.vocab_size = 270;
  return hp;
}

model::TokenExample mia_example(uint64_t seed) {
  Rng rng(seed);
  model::TokenExample ex;
  ex.ids.push_back(model::kBosId);
  for (size_t i = 0; i < 8; ++i)
    ex.ids.push_back(static_cast<model::TokenId>(260 + rng.below(9)));
  ex.target_mask.assign(ex.ids.size(), false);
  for (size_t i = 3; i < ex.ids.size(); ++i) ex.target_mask[i] = true;
  return ex;
}

}  // namespace

TEST_CASE("AUC hand-worked cases") {
  CHECK(mann_whitney_auc({3, 4}, {1, 2}) == 1.0);
  CHECK(mann_whitney_auc({1, 2}, {3, 4}) == 0.0);
  CHECK(mann_whitney_auc({2, 4}, {1, 3}) == 0.75);
  CHECK(mann_whitney_auc({1, 3}, {2, 4}) == 0.25);
  CHECK(mann_whitney_auc({5}, {5}) == 0.5);          // a pure tie
  CHECK(mann_whitney_auc({1, 2}, {1, 2}) == 0.5);    // symmetric ties
}

TEST_CASE("AUC equals the brute-force pair count on populations up to 100") {
  Rng rng(33);
  for (int round = 0; round < 20; ++round) {
    const size_t n_pos = 1 + rng.below(100);
    const size_t n_neg = 1 + rng.below(100);
    std::vector<double> pos(n_pos);
    std::vector<double> neg(n_neg);
    // quantized scores force plenty of ties
    for (double& x : pos) x = static_cast<double>(rng.below(12));
    for (double& x : neg) x = static_cast<double>(rng.below(12));
    const double fast = mann_whitney_auc(pos, neg);
    const double slow = brute_force_auc(pos, neg);
    CHECK(fast == doctest::Approx(slow).epsilon(1e-12));
  }
}

TEST_CASE("AUC complement symmetry") {
  Rng rng(35);
  std::vector<double> a(50);
  std::vector<double> b(70);
  for (double& x : a) x = rng.normal();
  for (double& x : b) x = rng.normal() + 0.3;
  CHECK(mann_whitney_auc(a, b) ==
        doctest::Approx(1.0 - mann_whitney_auc(b, a)).epsilon(1e-12));
}

TEST_CASE("AUC of identically distributed scores sits near one half") {
  Rng rng(37);
  std::vector<double> pos(10000);
  std::vector<double> neg(10000);
  for (double& x : pos) x = rng.normal();
  for (double& x : neg) x = rng.normal();
  const double auc = mann_whitney_auc(pos, neg);
  CHECK(auc > 0.48);
  CHECK(auc < 0.52);
}

TEST_CASE("AUC requires both classes") {
  CHECK_FAILS_WITH(mann_whitney_auc({}, {1.0}), ErrorCode::SingleClass);
  CHECK_FAILS_WITH(mann_whitney_auc({1.0}, {}), ErrorCode::SingleClass);
}

TEST_CASE("rmia scores are population fractions in the unit interval") {
  const model::HParams hp = mia_hparams();
  const model::ModelParams target = model::init_model(hp, 41);
  const model::ModelParams reference = model::init_model(hp, 43);

  std::vector<Candidate> candidates;
  for (uint64_t i = 0; i < 6; ++i)
    candidates.push_back({"c" + std::to_string(i), i % 2 == 0, mia_example(100 + i)});
  std::vector<model::TokenExample> population;
  for (uint64_t i = 0; i < 10; ++i) population.push_back(mia_example(200 + i));

  const MiaResult result = rmia_audit(target, nullptr, reference, nullptr, candidates, population);
  REQUIRE(result.records.size() == candidates.size());
  for (size_t i = 0; i < result.records.size(); ++i) {
    const MiaRecord& rec = result.records[i];
    CHECK(rec.id == candidates[i].id);
    CHECK(rec.member == candidates[i].member);
    CHECK(std::isfinite(rec.target_loglik));
    CHECK(std::isfinite(rec.reference_loglik));
    CHECK(rec.log_ratio() ==
          doctest::Approx(rec.target_loglik - rec.reference_loglik).epsilon(1e-12));
    CHECK(rec.score >= 0.0);
    CHECK(rec.score <= 1.0);
  }
  CHECK(result.auc >= 0.0);
  CHECK(result.auc <= 1.0);
}

TEST_CASE("identical target and reference models give an AUC of one half") {
  const model::HParams hp = mia_hparams();
  const model::ModelParams params = model::init_model(hp, 47);
  std::vector<Candidate> candidates;
  for (uint64_t i = 0; i < 8; ++i)
    candidates.push_back({"c" + std::to_string(i), i < 4, mia_example(300 + i)});
  std::vector<model::TokenExample> population;
  for (uint64_t i = 0; i < 6; ++i) population.push_back(mia_example(400 + i));

  const MiaResult result = rmia_audit(params, nullptr, params, nullptr, candidates, population);
  for (const MiaRecord& rec : result.records) CHECK(rec.log_ratio() == 0.0);
  CHECK(result.auc == 0.5);  // every comparison ties
}

TEST_CASE("rmia validates candidates and population") {
  const model::HParams hp = mia_hparams();
  const model::ModelParams params = model::init_model(hp, 53);
  std::vector<Candidate> candidates = {{"only", true, mia_example(1)},
                                       {"other", false, mia_example(2)}};
  CHECK_FAILS_WITH(rmia_audit(params, nullptr, params, nullptr, candidates, {}),
                   ErrorCode::EmptyPopulation);
  std::vector<model::TokenExample> population = {mia_example(3)};
  std::vector<Candidate> one_class = {{"a", true, mia_example(4)},
                                      {"b", true, mia_example(5)}};
  CHECK_FAILS_WITH(rmia_audit(params, nullptr, params, nullptr, one_class, population),
                   ErrorCode::SingleClass);
  CHECK_FAILS_WITH(rmia_audit(params, nullptr, params, nullptr, {}, population),
                   ErrorCode::SingleClass);
}

TEST_CASE("mia json carries the documented fields") {
  const model::HParams hp = mia_hparams();
  const model::ModelParams params = model::init_model(hp, 59);
  std::vector<Candidate> candidates = {{"m1", true, mia_example(11)},
                                       {"n1", false, mia_example(12)}};
  std::vector<model::TokenExample> population = {mia_example(13), mia_example(14)};
  const MiaResult result =
      rmia_audit(params, nullptr, params, nullptr, candidates, population);
  const Json doc = mia_to_json(result);
  CHECK(doc.contains("auc"));
  REQUIRE(doc.at("records").size() == 2);
  const Json& rec = doc.at("records")[0];
  for (const char* field : {"id", "member", "target_loglik", "reference_loglik", "score"})
    CHECK(rec.contains(field));
  CHECK(rec.at("id") == "m1");
  CHECK(rec.at("member") == true);
}
