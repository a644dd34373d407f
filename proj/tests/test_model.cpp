#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dataclone/model.hpp"
#include "dataclone/rng.hpp"
#include "helpers.hpp"

using namespace dataclone;
using namespace dataclone::model;

namespace {

HParams tiny_hparams(bool causal) {
  HParams hp;
  hp.d_model = 16;
  hp.n_layers = 2;
  hp.n_heads = 2;
  hp.context_len = 24;
  hp.vocab_size = 280;
  hp.causal = causal;
  return hp;
}

TokenExample tiny_example(const HParams& hp, uint64_t seed, size_t len = 14) {
  Rng rng(seed);
  TokenExample ex;
  ex.ids.push_back(kBosId);
  for (size_t i = 1; i < len; ++i)
    ex.ids.push_back(static_cast<TokenId>(kReservedTokens + rng.below(hp.vocab_size - kReservedTokens)));
  ex.target_mask.assign(len, false);
  for (size_t i = len / 2; i < len; ++i) ex.target_mask[i] = true;
  return ex;
}

// Central-difference check of analytic gradients on >= min_coords coordinates
// spread over every trainable tensor. rel tolerance 1e-3.
void check_gradients(ModelParams& params, LoraAdapter* adapter,
                     const std::function<LossGrad(bool)>& loss_fn, size_t min_coords) {
  const LossGrad lg = loss_fn(true);
  TensorMap& trainable = adapter != nullptr ? adapter->tensors : params.tensors;
  REQUIRE(lg.grad.size() == trainable.size());

  size_t total_coords = 0;
  for (const auto& [name, t] : trainable) total_coords += t.size();
  const size_t want = std::max<size_t>(min_coords, trainable.size());

  const double h = 1e-4;
  Rng pick(12345);
  size_t checked = 0;
  size_t exact_hits = 0;
  // round-robin the tensors so every one contributes coordinates
  while (checked < want) {
    for (auto& [name, t] : trainable) {
      if (checked >= want) break;
      const size_t idx = static_cast<size_t>(pick.below(t.size()));
      const double saved = t.data[idx];
      t.data[idx] = saved + h;
      const double up = loss_fn(false).loss;
      t.data[idx] = saved - h;
      const double down = loss_fn(false).loss;
      t.data[idx] = saved;
      const double fd = (up - down) / (2 * h);
      const double an = lg.grad.at(name).data[idx];
      const double denom = std::max({1e-8, std::abs(fd), std::abs(an)});
      INFO(name << "[" << idx << "] fd=" << fd << " analytic=" << an);
      CHECK(std::abs(fd - an) / denom <= 1e-3);
      if (std::abs(fd - an) / denom <= 1e-3) ++exact_hits;
      ++checked;
    }
  }
  CHECK(checked >= min_coords);
  CHECK(exact_hits == checked);
  (void)total_coords;
}

}  // namespace

TEST_CASE("init_model is seed-deterministic with documented tensor set") {
  const HParams hp = tiny_hparams(true);
  const ModelParams a = init_model(hp, 5);
  const ModelParams b = init_model(hp, 5);
  REQUIRE(a.tensors.size() == b.tensors.size());
  for (const auto& [name, t] : a.tensors) {
    CHECK(t.data == b.tensors.at(name).data);
  }
  CHECK(init_model(hp, 6).tensors.at("tok_emb").data != a.tensors.at("tok_emb").data);

  CHECK(a.tensors.count("tok_emb") == 1);
  CHECK(a.tensors.count("pos_emb") == 1);
  CHECK(a.tensors.count("head.w") == 1);
  CHECK(a.tensors.count("ln_f.g") == 1);
  for (size_t l = 0; l < hp.n_layers; ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    for (const char* part : {"attn.wq", "attn.wk", "attn.wv", "attn.wo", "mlp.w1", "mlp.w2",
                             "ln1.g", "ln1.b", "ln2.g", "ln2.b"})
      CHECK(a.tensors.count(pre + part) == 1);
  }
}

TEST_CASE("fresh model scores close to uniform") {
  const HParams hp = tiny_hparams(true);
  const ModelParams params = init_model(hp, 21);
  double total = 0.0;
  for (uint64_t s = 0; s < 4; ++s)
    total += nll_and_grad(params, nullptr, tiny_example(hp, 100 + s), false).loss;
  const double mean_nll = total / 4.0;
  CHECK(mean_nll == doctest::Approx(std::log(double(hp.vocab_size))).epsilon(0.05));
}

TEST_CASE("causal LM gradients match finite differences on 200+ coordinates") {
  const HParams hp = tiny_hparams(true);
  ModelParams params = init_model(hp, 31);
  const TokenExample ex = tiny_example(hp, 17);
  check_gradients(params, nullptr,
                  [&](bool want) { return nll_and_grad(params, nullptr, ex, want); }, 200);
}

TEST_CASE("MLM gradients match finite differences on 200+ coordinates") {
  const HParams hp = tiny_hparams(false);
  ModelParams params = init_model(hp, 37);
  const std::vector<TokenId> ids = tiny_example(hp, 19).ids;
  check_gradients(params, nullptr,
                  [&](bool want) { return mlm_loss_and_grad(params, ids, 77, want); }, 200);
}

TEST_CASE("LoRA gradients match finite differences") {
  const HParams hp = tiny_hparams(true);
  ModelParams params = init_model(hp, 41);
  LoraAdapter adapter = init_lora(params, 4, 8.0, 43);
  // push B off zero so its gradient paths are exercised
  Rng rng(47);
  for (auto& [name, t] : adapter.tensors)
    for (double& x : t.data) x += 0.05 * rng.normal();
  const TokenExample ex = tiny_example(hp, 23);
  check_gradients(params, &adapter,
                  [&](bool want) { return nll_and_grad(params, &adapter, ex, want); }, 64);
}

TEST_CASE("adapter-only gradients cover exactly the adapter tensors") {
  const HParams hp = tiny_hparams(true);
  ModelParams params = init_model(hp, 51);
  LoraAdapter adapter = init_lora(params, 4, 8.0, 53);
  const LossGrad lg = nll_and_grad(params, &adapter, tiny_example(hp, 29));
  CHECK(lg.grad.size() == adapter.tensors.size());
  for (const auto& [name, t] : lg.grad) {
    CHECK(adapter.tensors.count(name) == 1);
    CHECK(t.shape == adapter.tensors.at(name).shape);
  }
}

TEST_CASE("fresh adapter leaves the forward pass bitwise unchanged") {
  const HParams hp = tiny_hparams(true);
  const ModelParams params = init_model(hp, 57);
  const LoraAdapter adapter = init_lora(params, 4, 8.0, 59);
  const std::vector<TokenId> ids = tiny_example(hp, 31).ids;
  const Tensor base_logits = forward(params, nullptr, ids);
  const Tensor lora_logits = forward(params, &adapter, ids);
  REQUIRE(base_logits.data.size() == lora_logits.data.size());
  for (size_t i = 0; i < base_logits.data.size(); ++i)
    CHECK(base_logits.data[i] == lora_logits.data[i]);  // B = 0 exactly
}

TEST_CASE("merge_lora folds the adapter into the base weights") {
  const HParams hp = tiny_hparams(true);
  const ModelParams params = init_model(hp, 61);
  LoraAdapter adapter = init_lora(params, 4, 8.0, 67);
  Rng rng(71);
  for (auto& [name, t] : adapter.tensors)
    for (double& x : t.data) x += 0.1 * rng.normal();

  const ModelParams merged = merge_lora(params, adapter);
  const std::vector<TokenId> ids = tiny_example(hp, 37).ids;
  const Tensor adapted = forward(params, &adapter, ids);
  const Tensor folded = forward(merged, nullptr, ids);
  REQUIRE(adapted.data.size() == folded.data.size());
  for (size_t i = 0; i < adapted.data.size(); ++i)
    CHECK(adapted.data[i] == doctest::Approx(folded.data[i]).epsilon(1e-9));
}

TEST_CASE("init_lora targets every layer's wq and wv with zero B") {
  const HParams hp = tiny_hparams(true);
  const ModelParams params = init_model(hp, 73);
  const LoraAdapter adapter = init_lora(params, 4, 8.0, 79);
  CHECK(adapter.targets.size() == 2 * hp.n_layers);
  for (const std::string& target : adapter.targets) {
    CHECK((target.find("attn.wq") != std::string::npos ||
           target.find("attn.wv") != std::string::npos));
    const Tensor& a = adapter.tensors.at(target + ".lora_a");
    const Tensor& b = adapter.tensors.at(target + ".lora_b");
    CHECK(a.shape == std::vector<size_t>{4, hp.d_model});
    CHECK(b.shape == std::vector<size_t>{hp.d_model, 4});
    for (double x : b.data) CHECK(x == 0.0);
    double a_norm = 0.0;
    for (double x : a.data) a_norm += x * x;
    CHECK(a_norm > 0.0);
  }
  CHECK(adapter.scale() == doctest::Approx(2.0));
}

TEST_CASE("greedy sampling equals repeated full forward argmax") {
  const HParams hp = tiny_hparams(true);
  const ModelParams params = init_model(hp, 83);
  std::vector<TokenId> prompt = {kBosId, 270, 271, 272};

  Decoding dec;
  dec.max_new = 8;
  dec.top_k = 1;
  dec.temperature = 1.0;
  const std::vector<TokenId> fast = sample(params, nullptr, prompt, dec);

  // oracle: no KV cache, full forward each step, argmax with lowest-id ties
  std::vector<TokenId> ids = prompt;
  std::vector<TokenId> slow;
  for (size_t step = 0; step < dec.max_new && ids.size() < hp.context_len; ++step) {
    const Tensor logits = forward(params, nullptr, ids);
    const size_t last = logits.rows() - 1;
    TokenId best = 0;
    for (size_t v = 1; v < hp.vocab_size; ++v)
      if (logits.at(last, v) > logits.at(last, best)) best = static_cast<TokenId>(v);
    if (best == kEosId) break;
    slow.push_back(best);
    ids.push_back(best);
  }
  CHECK(fast == slow);
}

TEST_CASE("greedy decoding ignores the seed") {
  const HParams hp = tiny_hparams(true);
  const ModelParams params = init_model(hp, 89);
  Decoding a{6, 1.0, 1, 1};
  Decoding b{6, 0.0, 1, 999};  // zero temperature is fine when greedy
  const std::vector<TokenId> prompt = {kBosId, 265};
  CHECK(sample(params, nullptr, prompt, a) == sample(params, nullptr, prompt, b));
}

TEST_CASE("temperature sampling is deterministic per seed and varies across seeds") {
  const HParams hp = tiny_hparams(true);
  const ModelParams params = init_model(hp, 97);
  const std::vector<TokenId> prompt = {kBosId, 266};
  Decoding dec{12, 1.2, 20, 5};
  CHECK(sample(params, nullptr, prompt, dec) == sample(params, nullptr, prompt, dec));
  Decoding other = dec;
  other.seed = 6;
  bool any_diff = false;
  for (int tries = 0; tries < 4 && !any_diff; ++tries) {
    other.seed = 6 + tries;
    any_diff = sample(params, nullptr, prompt, other) != sample(params, nullptr, prompt, dec);
  }
  CHECK(any_diff);
}

TEST_CASE("sampled tokens stay inside the step top-k set") {
  const HParams hp = tiny_hparams(true);
  const ModelParams params = init_model(hp, 101);
  const std::vector<TokenId> prompt = {kBosId, 267, 268};
  const Tensor logits = forward(params, nullptr, prompt);
  const size_t last = logits.rows() - 1;

  const size_t k = 5;
  std::vector<std::pair<double, TokenId>> ranked;
  for (size_t v = 0; v < hp.vocab_size; ++v)
    ranked.push_back({logits.at(last, v), static_cast<TokenId>(v)});
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::set<TokenId> allowed;
  for (size_t i = 0; i < k; ++i) allowed.insert(ranked[i].second);

  for (uint64_t seed = 0; seed < 30; ++seed) {
    Decoding dec{1, 1.0, k, seed};
    const std::vector<TokenId> out = sample(params, nullptr, prompt, dec);
    if (out.empty()) continue;  // EOS drawn and suppressed
    REQUIRE(out.size() == 1);
    CHECK(allowed.count(out[0]) == 1);
  }
}

TEST_CASE("sampling validates its inputs") {
  const HParams hp = tiny_hparams(true);
  const ModelParams params = init_model(hp, 103);
  std::vector<TokenId> long_prompt(hp.context_len, 265);
  long_prompt[0] = kBosId;
  Decoding dec{4, 1.0, 4, 1};
  CHECK_FAILS_WITH(sample(params, nullptr, long_prompt, dec), ErrorCode::ContextOverflow);
  Decoding bad_temp{4, 0.0, 4, 1};
  CHECK_FAILS_WITH(sample(params, nullptr, {kBosId, 265}, bad_temp), ErrorCode::InvalidArgument);
  Decoding neg_temp{4, -1.0, 0, 1};
  CHECK_FAILS_WITH(sample(params, nullptr, {kBosId, 265}, neg_temp), ErrorCode::InvalidArgument);
}

TEST_CASE("sequence_loglik agrees with the training loss") {
  const HParams hp = tiny_hparams(true);
  const ModelParams params = init_model(hp, 107);
  const TokenExample ex = tiny_example(hp, 41);
  const LossGrad lg = nll_and_grad(params, nullptr, ex, false);
  const double loglik = sequence_loglik(params, nullptr, ex);
  CHECK(loglik ==
        doctest::Approx(-lg.loss * static_cast<double>(lg.n_targets)).epsilon(1e-9));
}

TEST_CASE("nll_and_grad rejects an example with no targets") {
  const HParams hp = tiny_hparams(true);
  const ModelParams params = init_model(hp, 109);
  TokenExample ex = tiny_example(hp, 43);
  ex.target_mask.assign(ex.ids.size(), false);
  CHECK_FAILS_WITH(nll_and_grad(params, nullptr, ex), ErrorCode::EmptyLoss);
}

TEST_CASE("context overflow and bad ids are rejected") {
  const HParams hp = tiny_hparams(true);
  const ModelParams params = init_model(hp, 113);
  TokenExample ex;
  ex.ids.assign(hp.context_len + 2, 265);
  ex.target_mask.assign(ex.ids.size(), true);
  CHECK_FAILS_WITH(nll_and_grad(params, nullptr, ex), ErrorCode::ContextOverflow);

  TokenExample bad = tiny_example(hp, 47);
  bad.ids[2] = static_cast<TokenId>(hp.vocab_size);
  CHECK_FAILS_WITH(nll_and_grad(params, nullptr, bad), ErrorCode::InvalidTokenId);
}

TEST_CASE("mlm masking needs at least two tokens") {
  const HParams hp = tiny_hparams(false);
  const ModelParams params = init_model(hp, 127);
  CHECK_FAILS_WITH(mlm_loss_and_grad(params, {kBosId}, 1), ErrorCode::TooShort);
}

TEST_CASE("mlm loss is mask-seed deterministic") {
  const HParams hp = tiny_hparams(false);
  const ModelParams params = init_model(hp, 131);
  const std::vector<TokenId> ids = tiny_example(hp, 53).ids;
  CHECK(mlm_loss_and_grad(params, ids, 5, false).loss ==
        mlm_loss_and_grad(params, ids, 5, false).loss);
  bool differs = false;
  for (uint64_t s = 6; s < 12 && !differs; ++s)
    differs = mlm_loss_and_grad(params, ids, s, false).loss !=
              mlm_loss_and_grad(params, ids, 5, false).loss;
  CHECK(differs);
}
