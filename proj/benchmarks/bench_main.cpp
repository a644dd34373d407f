// Microbenchmarks for the hot paths: model forward/backward, DP clipping and
// aggregation, annotation, and the privacy accountant.

#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "dataclone/accountant.hpp"
#include "dataclone/corpus.hpp"
#include "dataclone/dp.hpp"
#include "dataclone/model.hpp"
#include "dataclone/rng.hpp"
#include "dataclone/tensor.hpp"
#include "dataclone/vocab.hpp"

using namespace dataclone;

namespace {

struct Fixture {
  model::Vocab vocab;
  model::HParams hp;
  model::ModelParams params;
  model::LoraAdapter adapter;
  model::TokenExample example;

  explicit Fixture(size_t d_model, size_t seq_len) : vocab(build_vocab()) {
    hp.d_model = d_model;
    hp.n_layers = 2;
    hp.n_heads = 4;
    hp.context_len = 256;
    hp.vocab_size = vocab.size();
    params = model::init_model(hp, 1);
    adapter = model::init_lora(params, 8, 16.0, 2);

    Rng rng(3);
    example.ids.push_back(model::kBosId);
    while (example.ids.size() < seq_len)
      example.ids.push_back(static_cast<model::TokenId>(
          model::kReservedTokens + rng.below(vocab.size() - model::kReservedTokens)));
    example.target_mask.assign(example.ids.size(), true);
    example.target_mask[0] = false;
  }

  static model::Vocab build_vocab() {
    std::vector<std::string> texts;
    Rng rng(4);
    for (size_t i = 0; i < 64; ++i) {
      std::string t;
      for (size_t w = 0; w < 24; ++w) t += "w" + std::to_string(rng.below(400)) + " ";
      texts.push_back(t);
    }
    return model::Vocab::build_from_texts(texts, 512);
  }
};

void BM_forward(benchmark::State& state) {
  Fixture fx(static_cast<size_t>(state.range(0)), static_cast<size_t>(state.range(1)));
  for (auto _ : state)
    benchmark::DoNotOptimize(model::forward(fx.params, nullptr, fx.example.ids));
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) *
                          static_cast<int64_t>(fx.example.ids.size()));
}
BENCHMARK(BM_forward)->Args({48, 64})->Args({48, 160})->Args({64, 160})->Unit(benchmark::kMillisecond);

void BM_grad_full(benchmark::State& state) {
  Fixture fx(static_cast<size_t>(state.range(0)), static_cast<size_t>(state.range(1)));
  for (auto _ : state)
    benchmark::DoNotOptimize(model::nll_and_grad(fx.params, nullptr, fx.example));
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) *
                          static_cast<int64_t>(fx.example.ids.size()));
}
BENCHMARK(BM_grad_full)->Args({48, 64})->Args({48, 160})->Args({64, 160})->Unit(benchmark::kMillisecond);

void BM_grad_adapter(benchmark::State& state) {
  Fixture fx(static_cast<size_t>(state.range(0)), static_cast<size_t>(state.range(1)));
  for (auto _ : state)
    benchmark::DoNotOptimize(model::nll_and_grad(fx.params, &fx.adapter, fx.example));
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) *
                          static_cast<int64_t>(fx.example.ids.size()));
}
BENCHMARK(BM_grad_adapter)->Args({48, 160})->Args({64, 160})->Unit(benchmark::kMillisecond);

void BM_mlm_grad(benchmark::State& state) {
  Fixture fx(static_cast<size_t>(state.range(0)), static_cast<size_t>(state.range(1)));
  fx.hp.causal = false;
  fx.params = model::init_model(fx.hp, 5);
  for (auto _ : state)
    benchmark::DoNotOptimize(model::mlm_loss_and_grad(fx.params, fx.example.ids, 7));
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) *
                          static_cast<int64_t>(fx.example.ids.size()));
}
BENCHMARK(BM_mlm_grad)->Args({48, 64})->Args({48, 96})->Unit(benchmark::kMillisecond);

void BM_clip(benchmark::State& state) {
  TensorMap g;
  g["a"] = Tensor({64, 64});
  g["b"] = Tensor({512});
  Rng rng(6);
  for (auto& [name, t] : g)
    for (double& x : t.data) x = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(dp::clip(g, 1.0));
}
BENCHMARK(BM_clip);

void BM_noisy_aggregate(benchmark::State& state) {
  TensorMap schema;
  schema["a"] = Tensor({64, 64});
  schema["b"] = Tensor({512});
  std::vector<TensorMap> lot;
  Rng rng(7);
  for (size_t i = 0; i < 8; ++i) {
    TensorMap g = zeros_like(schema);
    for (auto& [name, t] : g)
      for (double& x : t.data) x = rng.normal() * 0.01;
    lot.push_back(dp::clip(g, 1.0));
  }
  uint64_t seed = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(dp::noisy_aggregate(lot, 1.0, 1.1, 8.0, seed++, schema));
}
BENCHMARK(BM_noisy_aggregate);

void BM_annotate(benchmark::State& state) {
  corpus::CorpusProfile profile;
  profile.n_notes = 64;
  profile.seed = 8;
  const std::vector<corpus::Note> notes = corpus::synth_corpus(profile);
  size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(corpus::annotate(notes[i]));
    i = (i + 1) % notes.size();
  }
}
BENCHMARK(BM_annotate);

void BM_accountant_step(benchmark::State& state) {
  accountant::PrivacyLedger ledger;
  for (auto _ : state) ledger.record_step(0.01, 1.1);
  benchmark::DoNotOptimize(ledger.rdp.data());
}
BENCHMARK(BM_accountant_step);

void BM_eps_from_ledger(benchmark::State& state) {
  accountant::PrivacyLedger ledger;
  for (size_t i = 0; i < 2000; ++i) ledger.record_step(0.01, 1.1);
  for (auto _ : state) benchmark::DoNotOptimize(accountant::eps_from_ledger(ledger, 1e-5));
}
BENCHMARK(BM_eps_from_ledger);

}  // namespace

BENCHMARK_MAIN();
