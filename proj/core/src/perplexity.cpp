#include <cmath>

#include "dataclone/errors.hpp"
#include "dataclone/eval.hpp"
#include "dataclone/optim.hpp"
#include "dataclone/parallel.hpp"
#include "dataclone/rng.hpp"

namespace dataclone::eval {

double perplexity(const model::ModelParams& params, const model::LoraAdapter* adapter,
                  const std::vector<model::TokenExample>& examples) {
  if (examples.empty()) fail(ErrorCode::EmptyCorpus, "no examples to score");
  std::vector<double> nll(examples.size());
  std::vector<size_t> counts(examples.size());
  parallel_for(examples.size(), [&](size_t i) {
    const model::LossGrad lg = model::nll_and_grad(params, adapter, examples[i], false);
    nll[i] = lg.loss * static_cast<double>(lg.n_targets);
    counts[i] = lg.n_targets;
  });
  double total_nll = 0.0;
  size_t total = 0;
  for (size_t i = 0; i < examples.size(); ++i) {
    total_nll += nll[i];
    total += counts[i];
  }
  if (total == 0) fail(ErrorCode::EmptyCorpus, "no target tokens to score");
  return std::exp(total_nll / static_cast<double>(total));
}

double mlm_perplexity(const model::ModelParams& params,
                      const std::vector<std::vector<model::TokenId>>& sequences,
                      uint64_t mask_seed) {
  if (sequences.empty()) fail(ErrorCode::EmptyCorpus, "no sequences to score");
  std::vector<double> nll(sequences.size());
  std::vector<size_t> counts(sequences.size());
  parallel_for(sequences.size(), [&](size_t i) {
    const model::LossGrad lg =
        model::mlm_loss_and_grad(params, sequences[i], Rng::derive(mask_seed, "mlm-ppl", i), false);
    nll[i] = lg.loss * static_cast<double>(lg.n_targets);
    counts[i] = lg.n_targets;
  });
  double total_nll = 0.0;
  size_t total = 0;
  for (size_t i = 0; i < sequences.size(); ++i) {
    total_nll += nll[i];
    total += counts[i];
  }
  if (total == 0) fail(ErrorCode::EmptyCorpus, "no masked tokens to score");
  return std::exp(total_nll / static_cast<double>(total));
}

MlmAdaptResult mlm_adapt(model::ModelParams& params,
                         const std::vector<std::vector<model::TokenId>>& corpus,
                         const std::vector<std::vector<model::TokenId>>& eval_corpus,
                         const MlmAdaptConfig& config) {
  if (params.hparams.causal)
    fail(ErrorCode::InvalidArgument, "mlm_adapt requires a non-causal encoder");
  if (corpus.empty()) fail(ErrorCode::EmptyCorpus, "no sequences to train on");
  if (eval_corpus.empty()) fail(ErrorCode::EmptyCorpus, "no evaluation sequences");
  if (config.batch_size == 0 || config.eval_every == 0)
    fail(ErrorCode::InvalidArgument, "batch size and eval cadence must be positive");

  // One fixed mask seed for every evaluation, so the curve scores the same
  // masked positions throughout.
  const uint64_t eval_seed = Rng::derive(config.seed, "mlm-adapt-eval");
  optim::Adam adam(params.tensors, {.lr = config.lr});
  Rng pick_rng(Rng::derive(config.seed, "mlm-adapt-pick"));
  MlmAdaptResult result;
  result.ppl_curve.emplace_back(0, mlm_perplexity(params, eval_corpus, eval_seed));

  for (size_t step = 0; step < config.steps; ++step) {
    std::vector<size_t> batch(config.batch_size);
    for (size_t& idx : batch) idx = static_cast<size_t>(pick_rng.below(corpus.size()));

    std::vector<TensorMap> grads(batch.size());
    std::vector<double> losses(batch.size());
    parallel_for(batch.size(), [&](size_t i) {
      const model::LossGrad lg =
          model::mlm_loss_and_grad(params, corpus[batch[i]],
                                   Rng::derive(config.seed, "mlm-adapt-mask",
                                               step * config.batch_size + i));
      grads[i] = lg.grad;
      losses[i] = lg.loss;
    });

    TensorMap mean = zeros_like(params.tensors);
    double mean_loss = 0.0;
    for (size_t i = 0; i < batch.size(); ++i) {
      axpy_into(mean, grads[i], 1.0 / static_cast<double>(batch.size()));
      mean_loss += losses[i] / static_cast<double>(batch.size());
    }
    if (!std::isfinite(mean_loss))
      fail(ErrorCode::Diverged, "non-finite loss at step " + std::to_string(step + 1));
    adam.step(params.tensors, mean);
    if (!all_finite(params.tensors))
      fail(ErrorCode::Diverged, "non-finite parameters at step " + std::to_string(step + 1));
    if ((step + 1) % config.eval_every == 0 || step + 1 == config.steps)
      result.ppl_curve.emplace_back(step + 1, mlm_perplexity(params, eval_corpus, eval_seed));
  }
  return result;
}

}  // namespace dataclone::eval
