#include <cmath>
#include <vector>

#include "dataclone/errors.hpp"
#include "dataclone/model.hpp"
#include "dataclone/rng.hpp"
#include "model_internal.hpp"

namespace dataclone::model {

LossGrad mlm_loss_and_grad(const ModelParams& params, const std::vector<TokenId>& ids,
                           uint64_t mask_seed, bool want_grad) {
  if (params.hparams.causal)
    fail(ErrorCode::InvalidArgument, "masked-token loss needs a non-causal encoder");
  detail::validate_ids(params.hparams, ids);
  if (ids.size() < 2) fail(ErrorCode::TooShort, "sequence too short to mask");

  // Draw order is fixed: one selection roll per position, then the
  // corruption rolls for selected positions in order. Same seed, same mask.
  Rng rng(Rng::derive(mask_seed, "mlm-mask"));
  std::vector<size_t> selected;
  for (size_t i = 0; i < ids.size(); ++i)
    if (rng.uniform01() < 0.15) selected.push_back(i);
  if (selected.empty()) selected.push_back(static_cast<size_t>(rng.below(ids.size())));

  std::vector<TokenId> corrupted = ids;
  std::vector<TokenId> targets;
  targets.reserve(selected.size());
  for (size_t pos : selected) {
    targets.push_back(ids[pos]);
    const double u = rng.uniform01();
    if (u < 0.8)
      corrupted[pos] = kMaskId;
    else if (u < 0.9)
      corrupted[pos] = static_cast<TokenId>(rng.below(params.hparams.vocab_size));
  }

  LossGrad out;
  out.n_targets = selected.size();
  detail::Cache cache;
  const Tensor hidden =
      detail::forward_hidden(params, nullptr, corrupted, want_grad ? &cache : nullptr);
  const Tensor& head = detail::named(params, "head.w");
  if (!want_grad) {
    out.loss = detail::head_cross_entropy(hidden, head, nullptr, selected, targets, nullptr,
                                          nullptr, nullptr);
    return out;
  }
  out.grad = zeros_like(params.tensors);
  Tensor d_hidden({ids.size(), params.hparams.d_model});
  out.loss = detail::head_cross_entropy(hidden, head, nullptr, selected, targets, &d_hidden,
                                        &out.grad.at("head.w"), nullptr);
  detail::backward_from_hidden(params, nullptr, cache, d_hidden, out.grad);
  if (!std::isfinite(out.loss) || !all_finite(out.grad))
    fail(ErrorCode::NonFiniteGradient, "loss or gradient is not finite");
  return out;
}

}  // namespace dataclone::model
