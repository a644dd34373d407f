#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dataclone/tensor.hpp"
#include "dataclone/vocab.hpp"

namespace dataclone::model {

struct HParams {
  size_t d_model = 128;
  size_t n_layers = 2;
  size_t n_heads = 4;
  size_t context_len = 256;
  size_t vocab_size = 512;
  bool causal = true;

  size_t d_ff() const { return 4 * d_model; }
  size_t head_dim() const { return d_model / n_heads; }
  bool operator==(const HParams&) const = default;
};

// Named-tensor parameter collection. Tensor names:
//   tok_emb [V,d], pos_emb [ctx,d],
//   layers.<i>.ln1.{g,b}, layers.<i>.attn.{wq,wk,wv,wo} [d,d] (+ b*),
//   layers.<i>.ln2.{g,b}, layers.<i>.mlp.w1 [dff,d], .b1, .w2 [d,dff], .b2,
//   ln_f.{g,b}, head.w [V,d].
// Extra task heads (e.g. tag_head.w/b) may be added to the map and are
// trained with everything else when no adapter is attached.
struct ModelParams {
  HParams hparams;
  TensorMap tensors;
};

// Low-rank adapter on the attention query/value projections. Effective
// update per target W is (alpha/rank) * B * A with B zero-initialized, so a
// fresh adapter leaves the forward pass bitwise unchanged.
struct LoraAdapter {
  size_t rank = 8;
  double alpha = 16.0;
  std::vector<std::string> targets;  // base tensor names, e.g. layers.0.attn.wq
  TensorMap tensors;                 // <target>.lora_a [r,d_in], <target>.lora_b [d_out,r]

  double scale() const { return alpha / static_cast<double>(rank); }
};

ModelParams init_model(const HParams& hparams, uint64_t seed);

// Adapter over every layer's attention wq and wv. A ~ Gaussian/sqrt(d_in),
// B = 0.
LoraAdapter init_lora(const ModelParams& params, size_t rank, double alpha, uint64_t seed);

// Folds the adapter into the base weights: W += (alpha/r) * B * A.
ModelParams merge_lora(const ModelParams& params, const LoraAdapter& adapter);

// Full forward pass; returns logits [n, vocab_size].
Tensor forward(const ModelParams& params, const LoraAdapter* adapter,
               const std::vector<TokenId>& ids);

struct LossGrad {
  double loss = 0.0;
  TensorMap grad;       // trainable set: adapter tensors when an adapter is
                        // attached, otherwise every base tensor
  size_t n_targets = 0;
};

// Mean next-token NLL over masked target positions with exact analytic
// gradients. example.target_mask[i] marks token i as a scored target;
// position 0 can never be one.
LossGrad nll_and_grad(const ModelParams& params, const LoraAdapter* adapter,
                      const TokenExample& example, bool want_grad = true);

// Masked-language-model loss for a non-causal encoder: 15% of positions are
// selected under mask_seed (80% MASK / 10% random / 10% kept), loss is the
// mean NLL of the original tokens at selected positions.
LossGrad mlm_loss_and_grad(const ModelParams& params, const std::vector<TokenId>& ids,
                           uint64_t mask_seed, bool want_grad = true);

// Per-token tag scores: logits [n, n_labels] from tag_head.{w,b}, which must
// be present in params.tensors. loss_positions selects scored tokens.
LossGrad tagger_loss_and_grad(const ModelParams& params, const std::vector<TokenId>& ids,
                              const std::vector<uint32_t>& labels,
                              const std::vector<bool>& loss_positions, bool want_grad = true);
Tensor tagger_logits(const ModelParams& params, const std::vector<TokenId>& ids);

struct Decoding {
  size_t max_new = 64;
  double temperature = 1.0;
  size_t top_k = 0;  // 0 = full distribution; 1 = greedy (lowest-id tie-break)
  uint64_t seed = 0;
};

// Autoregressive sampling with an incremental KV cache; stops at EOS or
// max_new. Deterministic per seed; top_k = 1 ignores the seed entirely.
std::vector<TokenId> sample(const ModelParams& params, const LoraAdapter* adapter,
                            const std::vector<TokenId>& prompt_ids, const Decoding& decoding);

// Summed log-likelihood of the target positions of an example (no gradient).
// Used by the membership-inference audit.
double sequence_loglik(const ModelParams& params, const LoraAdapter* adapter,
                       const TokenExample& example);

// Checkpoint format: magic "CLONE1", u32 version, length-prefixed JSON meta
// header, then length-prefixed named tensor records (f32 little-endian).
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);
void save_adapter(const std::filesystem::path& path, const LoraAdapter& adapter,
                  uint64_t base_checksum);
std::pair<LoraAdapter, uint64_t> load_adapter(const std::filesystem::path& path);

// FNV-1a checksum over a parameter set's f32 serialized tensor bytes;
// adapters store it to pin their base model.
uint64_t params_checksum(const ModelParams& params);

}  // namespace dataclone::model
