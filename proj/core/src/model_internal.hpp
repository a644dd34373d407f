#pragma once

#include <vector>

#include "dataclone/model.hpp"

namespace dataclone::model::detail {

struct LayerCache {
  Tensor x_in;                      // [n,d] layer input
  Tensor ln1_xhat;                  // [n,d]
  std::vector<double> ln1_inv_std;  // [n]
  Tensor q, k, v;                   // [n,d] post-projection
  Tensor lora_uq, lora_uv;          // [n,r] x_hat * A^T, empty without adapter
  std::vector<Tensor> probs;        // per head, [n,n] attention weights
  Tensor attn_concat;               // [n,d] joined head outputs, pre-wo
  Tensor x_mid;                     // [n,d] residual after attention
  Tensor ln2_xhat;
  std::vector<double> ln2_inv_std;
  Tensor mlp_z;  // [n,dff] pre-activation
  Tensor mlp_h;  // [n,dff] gelu(z)
};

struct Cache {
  std::vector<TokenId> ids;
  std::vector<LayerCache> layers;
  Tensor x_final;  // [n,d] pre-final-LN
  Tensor lnf_xhat;
  std::vector<double> lnf_inv_std;
};

// Trunk forward; returns hidden states [n,d] after the final layernorm.
// cache may be null for inference-only calls.
Tensor forward_hidden(const ModelParams& params, const LoraAdapter* adapter,
                      const std::vector<TokenId>& ids, Cache* cache);

// Backprop from d_hidden (gradient at the post-final-LN states) down to the
// trainable set: adapter tensors when an adapter is attached, otherwise all
// base tensors present at trunk level. Head gradients are the caller's job.
void backward_from_hidden(const ModelParams& params, const LoraAdapter* adapter,
                          const Cache& cache, const Tensor& d_hidden, TensorMap& grads);

// Mean cross-entropy through a linear head (logits = h*W^T [+ b]) over the
// selected rows. Fills d_hidden [n,d] and, when non-null, dW/db.
double head_cross_entropy(const Tensor& hidden, const Tensor& w, const Tensor* b,
                          const std::vector<size_t>& rows,
                          const std::vector<TokenId>& targets, Tensor* d_hidden,
                          Tensor* d_w, Tensor* d_b);

void validate_ids(const HParams& hparams, const std::vector<TokenId>& ids);

// Required-tensor lookup; a missing name means a broken or foreign checkpoint.
const Tensor& named(const ModelParams& params, const std::string& name);

double gelu(double x);
double gelu_grad(double x);

}  // namespace dataclone::model::detail
