#include <Eigen/Core>

#include <cmath>
#include <string>

#include "dataclone/errors.hpp"
#include "dataclone/model.hpp"
#include "model_internal.hpp"

namespace dataclone::model {

namespace detail {

namespace {

// Rebuilds a layernorm output from its cached normalized values.
Tensor ln_output(const Tensor& xhat, const Tensor& g, const Tensor& b) {
  Tensor out({xhat.rows(), xhat.cols()});
  for (size_t i = 0; i < xhat.rows(); ++i)
    for (size_t j = 0; j < xhat.cols(); ++j) out.at(i, j) = g.data[j] * xhat.at(i, j) + b.data[j];
  return out;
}

// dx for y = g*xhat + b with xhat = (x - mean) * inv_std. Accumulates dg/db
// when provided.
Tensor ln_backward(const Tensor& dy, const Tensor& xhat, const std::vector<double>& inv_std,
                   const Tensor& g, Tensor* dg, Tensor* db) {
  const size_t n = dy.rows();
  const size_t d = dy.cols();
  Tensor dx({n, d});
  for (size_t i = 0; i < n; ++i) {
    double mean_dxhat = 0.0;
    double mean_dxhat_xhat = 0.0;
    for (size_t j = 0; j < d; ++j) {
      const double dxh = dy.at(i, j) * g.data[j];
      mean_dxhat += dxh;
      mean_dxhat_xhat += dxh * xhat.at(i, j);
      if (dg != nullptr) dg->data[j] += dy.at(i, j) * xhat.at(i, j);
      if (db != nullptr) db->data[j] += dy.at(i, j);
    }
    mean_dxhat /= static_cast<double>(d);
    mean_dxhat_xhat /= static_cast<double>(d);
    for (size_t j = 0; j < d; ++j) {
      const double dxh = dy.at(i, j) * g.data[j];
      dx.at(i, j) = inv_std[i] * (dxh - mean_dxhat - xhat.at(i, j) * mean_dxhat_xhat);
    }
  }
  return dx;
}

void add_col_sums(Tensor& db, const Tensor& dy) {
  for (size_t i = 0; i < dy.rows(); ++i)
    for (size_t j = 0; j < dy.cols(); ++j) db.data[j] += dy.at(i, j);
}

}  // namespace

void backward_from_hidden(const ModelParams& params, const LoraAdapter* adapter,
                          const Cache& cache, const Tensor& d_hidden, TensorMap& grads) {
  const HParams& hp = params.hparams;
  const size_t n = cache.ids.size();
  const size_t d = hp.d_model;
  const size_t heads = hp.n_heads;
  const size_t dh = hp.head_dim();
  const bool full = adapter == nullptr;
  const double lora_scale = adapter != nullptr ? adapter->scale() : 0.0;

  auto want = [&](const std::string& name) -> Tensor* {
    auto it = grads.find(name);
    return it == grads.end() ? nullptr : &it->second;
  };

  Tensor dx = ln_backward(d_hidden, cache.lnf_xhat, cache.lnf_inv_std, named(params, "ln_f.g"),
                          full ? want("ln_f.g") : nullptr, full ? want("ln_f.b") : nullptr);

  for (size_t li = hp.n_layers; li-- > 0;) {
    const std::string pre = "layers." + std::to_string(li) + ".";
    const LayerCache& lc = cache.layers[li];

    // x_out = x_mid + mlp(ln2(x_mid)); dx is d(x_out)
    Tensor d_mlp_h({n, hp.d_ff()});
    d_mlp_h.mat().noalias() = dx.mat() * named(params, pre + "mlp.w2").mat();
    if (full) {
      want(pre + "mlp.w2")->mat().noalias() += dx.mat().transpose() * lc.mlp_h.mat();
      add_col_sums(*want(pre + "mlp.b2"), dx);
    }
    Tensor d_z({n, hp.d_ff()});
    for (size_t i = 0; i < d_z.size(); ++i)
      d_z.data[i] = d_mlp_h.data[i] * gelu_grad(lc.mlp_z.data[i]);

    Tensor d_a2({n, d});
    d_a2.mat().noalias() = d_z.mat() * named(params, pre + "mlp.w1").mat();
    if (full) {
      const Tensor a2 =
          ln_output(lc.ln2_xhat, named(params, pre + "ln2.g"), named(params, pre + "ln2.b"));
      want(pre + "mlp.w1")->mat().noalias() += d_z.mat().transpose() * a2.mat();
      add_col_sums(*want(pre + "mlp.b1"), d_z);
    }

    Tensor d_x_mid =
        ln_backward(d_a2, lc.ln2_xhat, lc.ln2_inv_std, named(params, pre + "ln2.g"),
                    full ? want(pre + "ln2.g") : nullptr, full ? want(pre + "ln2.b") : nullptr);
    d_x_mid.mat() += dx.mat();

    // x_mid = x_in + wo(attention); d_x_mid feeds both paths
    Tensor d_att({n, d});
    d_att.mat().noalias() = d_x_mid.mat() * named(params, pre + "attn.wo").mat();
    if (full) {
      want(pre + "attn.wo")->mat().noalias() += d_x_mid.mat().transpose() * lc.attn_concat.mat();
      add_col_sums(*want(pre + "attn.bo"), d_x_mid);
    }

    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor dq({n, d});
    Tensor dk({n, d});
    Tensor dv({n, d});
    for (size_t h = 0; h < heads; ++h) {
      const auto off = static_cast<Eigen::Index>(h * dh);
      const auto w = static_cast<Eigen::Index>(dh);
      const auto d_att_h = d_att.mat().middleCols(off, w);
      const auto& p = lc.probs[h];

      dv.mat().middleCols(off, w).noalias() = p.mat().transpose() * d_att_h;
      Tensor dp({n, n});
      dp.mat().noalias() = d_att_h * lc.v.mat().middleCols(off, w).transpose();
      Tensor ds({n, n});
      for (size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (size_t j = 0; j < n; ++j) dot += dp.at(i, j) * p.at(i, j);
        for (size_t j = 0; j < n; ++j) ds.at(i, j) = p.at(i, j) * (dp.at(i, j) - dot);
      }
      dq.mat().middleCols(off, w).noalias() =
          att_scale * (ds.mat() * lc.k.mat().middleCols(off, w));
      dk.mat().middleCols(off, w).noalias() =
          att_scale * (ds.mat().transpose() * lc.q.mat().middleCols(off, w));
    }

    const Tensor a =
        ln_output(lc.ln1_xhat, named(params, pre + "ln1.g"), named(params, pre + "ln1.b"));
    Tensor d_a({n, d});
    d_a.mat().setZero();
    auto back_project = [&](const char* which, const Tensor& dout, const Tensor* lora_u) {
      const std::string target = pre + "attn.w" + which;
      d_a.mat().noalias() += dout.mat() * named(params, target).mat();
      if (full) {
        want(target)->mat().noalias() += dout.mat().transpose() * a.mat();
        add_col_sums(*want(pre + std::string("attn.b") + which), dout);
      }
      if (adapter != nullptr && lora_u != nullptr && lora_u->size() > 0) {
        const Tensor& la = adapter->tensors.at(target + ".lora_a");
        const Tensor& lb = adapter->tensors.at(target + ".lora_b");
        Tensor du({n, adapter->rank});
        du.mat().noalias() = lora_scale * (dout.mat() * lb.mat());
        if (Tensor* gb = want(target + ".lora_b"))
          gb->mat().noalias() += lora_scale * (dout.mat().transpose() * lora_u->mat());
        if (Tensor* ga = want(target + ".lora_a"))
          ga->mat().noalias() += du.mat().transpose() * a.mat();
        d_a.mat().noalias() += du.mat() * la.mat();
      }
    };
    back_project("q", dq, &lc.lora_uq);
    back_project("k", dk, nullptr);
    back_project("v", dv, &lc.lora_uv);

    Tensor d_x_in =
        ln_backward(d_a, lc.ln1_xhat, lc.ln1_inv_std, named(params, pre + "ln1.g"),
                    full ? want(pre + "ln1.g") : nullptr, full ? want(pre + "ln1.b") : nullptr);
    d_x_in.mat() += d_x_mid.mat();
    dx = std::move(d_x_in);
  }

  if (full) {
    Tensor* d_tok = want("tok_emb");
    Tensor* d_pos = want("pos_emb");
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < d; ++j) {
        if (d_tok != nullptr) d_tok->at(cache.ids[i], j) += dx.at(i, j);
        if (d_pos != nullptr) d_pos->at(i, j) += dx.at(i, j);
      }
  }
}

}  // namespace detail

namespace {

TensorMap init_grads(const ModelParams& params, const LoraAdapter* adapter) {
  return adapter != nullptr ? zeros_like(adapter->tensors) : zeros_like(params.tensors);
}

void check_finite(double loss, const TensorMap& grads) {
  if (!std::isfinite(loss) || !all_finite(grads))
    fail(ErrorCode::NonFiniteGradient, "loss or gradient is not finite");
}

}  // namespace

LossGrad nll_and_grad(const ModelParams& params, const LoraAdapter* adapter,
                      const TokenExample& example, bool want_grad) {
  detail::validate_ids(params.hparams, example.ids);
  if (example.target_mask.size() != example.ids.size())
    fail(ErrorCode::InvalidArgument, "target mask length mismatch");
  std::vector<size_t> rows;
  std::vector<TokenId> targets;
  for (size_t i = 1; i < example.ids.size(); ++i)
    if (example.target_mask[i]) {
      rows.push_back(i - 1);
      targets.push_back(example.ids[i]);
    }
  if (rows.empty()) fail(ErrorCode::EmptyLoss, "no target positions to score");

  LossGrad out;
  out.n_targets = rows.size();
  detail::Cache cache;
  const Tensor hidden =
      detail::forward_hidden(params, adapter, example.ids, want_grad ? &cache : nullptr);
  const Tensor& head = detail::named(params, "head.w");

  if (!want_grad) {
    out.loss = detail::head_cross_entropy(hidden, head, nullptr, rows, targets, nullptr, nullptr,
                                          nullptr);
    if (!std::isfinite(out.loss)) fail(ErrorCode::NonFiniteGradient, "loss is not finite");
    return out;
  }

  out.grad = init_grads(params, adapter);
  Tensor d_hidden({example.ids.size(), params.hparams.d_model});
  Tensor* d_head = adapter == nullptr ? &out.grad.at("head.w") : nullptr;
  out.loss =
      detail::head_cross_entropy(hidden, head, nullptr, rows, targets, &d_hidden, d_head, nullptr);
  detail::backward_from_hidden(params, adapter, cache, d_hidden, out.grad);
  check_finite(out.loss, out.grad);
  return out;
}

LossGrad tagger_loss_and_grad(const ModelParams& params, const std::vector<TokenId>& ids,
                              const std::vector<uint32_t>& labels,
                              const std::vector<bool>& loss_positions, bool want_grad) {
  detail::validate_ids(params.hparams, ids);
  if (labels.size() != ids.size() || loss_positions.size() != ids.size())
    fail(ErrorCode::InvalidArgument, "label sequence length mismatch");
  const Tensor& w = detail::named(params, "tag_head.w");
  const Tensor& b = detail::named(params, "tag_head.b");
  std::vector<size_t> rows;
  std::vector<TokenId> targets;
  for (size_t i = 0; i < ids.size(); ++i)
    if (loss_positions[i]) {
      if (labels[i] >= w.rows()) fail(ErrorCode::InvalidArgument, "tag label out of range");
      rows.push_back(i);
      targets.push_back(labels[i]);
    }
  if (rows.empty()) fail(ErrorCode::EmptyLoss, "no tagged positions to score");

  LossGrad out;
  out.n_targets = rows.size();
  detail::Cache cache;
  const Tensor hidden = detail::forward_hidden(params, nullptr, ids, want_grad ? &cache : nullptr);
  if (!want_grad) {
    out.loss =
        detail::head_cross_entropy(hidden, w, &b, rows, targets, nullptr, nullptr, nullptr);
    return out;
  }
  out.grad = init_grads(params, nullptr);
  Tensor d_hidden({ids.size(), params.hparams.d_model});
  out.loss = detail::head_cross_entropy(hidden, w, &b, rows, targets, &d_hidden,
                                        &out.grad.at("tag_head.w"), &out.grad.at("tag_head.b"));
  detail::backward_from_hidden(params, nullptr, cache, d_hidden, out.grad);
  check_finite(out.loss, out.grad);
  return out;
}

Tensor tagger_logits(const ModelParams& params, const std::vector<TokenId>& ids) {
  const Tensor hidden = detail::forward_hidden(params, nullptr, ids, nullptr);
  const Tensor& w = detail::named(params, "tag_head.w");
  const Tensor& b = detail::named(params, "tag_head.b");
  Tensor logits({ids.size(), w.rows()});
  logits.mat().noalias() = hidden.mat() * w.mat().transpose();
  for (size_t i = 0; i < logits.rows(); ++i)
    for (size_t j = 0; j < logits.cols(); ++j) logits.at(i, j) += b.data[j];
  return logits;
}

double sequence_loglik(const ModelParams& params, const LoraAdapter* adapter,
                       const TokenExample& example) {
  detail::validate_ids(params.hparams, example.ids);
  std::vector<size_t> rows;
  std::vector<TokenId> targets;
  for (size_t i = 1; i < example.ids.size(); ++i)
    if (example.target_mask[i]) {
      rows.push_back(i - 1);
      targets.push_back(example.ids[i]);
    }
  if (rows.empty()) fail(ErrorCode::EmptyLoss, "no target positions to score");
  const Tensor hidden = detail::forward_hidden(params, adapter, example.ids, nullptr);
  const double mean_nll = detail::head_cross_entropy(hidden, detail::named(params, "head.w"),
                                                     nullptr, rows, targets, nullptr, nullptr,
                                                     nullptr);
  return -mean_nll * static_cast<double>(rows.size());
}

}  // namespace dataclone::model
