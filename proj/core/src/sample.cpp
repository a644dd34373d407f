#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "dataclone/errors.hpp"
#include "dataclone/model.hpp"
#include "dataclone/rng.hpp"
#include "model_internal.hpp"

namespace dataclone::model {

namespace {

using RowVec = Eigen::RowVectorXd;

struct DecodeState {
  std::vector<Tensor> k_cache;  // per layer [context_len, d]
  std::vector<Tensor> v_cache;
  size_t len = 0;
};

RowVec ln_row(const RowVec& x, const Tensor& g, const Tensor& b) {
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  const double inv_std = 1.0 / std::sqrt(var + 1e-5);
  RowVec out(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j)
    out[j] = g.data[static_cast<size_t>(j)] * (x[j] - mean) * inv_std +
             b.data[static_cast<size_t>(j)];
  return out;
}

// Advances the incremental decoder by one token and returns its logits row.
RowVec forward_step(const ModelParams& params, const LoraAdapter* adapter, DecodeState& state,
                    TokenId token) {
  const HParams& hp = params.hparams;
  const size_t d = hp.d_model;
  const size_t dh = hp.head_dim();
  const size_t pos = state.len;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  RowVec x(static_cast<Eigen::Index>(d));
  {
    const Tensor& tok_emb = detail::named(params, "tok_emb");
    const Tensor& pos_emb = detail::named(params, "pos_emb");
    for (size_t j = 0; j < d; ++j)
      x[static_cast<Eigen::Index>(j)] = tok_emb.at(token, j) + pos_emb.at(pos, j);
  }

  for (size_t l = 0; l < hp.n_layers; ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    const RowVec a = ln_row(x, detail::named(params, pre + "ln1.g"),
                            detail::named(params, pre + "ln1.b"));

    auto project = [&](const char* which, bool adapted) {
      const std::string target = pre + "attn.w" + which;
      RowVec out = a * detail::named(params, target).mat().transpose();
      if (adapter != nullptr && adapted) {
        auto ia = adapter->tensors.find(target + ".lora_a");
        auto ib = adapter->tensors.find(target + ".lora_b");
        if (ia != adapter->tensors.end())
          out.noalias() += adapter->scale() *
                           ((a * ia->second.mat().transpose()) * ib->second.mat().transpose());
      }
      out += detail::named(params, pre + std::string("attn.b") + which).vec().transpose();
      return out;
    };
    const RowVec q = project("q", true);
    const RowVec k = project("k", false);
    const RowVec v = project("v", true);

    Tensor& kc = state.k_cache[l];
    Tensor& vc = state.v_cache[l];
    for (size_t j = 0; j < d; ++j) {
      kc.at(pos, j) = k[static_cast<Eigen::Index>(j)];
      vc.at(pos, j) = v[static_cast<Eigen::Index>(j)];
    }

    RowVec att(static_cast<Eigen::Index>(d));
    const auto rows = static_cast<Eigen::Index>(pos + 1);
    for (size_t h = 0; h < hp.n_heads; ++h) {
      const auto off = static_cast<Eigen::Index>(h * dh);
      const auto width = static_cast<Eigen::Index>(dh);
      Eigen::VectorXd scores =
          att_scale * (kc.mat().topRows(rows).middleCols(off, width) *
                       q.middleCols(off, width).transpose());
      const double mx = scores.maxCoeff();
      Eigen::VectorXd p = (scores.array() - mx).exp();
      p /= p.sum();
      att.middleCols(off, width).noalias() =
          p.transpose() * vc.mat().topRows(rows).middleCols(off, width);
    }

    RowVec attn_out = att * detail::named(params, pre + "attn.wo").mat().transpose();
    attn_out += detail::named(params, pre + "attn.bo").vec().transpose();
    const RowVec x_mid = x + attn_out;

    const RowVec a2 = ln_row(x_mid, detail::named(params, pre + "ln2.g"),
                             detail::named(params, pre + "ln2.b"));
    RowVec z = a2 * detail::named(params, pre + "mlp.w1").mat().transpose();
    z += detail::named(params, pre + "mlp.b1").vec().transpose();
    RowVec hcol(z.size());
    for (Eigen::Index j = 0; j < z.size(); ++j) hcol[j] = detail::gelu(z[j]);
    RowVec mlp_out = hcol * detail::named(params, pre + "mlp.w2").mat().transpose();
    mlp_out += detail::named(params, pre + "mlp.b2").vec().transpose();
    x = x_mid + mlp_out;
  }

  state.len = pos + 1;
  const RowVec hidden =
      ln_row(x, detail::named(params, "ln_f.g"), detail::named(params, "ln_f.b"));
  return hidden * detail::named(params, "head.w").mat().transpose();
}

TokenId select_token(const RowVec& logits, const Decoding& decoding, Rng& rng) {
  const auto v = logits.size();
  if (decoding.top_k == 1) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v; ++i)
      if (logits[i] > logits[best]) best = i;
    return static_cast<TokenId>(best);
  }

  std::vector<Eigen::Index> order(static_cast<size_t>(v));
  std::iota(order.begin(), order.end(), 0);
  size_t kept = static_cast<size_t>(v);
  if (decoding.top_k > 0 && decoding.top_k < kept) {
    kept = decoding.top_k;
    std::partial_sort(order.begin(), order.begin() + static_cast<ptrdiff_t>(kept), order.end(),
                      [&](Eigen::Index lhs, Eigen::Index rhs) {
                        if (logits[lhs] != logits[rhs]) return logits[lhs] > logits[rhs];
                        return lhs < rhs;
                      });
  }

  double mx = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < kept; ++i) mx = std::max(mx, logits[order[i]]);
  std::vector<double> weights(kept);
  double total = 0.0;
  for (size_t i = 0; i < kept; ++i) {
    weights[i] = std::exp((logits[order[i]] - mx) / decoding.temperature);
    total += weights[i];
  }
  const double u = rng.uniform01() * total;
  double cum = 0.0;
  for (size_t i = 0; i < kept; ++i) {
    cum += weights[i];
    if (u < cum) return static_cast<TokenId>(order[i]);
  }
  return static_cast<TokenId>(order[kept - 1]);
}

}  // namespace

std::vector<TokenId> sample(const ModelParams& params, const LoraAdapter* adapter,
                            const std::vector<TokenId>& prompt_ids, const Decoding& decoding) {
  const HParams& hp = params.hparams;
  detail::validate_ids(hp, prompt_ids);
  if (prompt_ids.size() >= hp.context_len)
    fail(ErrorCode::ContextOverflow, "prompt fills the whole context window");
  if (decoding.temperature <= 0.0 && decoding.top_k != 1)
    fail(ErrorCode::InvalidArgument, "temperature must be positive unless decoding is greedy");

  DecodeState state;
  state.k_cache.assign(hp.n_layers, Tensor({hp.context_len, hp.d_model}));
  state.v_cache.assign(hp.n_layers, Tensor({hp.context_len, hp.d_model}));

  RowVec logits;
  for (TokenId id : prompt_ids) logits = forward_step(params, adapter, state, id);

  Rng rng(Rng::derive(decoding.seed, "sample"));
  std::vector<TokenId> generated;
  while (generated.size() < decoding.max_new) {
    const TokenId next = select_token(logits, decoding, rng);
    if (next == kEosId) break;
    generated.push_back(next);
    if (state.len >= hp.context_len) break;
    logits = forward_step(params, adapter, state, next);
  }
  return generated;
}

}  // namespace dataclone::model
