#include "dataclone/model.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "dataclone/errors.hpp"
#include "dataclone/rng.hpp"
#include "model_internal.hpp"

namespace dataclone::model {

namespace detail {

namespace {

constexpr double kLnEps = 1e-5;

void ln_forward(const Tensor& x, const Tensor& g, const Tensor& b, Tensor& out, Tensor& xhat,
                std::vector<double>& inv_std) {
  const size_t n = x.rows();
  const size_t d = x.cols();
  out = Tensor({n, d});
  xhat = Tensor({n, d});
  inv_std.assign(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (size_t j = 0; j < d; ++j) mean += x.at(i, j);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (size_t j = 0; j < d; ++j) {
      const double c = x.at(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + kLnEps);
    inv_std[i] = is;
    for (size_t j = 0; j < d; ++j) {
      const double xh = (x.at(i, j) - mean) * is;
      xhat.at(i, j) = xh;
      out.at(i, j) = g.data[j] * xh + b.data[j];
    }
  }
}

void add_bias_rows(Tensor& y, const Tensor& b) {
  const size_t n = y.rows();
  const size_t d = y.cols();
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < d; ++j) y.at(i, j) += b.data[j];
}

void softmax_rows(Tensor& s) {
  const size_t n = s.rows();
  const size_t m = s.cols();
  for (size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < m; ++j) mx = std::max(mx, s.at(i, j));
    double sum = 0.0;
    for (size_t j = 0; j < m; ++j) {
      const double e = std::exp(s.at(i, j) - mx);
      s.at(i, j) = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (size_t j = 0; j < m; ++j) s.at(i, j) *= inv;
  }
}

}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
  const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)) + x * phi;
}

void validate_ids(const HParams& hparams, const std::vector<TokenId>& ids) {
  if (ids.empty()) fail(ErrorCode::InvalidArgument, "empty token sequence");
  if (ids.size() > hparams.context_len)
    fail(ErrorCode::ContextOverflow, "sequence length " + std::to_string(ids.size()) +
                                         " exceeds context_len " +
                                         std::to_string(hparams.context_len));
  for (TokenId id : ids)
    if (id >= hparams.vocab_size)
      fail(ErrorCode::InvalidTokenId, "token id " + std::to_string(id) + " outside vocab of " +
                                          std::to_string(hparams.vocab_size));
}

const Tensor& named(const ModelParams& params, const std::string& name) {
  auto it = params.tensors.find(name);
  if (it == params.tensors.end()) fail(ErrorCode::BadCheckpoint, "missing tensor " + name);
  return it->second;
}

Tensor forward_hidden(const ModelParams& params, const LoraAdapter* adapter,
                      const std::vector<TokenId>& ids, Cache* cache) {
  const HParams& hp = params.hparams;
  validate_ids(hp, ids);
  const size_t n = ids.size();
  const size_t d = hp.d_model;
  const size_t heads = hp.n_heads;
  const size_t dh = hp.head_dim();
  const size_t dff = hp.d_ff();
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const double lora_scale = adapter != nullptr ? adapter->scale() : 0.0;

  const Tensor& tok_emb = named(params, "tok_emb");
  const Tensor& pos_emb = named(params, "pos_emb");

  if (cache != nullptr) {
    cache->ids = ids;
    cache->layers.clear();
    cache->layers.reserve(hp.n_layers);
  }

  Tensor x({n, d});
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < d; ++j)
      x.at(i, j) = tok_emb.at(ids[i], j) + pos_emb.at(i, j);

  for (size_t l = 0; l < hp.n_layers; ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    LayerCache lc;
    lc.x_in = x;

    Tensor a;
    ln_forward(x, named(params, pre + "ln1.g"), named(params, pre + "ln1.b"), a, lc.ln1_xhat,
               lc.ln1_inv_std);

    auto project = [&](const char* which, Tensor& out, Tensor* lora_u) {
      const Tensor& w = named(params, pre + "attn.w" + which);
      out = Tensor({n, d});
      out.mat().noalias() = a.mat() * w.mat().transpose();
      if (adapter != nullptr && lora_u != nullptr) {
        const std::string target = pre + "attn.w" + which;
        auto ia = adapter->tensors.find(target + ".lora_a");
        auto ib = adapter->tensors.find(target + ".lora_b");
        if (ia != adapter->tensors.end()) {
          *lora_u = Tensor({n, adapter->rank});
          lora_u->mat().noalias() = a.mat() * ia->second.mat().transpose();
          out.mat().noalias() += lora_scale * (lora_u->mat() * ib->second.mat().transpose());
        }
      }
      add_bias_rows(out, named(params, pre + std::string("attn.b") + which));
    };
    project("q", lc.q, &lc.lora_uq);
    project("k", lc.k, nullptr);
    project("v", lc.v, &lc.lora_uv);

    lc.probs.assign(heads, Tensor());
    Tensor att({n, d});
    for (size_t h = 0; h < heads; ++h) {
      const auto off = static_cast<Eigen::Index>(h * dh);
      const auto w = static_cast<Eigen::Index>(dh);
      Tensor s({n, n});
      s.mat().noalias() =
          att_scale * (lc.q.mat().middleCols(off, w) * lc.k.mat().middleCols(off, w).transpose());
      if (hp.causal)
        for (size_t i = 0; i < n; ++i)
          for (size_t j = i + 1; j < n; ++j)
            s.at(i, j) = -std::numeric_limits<double>::infinity();
      softmax_rows(s);
      att.mat().middleCols(off, w).noalias() = s.mat() * lc.v.mat().middleCols(off, w);
      lc.probs[h] = std::move(s);
    }
    lc.attn_concat = att;

    Tensor attn_out({n, d});
    attn_out.mat().noalias() = att.mat() * named(params, pre + "attn.wo").mat().transpose();
    add_bias_rows(attn_out, named(params, pre + "attn.bo"));
    lc.x_mid = Tensor({n, d});
    lc.x_mid.mat() = x.mat() + attn_out.mat();

    Tensor a2;
    ln_forward(lc.x_mid, named(params, pre + "ln2.g"), named(params, pre + "ln2.b"), a2,
               lc.ln2_xhat, lc.ln2_inv_std);

    lc.mlp_z = Tensor({n, dff});
    lc.mlp_z.mat().noalias() = a2.mat() * named(params, pre + "mlp.w1").mat().transpose();
    add_bias_rows(lc.mlp_z, named(params, pre + "mlp.b1"));
    lc.mlp_h = Tensor({n, dff});
    for (size_t i = 0; i < n * dff; ++i) lc.mlp_h.data[i] = gelu(lc.mlp_z.data[i]);

    Tensor mlp_out({n, d});
    mlp_out.mat().noalias() = lc.mlp_h.mat() * named(params, pre + "mlp.w2").mat().transpose();
    add_bias_rows(mlp_out, named(params, pre + "mlp.b2"));

    x.mat() = lc.x_mid.mat() + mlp_out.mat();
    if (cache != nullptr) cache->layers.push_back(std::move(lc));
  }

  Tensor hidden, lnf_xhat;
  std::vector<double> lnf_inv_std;
  ln_forward(x, named(params, "ln_f.g"), named(params, "ln_f.b"), hidden, lnf_xhat, lnf_inv_std);
  if (cache != nullptr) {
    cache->x_final = std::move(x);
    cache->lnf_xhat = std::move(lnf_xhat);
    cache->lnf_inv_std = std::move(lnf_inv_std);
  }
  return hidden;
}

double head_cross_entropy(const Tensor& hidden, const Tensor& w, const Tensor* b,
                          const std::vector<size_t>& rows, const std::vector<TokenId>& targets,
                          Tensor* d_hidden, Tensor* d_w, Tensor* d_b) {
  const size_t d = hidden.cols();
  const size_t v = w.rows();
  const double inv_m = 1.0 / static_cast<double>(rows.size());
  double loss = 0.0;
  Eigen::VectorXd z(static_cast<Eigen::Index>(v));
  for (size_t r = 0; r < rows.size(); ++r) {
    const size_t row = rows[r];
    const auto h = hidden.mat().row(static_cast<Eigen::Index>(row));
    z.noalias() = w.mat() * h.transpose();
    if (b != nullptr) z += b->vec();
    const double mx = z.maxCoeff();
    const double lse = mx + std::log((z.array() - mx).exp().sum());
    loss += lse - z[static_cast<Eigen::Index>(targets[r])];
    if (d_hidden != nullptr) {
      Eigen::VectorXd p = (z.array() - lse).exp();
      p[static_cast<Eigen::Index>(targets[r])] -= 1.0;
      p *= inv_m;
      d_hidden->mat().row(static_cast<Eigen::Index>(row)).noalias() += p.transpose() * w.mat();
      if (d_w != nullptr) d_w->mat().noalias() += p * h;
      if (d_b != nullptr) d_b->vec() += p;
    }
  }
  (void)d;
  return loss * inv_m;
}

}  // namespace detail

ModelParams init_model(const HParams& hparams, uint64_t seed) {
  if (hparams.d_model == 0 || hparams.n_heads == 0 || hparams.n_layers == 0 ||
      hparams.context_len == 0 || hparams.vocab_size == 0)
    fail(ErrorCode::InvalidHParams, "model dimensions must be positive");
  if (hparams.d_model % hparams.n_heads != 0)
    fail(ErrorCode::InvalidHParams, "d_model " + std::to_string(hparams.d_model) +
                                        " not divisible by n_heads " +
                                        std::to_string(hparams.n_heads));

  Rng rng(Rng::derive(seed, "model-init"));
  const double scale = 1.0 / std::sqrt(static_cast<double>(hparams.d_model));
  auto gaussian = [&](std::vector<size_t> shape, double s) {
    Tensor t(std::move(shape));
    for (double& x : t.data) x = rng.normal() * s;
    return t;
  };
  auto constant = [](std::vector<size_t> shape, double value) {
    return Tensor(std::move(shape), value);
  };

  ModelParams params;
  params.hparams = hparams;
  const size_t d = hparams.d_model;
  const size_t dff = hparams.d_ff();
  params.tensors["tok_emb"] = gaussian({hparams.vocab_size, d}, scale);
  params.tensors["pos_emb"] = gaussian({hparams.context_len, d}, scale);
  for (size_t l = 0; l < hparams.n_layers; ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    params.tensors[pre + "ln1.g"] = constant({d}, 1.0);
    params.tensors[pre + "ln1.b"] = constant({d}, 0.0);
    for (const char* which : {"q", "k", "v", "o"}) {
      params.tensors[pre + "attn.w" + std::string(which)] = gaussian({d, d}, scale);
      params.tensors[pre + "attn.b" + std::string(which)] = constant({d}, 0.0);
    }
    params.tensors[pre + "ln2.g"] = constant({d}, 1.0);
    params.tensors[pre + "ln2.b"] = constant({d}, 0.0);
    params.tensors[pre + "mlp.w1"] = gaussian({dff, d}, scale);
    params.tensors[pre + "mlp.b1"] = constant({dff}, 0.0);
    params.tensors[pre + "mlp.w2"] = gaussian({d, dff}, scale);
    params.tensors[pre + "mlp.b2"] = constant({d}, 0.0);
  }
  params.tensors["ln_f.g"] = constant({d}, 1.0);
  params.tensors["ln_f.b"] = constant({d}, 0.0);
  // A small head keeps the untrained model's next-token distribution close
  // to uniform, so the starting loss sits near ln(vocab_size).
  params.tensors["head.w"] = gaussian({hparams.vocab_size, d}, 0.1 * scale);
  return params;
}

Tensor forward(const ModelParams& params, const LoraAdapter* adapter,
               const std::vector<TokenId>& ids) {
  const Tensor hidden = detail::forward_hidden(params, adapter, ids, nullptr);
  const Tensor& head = detail::named(params, "head.w");
  Tensor logits({ids.size(), params.hparams.vocab_size});
  logits.mat().noalias() = hidden.mat() * head.mat().transpose();
  return logits;
}

}  // namespace dataclone::model
