#include <cmath>
#include <string>

#include "dataclone/errors.hpp"
#include "dataclone/model.hpp"
#include "dataclone/rng.hpp"

namespace dataclone::model {

LoraAdapter init_lora(const ModelParams& params, size_t rank, double alpha, uint64_t seed) {
  if (rank == 0 || alpha <= 0.0)
    fail(ErrorCode::InvalidHParams, "adapter rank and alpha must be positive");
  LoraAdapter adapter;
  adapter.rank = rank;
  adapter.alpha = alpha;
  Rng rng(Rng::derive(seed, "lora-init"));
  for (size_t l = 0; l < params.hparams.n_layers; ++l)
    for (const char* which : {"wq", "wv"}) {
      const std::string target = "layers." + std::to_string(l) + ".attn." + which;
      const Tensor& base = params.tensors.at(target);
      Tensor a({rank, base.cols()});
      const double scale = 1.0 / std::sqrt(static_cast<double>(base.cols()));
      for (double& x : a.data) x = rng.normal() * scale;
      adapter.targets.push_back(target);
      adapter.tensors[target + ".lora_a"] = std::move(a);
      adapter.tensors[target + ".lora_b"] = Tensor({base.rows(), rank});
    }
  return adapter;
}

ModelParams merge_lora(const ModelParams& params, const LoraAdapter& adapter) {
  ModelParams merged = params;
  for (const std::string& target : adapter.targets) {
    auto base = merged.tensors.find(target);
    auto ia = adapter.tensors.find(target + ".lora_a");
    auto ib = adapter.tensors.find(target + ".lora_b");
    if (base == merged.tensors.end() || ia == adapter.tensors.end() ||
        ib == adapter.tensors.end())
      fail(ErrorCode::AdapterMismatch, "adapter target " + target + " not found");
    const Tensor& a = ia->second;
    const Tensor& b = ib->second;
    if (a.rows() != adapter.rank || b.cols() != adapter.rank || a.cols() != base->second.cols() ||
        b.rows() != base->second.rows())
      fail(ErrorCode::AdapterMismatch, "adapter shapes incompatible with " + target);
    base->second.mat().noalias() += adapter.scale() * (b.mat() * a.mat());
  }
  return merged;
}

}  // namespace dataclone::model
