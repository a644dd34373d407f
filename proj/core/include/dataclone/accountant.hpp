#pragma once

#include <cstdint>
#include <vector>

#include "dataclone/jsonl.hpp"

namespace dataclone::accountant {

// Renyi DP of one step of the subsampled Gaussian mechanism at integer order
// alpha, computed in log space:
//   (1/(alpha-1)) * ln( sum_{k=0..alpha} C(alpha,k) (1-q)^(alpha-k) q^k
//                       * exp(k(k-1)/(2 sigma^2)) ).
// At q = 1 this collapses to alpha / (2 sigma^2). sigma = 0 yields +inf.
double rdp_subsampled_gaussian(double q, double sigma, int64_t alpha);

inline constexpr int64_t kMinOrder = 2;
inline constexpr int64_t kMaxOrder = 64;

// Accumulates per-order RDP across training steps. Orders are the integers
// [kMinOrder, kMaxOrder].
struct PrivacyLedger {
  std::vector<int64_t> orders;
  std::vector<double> rdp;
  size_t steps = 0;

  PrivacyLedger();
  void record_step(double q, double sigma);
};

struct EpsResult {
  double eps = 0.0;
  int64_t best_order = 0;
};

// (eps, delta) conversion: eps = min_alpha rdp(alpha) + ln(1/delta)/(alpha-1).
EpsResult eps_from_ledger(const PrivacyLedger& ledger, double delta);

// Smallest noise multiplier in [0.3, 100] whose final epsilon lands in
// [target*(1-1e-3), target] after `steps` steps at rate q.
double calibrate_sigma(double target_eps, double delta, double q, size_t steps);

Json ledger_to_json(const PrivacyLedger& ledger);
PrivacyLedger ledger_from_json(const Json& j);

}  // namespace dataclone::accountant
