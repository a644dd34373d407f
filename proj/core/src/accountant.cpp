#include "dataclone/accountant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dataclone/errors.hpp"

namespace dataclone::accountant {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_binom(int64_t n, int64_t k) {
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

double log_sum_exp(const std::vector<double>& xs) {
  const double mx = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(mx)) return mx;
  double sum = 0.0;
  for (double x : xs) sum += std::exp(x - mx);
  return mx + std::log(sum);
}

}  // namespace

double rdp_subsampled_gaussian(double q, double sigma, int64_t alpha) {
  if (!(q > 0.0) || q > 1.0) fail(ErrorCode::InvalidRate, "sampling rate must be in (0, 1]");
  if (sigma < 0.0) fail(ErrorCode::InvalidArgument, "noise multiplier must be non-negative");
  if (alpha < 2) fail(ErrorCode::InvalidArgument, "RDP order must be at least 2");
  if (sigma == 0.0) return kInf;
  const double s2 = sigma * sigma;
  if (q == 1.0) return static_cast<double>(alpha) / (2.0 * s2);

  std::vector<double> terms;
  terms.reserve(static_cast<size_t>(alpha) + 1);
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  for (int64_t k = 0; k <= alpha; ++k) {
    const double kd = static_cast<double>(k);
    terms.push_back(log_binom(alpha, k) + static_cast<double>(alpha - k) * log_1mq + kd * log_q +
                    kd * (kd - 1.0) / (2.0 * s2));
  }
  return log_sum_exp(terms) / (static_cast<double>(alpha) - 1.0);
}

PrivacyLedger::PrivacyLedger() {
  for (int64_t a = kMinOrder; a <= kMaxOrder; ++a) orders.push_back(a);
  rdp.assign(orders.size(), 0.0);
}

void PrivacyLedger::record_step(double q, double sigma) {
  for (size_t i = 0; i < orders.size(); ++i) rdp[i] += rdp_subsampled_gaussian(q, sigma, orders[i]);
  steps += 1;
}

EpsResult eps_from_ledger(const PrivacyLedger& ledger, double delta) {
  if (!(delta > 0.0) || delta >= 1.0) fail(ErrorCode::InvalidArgument, "delta must be in (0, 1)");
  if (ledger.steps == 0) return {0.0, 0};
  const double log_inv_delta = std::log(1.0 / delta);
  EpsResult best{kInf, 0};
  for (size_t i = 0; i < ledger.orders.size(); ++i) {
    const double eps = ledger.rdp[i] + log_inv_delta / (static_cast<double>(ledger.orders[i]) - 1.0);
    if (eps < best.eps) best = {eps, ledger.orders[i]};
  }
  if (best.best_order == 0) best.best_order = ledger.orders.back();
  return best;
}

namespace {

double eps_after(double sigma, double q, size_t steps, double delta) {
  PrivacyLedger ledger;
  for (size_t i = 0; i < ledger.orders.size(); ++i)
    ledger.rdp[i] =
        static_cast<double>(steps) * rdp_subsampled_gaussian(q, sigma, ledger.orders[i]);
  ledger.steps = steps;
  return eps_from_ledger(ledger, delta).eps;
}

}  // namespace

double calibrate_sigma(double target_eps, double delta, double q, size_t steps) {
  if (!(target_eps > 0.0)) fail(ErrorCode::InvalidArgument, "target epsilon must be positive");
  if (steps == 0) fail(ErrorCode::InvalidArgument, "step count must be positive");
  constexpr double kLo = 0.3;
  constexpr double kHi = 100.0;
  const double band_lo = target_eps * (1.0 - 1e-3);
  if (eps_after(kLo, q, steps, delta) < band_lo)
    fail(ErrorCode::CalibrationOutOfRange, "target epsilon too loose for sigma >= 0.3");
  if (eps_after(kHi, q, steps, delta) > target_eps)
    fail(ErrorCode::CalibrationOutOfRange, "target epsilon too tight for sigma <= 100");

  double lo = kLo;
  double hi = kHi;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (eps_after(mid, q, steps, delta) > target_eps)
      lo = mid;
    else
      hi = mid;
  }
  const double eps = eps_after(hi, q, steps, delta);
  if (eps < band_lo || eps > target_eps)
    fail(ErrorCode::CalibrationOutOfRange, "bisection failed to land in the target band");
  return hi;
}

namespace {

Json encode_double(double x) {
  if (std::isfinite(x)) return x;
  return x > 0 ? "inf" : "-inf";
}

double decode_double(const Json& j) {
  if (j.is_string()) return j.get<std::string>() == "-inf" ? -kInf : kInf;
  return j.get<double>();
}

}  // namespace

Json ledger_to_json(const PrivacyLedger& ledger) {
  Json rdp = Json::array();
  for (double x : ledger.rdp) rdp.push_back(encode_double(x));
  return Json{{"orders", ledger.orders}, {"rdp", rdp}, {"steps", ledger.steps}};
}

PrivacyLedger ledger_from_json(const Json& j) {
  PrivacyLedger ledger;
  try {
    ledger.orders = j.at("orders").get<std::vector<int64_t>>();
    ledger.rdp.clear();
    for (const Json& x : j.at("rdp")) ledger.rdp.push_back(decode_double(x));
    ledger.steps = j.at("steps").get<size_t>();
  } catch (const Json::exception& e) {
    fail(ErrorCode::ParseError, std::string("bad ledger: ") + e.what());
  }
  if (ledger.orders.size() != ledger.rdp.size())
    fail(ErrorCode::ParseError, "ledger orders and rdp lengths differ");
  return ledger;
}

}  // namespace dataclone::accountant
