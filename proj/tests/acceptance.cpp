// Acceptance harness: checks the end-to-end guarantees of the library and the
// pipeline on a real configuration. Prints one PASS/FAIL line per criterion
// and exits non-zero when any of them fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "dataclone/accountant.hpp"
#include "dataclone/config.hpp"
#include "dataclone/dp.hpp"
#include "dataclone/errors.hpp"
#include "dataclone/jsonl.hpp"
#include "dataclone/mia.hpp"
#include "dataclone/model.hpp"
#include "dataclone/pipeline.hpp"
#include "dataclone/rng.hpp"
#include "dataclone/tensor.hpp"
#include "dataclone/vocab.hpp"

namespace fs = std::filesystem;
using namespace dataclone;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------
// shared fixtures

model::Vocab small_vocab() {
  return model::Vocab::build_from_texts(
      {"the chest film shows clear lungs without focal consolidation",
       "patient reports mild fever and takes aspirin 81 mg daily",
       "no acute distress noted on exam today"},
      model::kReservedTokens + 64);
}

model::TokenExample small_example(const model::Vocab& vocab, const std::string& text) {
  model::TokenExample ex;
  ex.ids.push_back(model::kBosId);
  for (model::TokenId id : vocab.encode(text)) ex.ids.push_back(id);
  ex.ids.push_back(model::kEosId);
  ex.target_mask.assign(ex.ids.size(), true);
  ex.target_mask[0] = false;
  return ex;
}

// Central finite differences against the analytic gradient, spread over every
// trainable tensor. Tolerance: relative error <= 1e-3 with denominator
// max(1e-8, |fd|, |analytic|).
struct FdStats {
  size_t coords = 0;
  double max_rel = 0.0;
  bool ok = true;
  std::string worst;
};

FdStats fd_check(model::ModelParams& params, const TensorMap& analytic,
                 const std::function<double()>& loss, size_t min_coords) {
  FdStats st;
  const double h = 1e-4;
  const size_t per_tensor = (min_coords + analytic.size() - 1) / analytic.size() + 1;
  for (const auto& [name, g] : analytic) {
    Tensor& t = params.tensors.at(name);
    const size_t probes = std::min(per_tensor, t.size());
    for (size_t k = 0; k < probes; ++k) {
      const size_t idx = (k * t.size()) / probes;
      const double saved = t.data[idx];
      t.data[idx] = saved + h;
      const double up = loss();
      t.data[idx] = saved - h;
      const double down = loss();
      t.data[idx] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double an = g.data[idx];
      const double rel = std::abs(fd - an) / std::max({1e-8, std::abs(fd), std::abs(an)});
      if (rel > st.max_rel) {
        st.max_rel = rel;
        st.worst = name + "[" + std::to_string(idx) + "]";
      }
      if (rel > 1e-3) st.ok = false;
      ++st.coords;
    }
  }
  if (st.coords < min_coords) st.ok = false;
  return st;
}

// ---------------------------------------------------------------------------
// criterion 1: analytic gradients

Outcome check_gradients() {
  const model::Vocab vocab = small_vocab();
  model::HParams hp;
  hp.d_model = 16;
  hp.n_layers = 2;
  hp.n_heads = 2;
  hp.context_len = 32;
  hp.vocab_size = vocab.size();

  char buf[256];

  hp.causal = true;
  model::ModelParams causal = model::init_model(hp, 8101);
  const model::TokenExample ex =
      small_example(vocab, "patient reports mild fever and takes aspirin daily");
  const TensorMap causal_grad = model::nll_and_grad(causal, nullptr, ex).grad;
  const FdStats causal_st = fd_check(
      causal, causal_grad, [&] { return model::nll_and_grad(causal, nullptr, ex, false).loss; },
      200);
  if (!causal_st.ok) {
    std::snprintf(buf, sizeof(buf), "causal gradient mismatch at %s (rel %.3g over %zu coords)",
                  causal_st.worst.c_str(), causal_st.max_rel, causal_st.coords);
    return {false, buf};
  }

  hp.causal = false;
  model::ModelParams encoder = model::init_model(hp, 8102);
  const std::vector<model::TokenId> ids = small_example(vocab,
      "the chest film shows clear lungs without focal consolidation").ids;
  const uint64_t mask_seed = 11;
  const TensorMap mlm_grad = model::mlm_loss_and_grad(encoder, ids, mask_seed).grad;
  const FdStats mlm_st = fd_check(
      encoder, mlm_grad,
      [&] { return model::mlm_loss_and_grad(encoder, ids, mask_seed, false).loss; }, 200);
  if (!mlm_st.ok) {
    std::snprintf(buf, sizeof(buf), "masked-LM gradient mismatch at %s (rel %.3g over %zu coords)",
                  mlm_st.worst.c_str(), mlm_st.max_rel, mlm_st.coords);
    return {false, buf};
  }

  std::snprintf(buf, sizeof(buf),
                "causal max rel err %.2e (%zu coords), masked-LM max rel err %.2e (%zu coords)",
                causal_st.max_rel, causal_st.coords, mlm_st.max_rel, mlm_st.coords);
  return {true, buf};
}

// ---------------------------------------------------------------------------
// criterion 2: clipping, noise scale, vanilla degenerate case

Outcome check_dp_mechanics() {
  char buf[256];

  // every clipped gradient lands inside the ball
  {
    const double clip_norm = 1.0;
    TensorMap schema;
    schema["w"] = Tensor({40, 25});
    schema["b"] = Tensor({57});
    Rng rng(4242);
    for (size_t trial = 0; trial < 10000; ++trial) {
      TensorMap g = zeros_like(schema);
      const double scale = std::exp(rng.uniform01() * 9.2 - 4.6);  // norms across decades
      for (auto& [name, t] : g)
        for (double& x : t.data) x = rng.normal() * scale;
      const double before = joint_l2_norm(g);
      const TensorMap clipped = dp::clip(g, clip_norm);
      const double after = joint_l2_norm(clipped);
      if (after > clip_norm * (1.0 + 1e-9)) {
        std::snprintf(buf, sizeof(buf), "clip overflow: %.17g -> %.17g", before, after);
        return {false, buf};
      }
    }
  }

  // noise std matches sigma * C / expected_lot within 2%
  {
    const double sigma = 1.3;
    const double clip_norm = 1.0;
    const double lot = 7.0;
    TensorMap schema;
    schema["n"] = Tensor({1000});
    double sum = 0.0;
    double sum_sq = 0.0;
    size_t n = 0;
    for (uint64_t seed = 0; seed < 100; ++seed) {
      const TensorMap out = dp::noisy_aggregate({}, clip_norm, sigma, lot, seed, schema);
      for (double x : out.at("n").data) {
        sum += x;
        sum_sq += x * x;
        ++n;
      }
    }
    const double mean = sum / static_cast<double>(n);
    const double std_dev = std::sqrt(sum_sq / static_cast<double>(n) - mean * mean);
    const double expected = sigma * clip_norm / lot;
    if (std::abs(std_dev / expected - 1.0) > 0.02) {
      std::snprintf(buf, sizeof(buf), "noise std %.6g, expected %.6g over %zu draws", std_dev,
                    expected, n);
      return {false, buf};
    }
  }

  // (clip = inf, sigma = 0, q = 1) is bitwise vanilla SGD
  {
    const model::Vocab vocab = small_vocab();
    model::HParams hp;
    hp.d_model = 16;
    hp.n_layers = 1;
    hp.n_heads = 2;
    hp.context_len = 32;
    hp.vocab_size = vocab.size();
    model::ModelParams params = model::init_model(hp, 8201);
    const std::vector<model::TokenExample> examples = {
        small_example(vocab, "patient reports mild fever"),
        small_example(vocab, "no acute distress noted"),
        small_example(vocab, "takes aspirin 81 mg daily"),
        small_example(vocab, "clear lungs on exam today")};

    model::LoraAdapter via_dp = model::init_lora(params, 2, 4.0, 8202);
    model::LoraAdapter vanilla = via_dp;
    const double lr = 0.05;
    const size_t steps = 5;

    dp::PrivacySpec spec;
    spec.clip_norm = std::numeric_limits<double>::infinity();
    spec.noise_multiplier = 0.0;
    spec.sample_rate = 1.0;
    spec.steps = steps;
    model::ModelParams params_copy = params;
    model::LoraAdapter* adapter = &via_dp;
    dp::dp_train(params_copy, adapter, examples, dp::resolve_spec(spec), lr, 8203);

    for (size_t step = 0; step < steps; ++step) {
      TensorMap sum = zeros_like(vanilla.tensors);
      for (const model::TokenExample& ex : examples)
        axpy_into(sum, model::nll_and_grad(params, &vanilla, ex).grad, 1.0);
      for (auto& [name, t] : sum) t.vec() /= static_cast<double>(examples.size());
      for (auto& [name, t] : vanilla.tensors) t.vec() -= lr * sum.at(name).vec();
    }

    for (const auto& [name, t] : via_dp.tensors) {
      const Tensor& other = vanilla.tensors.at(name);
      if (std::memcmp(t.data.data(), other.data.data(), t.size() * sizeof(double)) != 0) {
        return {false, "DP path with (inf, 0, 1) diverged bitwise from plain SGD at " + name};
      }
    }
  }

  return {true, "10k clip trials bounded, noise std within 2%, degenerate case bitwise equal"};
}

// ---------------------------------------------------------------------------
// criterion 3: accountant against independent oracles

Outcome check_accountant() {
  char buf[256];

  const double exact = accountant::rdp_subsampled_gaussian(1.0, 1.0, 4);
  if (exact != 2.0) {
    std::snprintf(buf, sizeof(buf), "rdp(q=1, sigma=1, alpha=4) = %.17g, want 2", exact);
    return {false, buf};
  }

  // single full-batch step: closed-form minimization over integer orders
  const double delta = 1e-5;
  accountant::PrivacyLedger ledger;
  ledger.record_step(1.0, 1.0);
  const accountant::EpsResult got = accountant::eps_from_ledger(ledger, delta);
  double best = std::numeric_limits<double>::infinity();
  for (int64_t alpha = accountant::kMinOrder; alpha <= accountant::kMaxOrder; ++alpha) {
    const double eps = static_cast<double>(alpha) / 2.0 +
                       std::log(1.0 / delta) / static_cast<double>(alpha - 1);
    best = std::min(best, eps);
  }
  if (std::abs(got.eps - best) > 1e-9 || std::abs(got.eps - 5.302585) > 0.01) {
    std::snprintf(buf, sizeof(buf), "single-step eps %.9f, oracle %.9f", got.eps, best);
    return {false, buf};
  }

  // calibration round trip within 0.1%
  for (const double target : {2.0, 4.0, 8.0}) {
    const double q = 0.01;
    const size_t steps = 2000;
    const double sigma = accountant::calibrate_sigma(target, delta, q, steps);
    accountant::PrivacyLedger check;
    for (size_t i = 0; i < steps; ++i) check.record_step(q, sigma);
    const double achieved = accountant::eps_from_ledger(check, delta).eps;
    if (achieved > target || achieved < target * (1.0 - 1e-3)) {
      std::snprintf(buf, sizeof(buf), "target eps %.1f calibrated to sigma %.4f -> eps %.6f",
                    target, sigma, achieved);
      return {false, buf};
    }
  }

  std::snprintf(buf, sizeof(buf), "single-step eps %.6f matches the oracle, calibration within 0.1%%",
                got.eps);
  return {true, buf};
}

// ---------------------------------------------------------------------------
// full pipeline runs backing criteria 4-7

struct FullRun {
  bool attempted = false;
  bool ok = false;
  std::string error;
  fs::path dir;
  double pipeline_seconds = 0.0;  // all stages except the audit
  double audit_seconds = 0.0;
  double total_seconds = 0.0;
};

FullRun run_pipeline(const config::Config& cfg, const fs::path& dir) {
  FullRun run;
  run.attempted = true;
  run.dir = dir;
  fs::remove_all(dir);
  try {
    pipeline::Pipeline pipe(cfg, dir);
    for (pipeline::Stage stage : pipeline::kStages) {
      const auto start = Clock::now();
      pipe.run_stage(stage);
      const double elapsed = seconds_since(start);
      run.total_seconds += elapsed;
      if (stage == pipeline::Stage::Audit)
        run.audit_seconds += elapsed;
      else
        run.pipeline_seconds += elapsed;
      std::fprintf(stderr, "  [stage %s: %.1fs]\n", pipeline::to_string(stage).c_str(), elapsed);
    }
    run.ok = true;
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  return run;
}

double grid_mean(const Json& f1, const std::string& lane, std::string& err) {
  static const std::vector<std::string> kTasks = {"ner_cxr", "ner_discharge", "ner_progress"};
  if (!f1.at("grid").contains(lane)) {
    err = "grid row " + lane + " missing";
    return 0.0;
  }
  double sum = 0.0;
  for (const std::string& task : kTasks) {
    if (!f1.at("grid").at(lane).contains(task)) {
      err = "grid cell " + lane + "/" + task + " missing";
      return 0.0;
    }
    sum += f1.at("grid").at(lane).at(task).get<double>();
  }
  return sum / 3.0;
}

Outcome check_f1_ordering(const config::Config& cfg, const FullRun& run) {
  if (!run.ok) return {false, "pipeline run failed: " + run.error};
  char buf[512];

  const uint64_t n_notes = cfg.get_u64("corpus.n_notes");
  if (n_notes < 2000) {
    std::snprintf(buf, sizeof(buf), "corpus has %llu notes, need at least 2000",
                  static_cast<unsigned long long>(n_notes));
    return {false, buf};
  }
  const Json ledger = Json::parse(read_file(run.dir / "model" / "ledger_clone_eps4.json"));
  const size_t dp_steps = ledger.at("steps").get<size_t>();
  if (dp_steps < 2000) {
    std::snprintf(buf, sizeof(buf), "DP training ran %zu steps, need at least 2000", dp_steps);
    return {false, buf};
  }
  if (run.pipeline_seconds > 1800.0) {
    std::snprintf(buf, sizeof(buf), "pipeline took %.0fs, budget is 1800s", run.pipeline_seconds);
    return {false, buf};
  }

  const Json f1 = Json::parse(read_file(run.dir / "tag" / "f1.json"));
  std::string err;
  const double f1_source = grid_mean(f1, "source", err);
  const double f1_eps4 = grid_mean(f1, "clone_eps4", err);
  const double f1_none = grid_mean(f1, "no_adapt", err);
  if (!err.empty()) return {false, err};

  const bool ordered = f1_source >= f1_eps4 && f1_eps4 >= f1_none + 0.01;
  std::snprintf(buf, sizeof(buf),
                "mean F1 source %.4f >= clone(eps=4) %.4f >= no-adapt %.4f + 0.01 "
                "(%llu notes, %zu DP steps, %.0fs)",
                f1_source, f1_eps4, f1_none, static_cast<unsigned long long>(n_notes), dp_steps,
                run.pipeline_seconds);
  return {ordered, buf};
}

// first and last value of a step,ppl curve
bool read_curve_ends(const fs::path& path, double& first, double& last, size_t& points) {
  if (!fs::exists(path)) return false;
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);  // header
  points = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const size_t comma = line.find(',');
    if (comma == std::string::npos) return false;
    last = std::strtod(line.c_str() + comma + 1, nullptr);
    if (points == 0) first = last;
    ++points;
  }
  return points >= 1;
}

Outcome check_perplexity(const FullRun& run) {
  if (!run.ok) return {false, "pipeline run failed: " + run.error};
  char buf[512];

  double clone_first = 0.0, clone_last = 0.0;
  double babble_first = 0.0, babble_last = 0.0;
  size_t clone_points = 0, babble_points = 0;
  if (!read_curve_ends(run.dir / "adapt" / "ppl_clone_eps4.csv", clone_first, clone_last,
                       clone_points) ||
      !read_curve_ends(run.dir / "adapt" / "ppl_babble.csv", babble_first, babble_last,
                       babble_points))
    return {false, "perplexity curves missing or malformed"};
  if (clone_points < 2 || babble_points < 2)
    return {false, "perplexity curves have too few points to compare"};

  const bool clone_drops = clone_last < clone_first;
  const double babble_drop = (babble_first - babble_last) / babble_first;
  const bool babble_flat = babble_drop < 0.01;  // higher is also fine

  std::snprintf(buf, sizeof(buf),
                "DP-clone adaptation: held-out ppl %.2f -> %.2f; babble control: %.2f -> %.2f "
                "(%.2f%% drop, must stay under 1%%)",
                clone_first, clone_last, babble_first, babble_last, babble_drop * 100.0);
  return {clone_drops && babble_flat, buf};
}

Outcome check_membership(const FullRun& run) {
  char buf[512];

  // AUC agrees with the O(n^2) definition on every input up to 100 scores
  Rng rng(8601);
  for (size_t trial = 0; trial < 50; ++trial) {
    const size_t n_pos = 1 + static_cast<size_t>(rng.below(50));
    const size_t n_neg = 1 + static_cast<size_t>(rng.below(50));
    std::vector<double> pos(n_pos);
    std::vector<double> neg(n_neg);
    // quantized scores force ties through both code paths
    for (double& x : pos) x = std::floor(rng.uniform01() * 8.0);
    for (double& x : neg) x = std::floor(rng.uniform01() * 8.0);
    double wins = 0.0;
    for (double p : pos)
      for (double q : neg) {
        if (p > q) wins += 1.0;
        else if (p == q) wins += 0.5;
      }
    const double brute = wins / static_cast<double>(n_pos * n_neg);
    const double fast = mia::mann_whitney_auc(pos, neg);
    if (std::abs(fast - brute) > 1e-12) {
      std::snprintf(buf, sizeof(buf), "AUC %.17g disagrees with brute force %.17g (%zu/%zu)",
                    fast, brute, n_pos, n_neg);
      return {false, buf};
    }
  }

  if (!run.ok) return {false, "pipeline run failed: " + run.error};
  if (run.audit_seconds > 600.0) {
    std::snprintf(buf, sizeof(buf), "audit stage took %.0fs, budget is 600s", run.audit_seconds);
    return {false, buf};
  }

  const Json eps4 = Json::parse(read_file(run.dir / "audit" / "mia_eps4.json"));
  const Json overfit = Json::parse(read_file(run.dir / "audit" / "mia_overfit.json"));
  const double dp_auc = eps4.at("auc").get<double>();
  const double of_auc = overfit.at("auc").get<double>();
  const size_t epochs = overfit.at("epochs").get<size_t>();
  const size_t train_examples = overfit.at("train_examples").get<size_t>();

  const bool dp_near_chance = dp_auc >= 0.45 && dp_auc <= 0.60;
  const bool overfit_leaks = of_auc > 0.60 && epochs >= 500 && train_examples >= 50;

  std::snprintf(buf, sizeof(buf),
                "AUC exact on 50 brute-force trials; DP audit AUC %.4f in [0.45, 0.60]; "
                "overfit control (%zu epochs on %zu examples) AUC %.4f > 0.60 (audit %.0fs)",
                dp_auc, epochs, train_examples, of_auc, run.audit_seconds);
  return {dp_near_chance && overfit_leaks, buf};
}

Outcome check_reproducibility(const FullRun& first, const FullRun& second) {
  if (!first.ok) return {false, "first pipeline run failed: " + first.error};
  if (!second.ok) return {false, "second pipeline run failed: " + second.error};
  char buf[512];

  if (second.total_seconds > 3600.0) {
    std::snprintf(buf, sizeof(buf), "second run took %.0fs, budget is 3600s",
                  second.total_seconds);
    return {false, buf};
  }

  const std::string md_a = read_file(first.dir / "report.md");
  const std::string md_b = read_file(second.dir / "report.md");
  const std::string js_a = read_file(first.dir / "report.json");
  const std::string js_b = read_file(second.dir / "report.json");
  if (md_a != md_b) return {false, "report.md differs between identical runs"};
  if (js_a != js_b) return {false, "report.json differs between identical runs"};

  std::snprintf(buf, sizeof(buf),
                "two identical-config runs agree byte for byte (%zu + %zu bytes, %.0fs + %.0fs)",
                md_a.size(), js_a.size(), first.total_seconds, second.total_seconds);
  return {true, buf};
}

}  // namespace

int main(int argc, char** argv) {
  std::string config_path;
  std::string work_dir;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) {
      config_path = argv[++i];
    } else if (arg == "--work" && i + 1 < argc) {
      work_dir = argv[++i];
    } else {
      std::fprintf(stderr, "usage: %s --config <path> --work <dir>\n", argv[0]);
      return 2;
    }
  }
  if (config_path.empty() || work_dir.empty()) {
    std::fprintf(stderr, "usage: %s --config <path> --work <dir>\n", argv[0]);
    return 2;
  }

  config::Config cfg;
  try {
    cfg = config::Config::load(config_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "cannot load %s: %s\n", config_path.c_str(), e.what());
    return 2;
  }
  const fs::path work(work_dir);
  fs::create_directories(work);

  std::printf("acceptance run: config %s, work dir %s\n", config_path.c_str(), work_dir.c_str());

  struct Line {
    int id;
    std::string label;
    Outcome outcome;
    double seconds;
  };
  std::vector<Line> lines;
  const auto run_criterion = [&](int id, const std::string& label,
                                 const std::function<Outcome()>& fn) {
    const auto start = Clock::now();
    Outcome outcome;
    try {
      outcome = fn();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double elapsed = seconds_since(start);
    lines.push_back({id, label, outcome, elapsed});
    std::printf("criterion %d %-4s %s: %s [%.1fs]\n", id, outcome.pass ? "PASS" : "FAIL",
                label.c_str(), outcome.detail.c_str(), elapsed);
    std::fflush(stdout);
  };

  run_criterion(1, "analytic gradients match finite differences", check_gradients);
  run_criterion(2, "DP-SGD mechanics", check_dp_mechanics);
  run_criterion(3, "privacy accountant", check_accountant);

  std::fprintf(stderr, "running the full pipeline (first pass)...\n");
  const FullRun run_a = run_pipeline(cfg, work / "run_a");

  run_criterion(4, "downstream F1 ordering", [&] { return check_f1_ordering(cfg, run_a); });
  run_criterion(5, "held-out perplexity movement", [&] { return check_perplexity(run_a); });
  run_criterion(6, "membership inference audit", [&] { return check_membership(run_a); });

  std::fprintf(stderr, "running the full pipeline (second pass)...\n");
  const FullRun run_b = run_pipeline(cfg, work / "run_b");
  run_criterion(7, "byte-identical reports across runs",
                [&] { return check_reproducibility(run_a, run_b); });

  size_t passed = 0;
  for (const Line& line : lines)
    if (line.outcome.pass) ++passed;
  std::printf("%zu/%zu criteria passed\n", passed, lines.size());
  return passed == lines.size() ? 0 : 1;
}
