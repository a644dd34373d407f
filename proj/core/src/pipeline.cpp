#include "dataclone/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>

#include "dataclone/accountant.hpp"
#include "dataclone/corpus.hpp"
#include "dataclone/dp.hpp"
#include "dataclone/errors.hpp"
#include "dataclone/eval.hpp"
#include "dataclone/instruct.hpp"
#include "dataclone/mia.hpp"
#include "dataclone/model.hpp"
#include "dataclone/optim.hpp"
#include "dataclone/parallel.hpp"
#include "dataclone/report.hpp"
#include "dataclone/rng.hpp"
#include "dataclone/tagging.hpp"
#include "dataclone/vocab.hpp"

namespace dataclone::pipeline {

namespace {

namespace fs = std::filesystem;

// Artifact layout, relative to the output directory.
constexpr const char* kCorpusTrain = "corpus/train.jsonl";
constexpr const char* kCorpusHeldout = "corpus/heldout.jsonl";
constexpr const char* kAnnotatedTrain = "annotated/train.jsonl";
constexpr const char* kAnnotatedHeldout = "annotated/heldout.jsonl";
constexpr const char* kTemplates = "instruct/templates.jsonl";
constexpr const char* kPairsTrain = "instruct/pairs_train.jsonl";
constexpr const char* kPairsHeldout = "instruct/pairs_heldout.jsonl";
constexpr const char* kPrompts = "instruct/prompts.jsonl";
constexpr const char* kInstructStats = "instruct/stats.json";
constexpr const char* kVocabFile = "model/vocab.json";
constexpr const char* kUntrained = "model/untrained.ckpt";
constexpr const char* kBase = "model/base.ckpt";
constexpr const char* kCloneStats = "clones/stats.json";
constexpr const char* kTagF1 = "tag/f1.json";
constexpr const char* kMiaEps4 = "audit/mia_eps4.json";
constexpr const char* kMiaOverfit = "audit/mia_overfit.json";
constexpr const char* kReportMd = "report.md";
constexpr const char* kReportJson = "report.json";
constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kLockFile = ".lock";

// Lanes that carry a DP-trained (or DP-free) adapter and a generated clone
// corpus; grid rows 2..5.
const std::vector<std::string> kAdapterLanes = {"clone_inf", "clone_eps2", "clone_eps4",
                                                "clone_eps8"};

double lane_epsilon(const std::string& lane) {
  if (lane == "clone_inf") return std::numeric_limits<double>::infinity();
  if (lane == "clone_eps2") return 2.0;
  if (lane == "clone_eps4") return 4.0;
  if (lane == "clone_eps8") return 8.0;
  fail(ErrorCode::InvalidArgument, "unknown adapter lane " + lane);
}

std::string adapter_path(const std::string& lane) { return "model/adapter_" + lane + ".ckpt"; }
std::string ledger_path(const std::string& lane) { return "model/ledger_" + lane + ".json"; }
std::string losscurve_path(const std::string& lane) { return "model/curve_" + lane + ".csv"; }
std::string clone_path(const std::string& lane) { return "clones/" + lane + ".jsonl"; }
std::string encoder_path(const std::string& lane) { return "adapt/encoder_" + lane + ".ckpt"; }
std::string pplcurve_path(const std::string& lane) { return "adapt/ppl_" + lane + ".csv"; }

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct ArtifactDep {
  std::string path;
  Stage producer;
};

struct StageSpec {
  std::vector<std::string> sections;  // config sections the stage reads
  std::vector<ArtifactDep> inputs;    // upstream artifacts it loads
};

StageSpec stage_spec(Stage stage) {
  switch (stage) {
    case Stage::Synth:
      return {{"corpus"}, {}};
    case Stage::Annotate:
      return {{}, {{kCorpusTrain, Stage::Synth}, {kCorpusHeldout, Stage::Synth}}};
    case Stage::Instruct:
      return {{"instruct"},
              {{kAnnotatedTrain, Stage::Annotate}, {kAnnotatedHeldout, Stage::Annotate}}};
    case Stage::Train:
      return {{"model", "lora", "pretrain", "train", "dp"},
              {{kPairsTrain, Stage::Instruct},
               {kTemplates, Stage::Instruct},
               {kVocabFile, Stage::Instruct}}};
    case Stage::Generate: {
      StageSpec spec{{"generate"},
                     {{kPrompts, Stage::Instruct},
                      {kVocabFile, Stage::Instruct},
                      {kUntrained, Stage::Train},
                      {kBase, Stage::Train}}};
      for (const std::string& lane : kAdapterLanes)
        spec.inputs.push_back({adapter_path(lane), Stage::Train});
      return spec;
    }
    case Stage::Adapt: {
      StageSpec spec{{"encoder", "adapt"},
                     {{kCorpusTrain, Stage::Synth},
                      {kCorpusHeldout, Stage::Synth},
                      {kVocabFile, Stage::Instruct},
                      {clone_path(kBabbleLane), Stage::Generate}}};
      for (const std::string& lane : kAdapterLanes)
        spec.inputs.push_back({clone_path(lane), Stage::Generate});
      return spec;
    }
    case Stage::Tag: {
      StageSpec spec{{"tag"},
                     {{kAnnotatedHeldout, Stage::Annotate}, {kVocabFile, Stage::Instruct}}};
      for (const char* lane : kGridLanes) spec.inputs.push_back({encoder_path(lane), Stage::Adapt});
      return spec;
    }
    case Stage::Audit:
      return {{"audit", "lora"},
              {{kPairsTrain, Stage::Instruct},
               {kPairsHeldout, Stage::Instruct},
               {kVocabFile, Stage::Instruct},
               {kBase, Stage::Train},
               {adapter_path("clone_eps4"), Stage::Train}}};
    case Stage::Report: {
      // Report inputs are optional: it renders holes for anything missing.
      StageSpec spec{{}, {{kTagF1, Stage::Tag}, {kMiaEps4, Stage::Audit},
                          {kMiaOverfit, Stage::Audit}}};
      for (const char* lane : kGridLanes) spec.inputs.push_back({pplcurve_path(lane), Stage::Adapt});
      spec.inputs.push_back({pplcurve_path(kBabbleLane), Stage::Adapt});
      for (const std::string& lane : kAdapterLanes)
        spec.inputs.push_back({ledger_path(lane), Stage::Train});
      return spec;
    }
  }
  fail(ErrorCode::InvalidArgument, "unknown stage");
}

void canon_value(const config::Value& v, std::string& out) {
  switch (v.kind) {
    case config::Value::Kind::String: out += "s:"; break;
    case config::Value::Kind::Integer: out += "i:"; break;
    case config::Value::Kind::Float: out += "f:"; break;
    case config::Value::Kind::Boolean: out += "b:"; break;
    case config::Value::Kind::Array: {
      out += "a:[";
      for (const config::Value& item : v.items) {
        canon_value(item, out);
        out += ",";
      }
      out += "]";
      return;
    }
  }
  out += v.raw;
}

std::string stage_config_hash(const config::Config& cfg, const std::vector<std::string>& sections,
                              uint64_t seed) {
  std::string text;
  for (const auto& [key, value] : cfg.entries()) {
    for (const std::string& sec : sections) {
      if (key.size() > sec.size() + 1 && key.compare(0, sec.size(), sec) == 0 &&
          key[sec.size()] == '.') {
        text += key;
        text += "=";
        canon_value(value, text);
        text += "\n";
        break;
      }
    }
  }
  text += "seed=" + std::to_string(seed);
  return hex64(fnv1a64_str(text));
}

// ---------------------------------------------------------------------------
// shared stage helpers

struct Ctx {
  const config::Config& cfg;
  const fs::path& out;
  uint64_t seed;
};

size_t cfg_count(const config::Config& cfg, const std::string& key, uint64_t fallback) {
  return static_cast<size_t>(cfg.get_u64(key, fallback));
}

std::array<double, 3> note_mix(const config::Config& cfg, const std::string& key) {
  if (!cfg.has(key)) return {1.0 / 3, 1.0 / 3, 1.0 / 3};
  const std::vector<double> mix = cfg.get_double_array(key);
  if (mix.size() != 3) fail(ErrorCode::ConfigError, "'" + key + "' needs exactly 3 weights");
  return {mix[0], mix[1], mix[2]};
}

model::HParams decoder_hparams(const config::Config& cfg, size_t vocab_size) {
  model::HParams hp;
  hp.d_model = cfg_count(cfg, "model.d_model", 64);
  hp.n_layers = cfg_count(cfg, "model.n_layers", 2);
  hp.n_heads = cfg_count(cfg, "model.n_heads", 4);
  hp.context_len = cfg_count(cfg, "model.context_len", 192);
  hp.vocab_size = vocab_size;
  hp.causal = true;
  return hp;
}

model::HParams encoder_hparams(const config::Config& cfg, size_t vocab_size) {
  model::HParams hp;
  hp.d_model = cfg_count(cfg, "encoder.d_model", 64);
  hp.n_layers = cfg_count(cfg, "encoder.n_layers", 2);
  hp.n_heads = cfg_count(cfg, "encoder.n_heads", 4);
  hp.context_len = cfg_count(cfg, "encoder.context_len", 128);
  hp.vocab_size = vocab_size;
  hp.causal = false;
  return hp;
}

std::vector<model::TokenExample> encode_pairs(const model::Vocab& vocab,
                                              const std::vector<instruct::InstructionPair>& pairs,
                                              size_t context_len) {
  std::vector<model::TokenExample> examples(pairs.size());
  parallel_for(pairs.size(), [&](size_t i) {
    examples[i] = model::encode_pair(vocab, pairs[i], context_len);
  });
  return examples;
}

std::vector<std::vector<model::TokenId>> word_sequences(const model::Vocab& vocab,
                                                        const std::vector<corpus::Note>& notes,
                                                        size_t context_len) {
  std::vector<std::vector<model::TokenId>> seqs(notes.size());
  parallel_for(notes.size(), [&](size_t i) {
    const std::vector<model::WordSpan> spans = model::split_words(notes[i].text);
    std::vector<std::string> words;
    words.reserve(spans.size());
    for (const model::WordSpan& w : spans) words.push_back(w.word);
    seqs[i] = model::encode_word_sequence(vocab, words, context_len);
  });
  return seqs;
}

// Non-private Adam training of the full parameter set on next-token examples.
void adam_train_lm(model::ModelParams& params, const std::vector<model::TokenExample>& examples,
                   size_t steps, size_t batch_size, double lr, uint64_t seed) {
  if (examples.empty()) fail(ErrorCode::EmptyCorpus, "no examples to train on");
  if (batch_size == 0) fail(ErrorCode::ConfigError, "batch size must be positive");
  optim::Adam adam(params.tensors, {.lr = lr});
  Rng pick(Rng::derive(seed, "lm-pick"));
  for (size_t step = 0; step < steps; ++step) {
    std::vector<size_t> batch(batch_size);
    for (size_t& idx : batch) idx = static_cast<size_t>(pick.below(examples.size()));
    std::vector<TensorMap> grads(batch.size());
    parallel_for(batch.size(), [&](size_t i) {
      grads[i] = model::nll_and_grad(params, nullptr, examples[batch[i]]).grad;
    });
    TensorMap mean = zeros_like(params.tensors);
    for (const TensorMap& g : grads) axpy_into(mean, g, 1.0 / static_cast<double>(batch.size()));
    adam.step(params.tensors, mean);
    if (!all_finite(params.tensors))
      fail(ErrorCode::Diverged, "non-finite parameters at step " + std::to_string(step + 1));
  }
}

model::LoraAdapter load_adapter_checked(const fs::path& path, const model::ModelParams& base) {
  auto [adapter, checksum] = model::load_adapter(path);
  if (checksum != model::params_checksum(base))
    fail(ErrorCode::AdapterMismatch,
         path.filename().string() + " was trained against a different base checkpoint");
  return adapter;
}

std::vector<std::string> load_prompts(const fs::path& path) {
  std::vector<std::string> prompts;
  for (const Json& row : read_jsonl(path)) {
    if (!row.contains("prompt") || !row.at("prompt").is_string())
      fail(ErrorCode::ParseError, "prompt rows need a string 'prompt' field");
    prompts.push_back(row.at("prompt").get<std::string>());
  }
  return prompts;
}

// ---------------------------------------------------------------------------
// stage runners

std::vector<std::string> run_synth(const Ctx& ctx) {
  corpus::CorpusProfile profile;
  profile.n_notes = cfg_count(ctx.cfg, "corpus.n_notes", 0);
  if (profile.n_notes == 0) fail(ErrorCode::ConfigError, "missing key 'corpus.n_notes'");
  profile.seed = Rng::derive(ctx.seed, "synth-corpus");
  profile.note_type_mix = note_mix(ctx.cfg, "corpus.note_type_mix");

  const std::vector<corpus::Note> notes = corpus::synth_corpus(profile);
  const double fraction = ctx.cfg.get_double("corpus.train_fraction", 0.8);
  auto [train, heldout] = corpus::split_corpus(notes, fraction, Rng::derive(ctx.seed, "split"));
  corpus::save_corpus(ctx.out / kCorpusTrain, train);
  corpus::save_corpus(ctx.out / kCorpusHeldout, heldout);
  return {kCorpusTrain, kCorpusHeldout};
}

std::vector<std::string> run_annotate(const Ctx& ctx) {
  for (const auto& [in_path, out_path] :
       {std::pair{kCorpusTrain, kAnnotatedTrain}, std::pair{kCorpusHeldout, kAnnotatedHeldout}}) {
    const std::vector<corpus::Note> notes = corpus::load_corpus(ctx.out / in_path);
    std::vector<corpus::AnnotatedNote> annotated(notes.size());
    parallel_for(notes.size(), [&](size_t i) { annotated[i] = corpus::annotate(notes[i]); });
    corpus::save_annotated(ctx.out / out_path, annotated);
  }
  return {kAnnotatedTrain, kAnnotatedHeldout};
}

std::vector<std::string> run_instruct(const Ctx& ctx) {
  const auto annotated_train = corpus::load_annotated(ctx.out / kAnnotatedTrain);
  const auto annotated_heldout = corpus::load_annotated(ctx.out / kAnnotatedHeldout);
  const std::vector<instruct::Template> templates = instruct::default_templates();
  instruct::save_templates(ctx.out / kTemplates, templates);

  const instruct::BuildPairsResult train_pairs = instruct::build_pairs(annotated_train, templates);
  const instruct::BuildPairsResult heldout_pairs =
      instruct::build_pairs(annotated_heldout, templates);
  instruct::save_pairs(ctx.out / kPairsTrain, train_pairs.pairs);
  instruct::save_pairs(ctx.out / kPairsHeldout, heldout_pairs.pairs);

  const size_t n_prompts = cfg_count(ctx.cfg, "instruct.n_prompts", 200);
  const std::vector<std::string> prompts = instruct::sample_prompts(
      annotated_train, templates, n_prompts, Rng::derive(ctx.seed, "prompts"));
  std::vector<Json> prompt_rows;
  prompt_rows.reserve(prompts.size());
  for (const std::string& p : prompts) prompt_rows.push_back(Json{{"prompt", p}});
  write_jsonl(ctx.out / kPrompts, prompt_rows);

  const model::Vocab vocab =
      model::Vocab::build_public(templates, cfg_count(ctx.cfg, "instruct.vocab_size", 512));
  vocab.save(ctx.out / kVocabFile);

  const Json stats{{"train_pairs", train_pairs.pairs.size()},
                   {"heldout_pairs", heldout_pairs.pairs.size()},
                   {"skipped_train", train_pairs.skipped},
                   {"skipped_heldout", heldout_pairs.skipped},
                   {"prompts", prompts.size()},
                   {"vocab_size", vocab.size()}};
  write_file_atomic(ctx.out / kInstructStats, stats.dump(2) + "\n");
  return {kTemplates, kPairsTrain, kPairsHeldout, kPrompts, kVocabFile, kInstructStats};
}

std::vector<std::string> run_train(const Ctx& ctx) {
  const model::Vocab vocab = model::Vocab::load(ctx.out / kVocabFile);
  const auto pairs = instruct::load_pairs(ctx.out / kPairsTrain);
  const auto templates = instruct::load_templates(ctx.out / kTemplates);
  const model::HParams hp = decoder_hparams(ctx.cfg, vocab.size());
  const std::vector<model::TokenExample> examples = encode_pairs(vocab, pairs, hp.context_len);

  model::ModelParams params = model::init_model(hp, Rng::derive(ctx.seed, "model-init"));
  model::save_checkpoint(ctx.out / kUntrained, params);

  // Base competence comes from a public pretraining corpus drawn from the
  // same note grammar but its own seed and mix, never from the private notes.
  {
    corpus::CorpusProfile profile;
    profile.n_notes = cfg_count(ctx.cfg, "pretrain.n_notes", 600);
    profile.seed = Rng::derive(ctx.seed, "pretrain-corpus");
    profile.note_type_mix = note_mix(ctx.cfg, "pretrain.note_type_mix");
    const std::vector<corpus::Note> public_notes = corpus::synth_corpus(profile);
    std::vector<corpus::AnnotatedNote> annotated(public_notes.size());
    parallel_for(public_notes.size(),
                 [&](size_t i) { annotated[i] = corpus::annotate(public_notes[i]); });
    const instruct::BuildPairsResult public_pairs = instruct::build_pairs(annotated, templates);
    const std::vector<model::TokenExample> public_examples =
        encode_pairs(vocab, public_pairs.pairs, hp.context_len);
    adam_train_lm(params, public_examples, cfg_count(ctx.cfg, "pretrain.steps", 300),
                  cfg_count(ctx.cfg, "pretrain.batch_size", 16),
                  ctx.cfg.get_double("pretrain.lr", 1e-3), Rng::derive(ctx.seed, "pretrain"));
  }
  model::save_checkpoint(ctx.out / kBase, params);
  const uint64_t base_checksum = model::params_checksum(params);

  const size_t rank = cfg_count(ctx.cfg, "lora.rank", 8);
  const double alpha = ctx.cfg.get_double("lora.alpha", 16.0);
  const double dp_lr = ctx.cfg.get_double("dp.lr", 0.05);

  std::vector<std::string> outputs = {kUntrained, kBase};
  for (size_t lane_idx = 0; lane_idx < kAdapterLanes.size(); ++lane_idx) {
    const std::string& lane = kAdapterLanes[lane_idx];
    const double eps = lane_epsilon(lane);

    model::LoraAdapter adapter =
        model::init_lora(params, rank, alpha, Rng::derive(ctx.seed, "lora-init"));
    dp::PrivacySpec spec;
    spec.delta = ctx.cfg.get_double("dp.delta", 1e-5);
    spec.sample_rate = ctx.cfg.get_double("dp.sample_rate", 0.01);
    spec.steps = cfg_count(ctx.cfg, "dp.steps", 200);
    if (std::isinf(eps)) {
      spec.clip_norm = std::numeric_limits<double>::infinity();
      spec.noise_multiplier = 0.0;
    } else {
      spec.clip_norm = ctx.cfg.get_double("dp.clip_norm", 1.0);
      spec.epsilon_target = eps;
    }
    const dp::PrivacySpec resolved = dp::resolve_spec(spec);

    const dp::DpTrainResult result = dp::dp_train(params, &adapter, examples, resolved, dp_lr,
                                                  Rng::derive(ctx.seed, "dp", lane_idx));
    model::save_adapter(ctx.out / adapter_path(lane), adapter, base_checksum);
    const double eps_spent =
        accountant::eps_from_ledger(result.ledger, resolved.delta).eps;
    write_file_atomic(ctx.out / ledger_path(lane),
                      dp::ledger_json(result.ledger, resolved, eps_spent).dump(2) + "\n");
    write_file_atomic(ctx.out / losscurve_path(lane), dp::curve_to_csv(result.curve));
    outputs.push_back(adapter_path(lane));
    outputs.push_back(ledger_path(lane));
    outputs.push_back(losscurve_path(lane));
  }
  return outputs;
}

std::vector<std::string> run_generate(const Ctx& ctx) {
  const model::Vocab vocab = model::Vocab::load(ctx.out / kVocabFile);
  const std::vector<std::string> prompts = load_prompts(ctx.out / kPrompts);
  const model::ModelParams base = model::load_checkpoint(ctx.out / kBase);
  const model::ModelParams untrained = model::load_checkpoint(ctx.out / kUntrained);

  eval::CloneConfig cc;
  cc.max_new = cfg_count(ctx.cfg, "generate.max_new", 96);
  cc.temperature = ctx.cfg.get_double("generate.temperature", 1.0);
  cc.top_k = cfg_count(ctx.cfg, "generate.top_k", 40);

  Json stats;
  std::vector<std::string> outputs;
  for (const std::string& lane : kAdapterLanes) {
    const model::LoraAdapter adapter = load_adapter_checked(ctx.out / adapter_path(lane), base);
    cc.seed = Rng::derive(ctx.seed, lane);
    size_t dropped = 0;
    const std::vector<corpus::Note> notes =
        eval::generate_clone(base, &adapter, vocab, prompts, cc, &dropped);
    corpus::save_corpus(ctx.out / clone_path(lane), notes);
    stats[lane] = Json{{"kept", notes.size()}, {"dropped", dropped}};
    outputs.push_back(clone_path(lane));
  }

  cc.seed = Rng::derive(ctx.seed, kBabbleLane);
  size_t dropped = 0;
  const std::vector<corpus::Note> babble =
      eval::generate_clone(untrained, nullptr, vocab, prompts, cc, &dropped);
  corpus::save_corpus(ctx.out / clone_path(kBabbleLane), babble);
  stats[kBabbleLane] = Json{{"kept", babble.size()}, {"dropped", dropped}};
  outputs.push_back(clone_path(kBabbleLane));

  write_file_atomic(ctx.out / kCloneStats, stats.dump(2) + "\n");
  outputs.push_back(kCloneStats);
  return outputs;
}

std::string ppl_curve_csv(const std::vector<std::pair<size_t, double>>& curve) {
  std::string out = "step,ppl\n";
  char buf[64];
  for (const auto& [step, ppl] : curve) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", step, ppl);
    out += buf;
  }
  return out;
}

std::vector<std::string> run_adapt(const Ctx& ctx) {
  const model::Vocab vocab = model::Vocab::load(ctx.out / kVocabFile);
  const model::HParams hp = encoder_hparams(ctx.cfg, vocab.size());

  const auto eval_seqs =
      word_sequences(vocab, corpus::load_corpus(ctx.out / kCorpusHeldout), hp.context_len);
  const model::ModelParams encoder_init =
      model::init_model(hp, Rng::derive(ctx.seed, "encoder-init"));

  eval::MlmAdaptConfig mc;
  mc.steps = cfg_count(ctx.cfg, "adapt.steps", 300);
  mc.batch_size = cfg_count(ctx.cfg, "adapt.batch_size", 8);
  mc.lr = ctx.cfg.get_double("adapt.lr", 1e-3);
  mc.eval_every = cfg_count(ctx.cfg, "adapt.eval_every", 100);
  mc.seed = ctx.seed;  // shared across lanes: same eval masks, comparable curves

  std::vector<std::string> lanes(kGridLanes.begin(), kGridLanes.end());
  lanes.push_back(kBabbleLane);

  std::vector<std::string> outputs;
  for (const std::string& lane : lanes) {
    std::vector<std::vector<model::TokenId>> corpus_seqs;
    eval::MlmAdaptConfig lane_cfg = mc;
    if (lane == "no_adapt") {
      corpus_seqs = eval_seqs;  // unused: 0 steps just records the start point
      lane_cfg.steps = 0;
    } else if (lane == "source") {
      corpus_seqs =
          word_sequences(vocab, corpus::load_corpus(ctx.out / kCorpusTrain), hp.context_len);
    } else {
      corpus_seqs =
          word_sequences(vocab, corpus::load_corpus(ctx.out / clone_path(lane)), hp.context_len);
    }

    model::ModelParams encoder = encoder_init;
    const eval::MlmAdaptResult result = eval::mlm_adapt(encoder, corpus_seqs, eval_seqs, lane_cfg);
    model::save_checkpoint(ctx.out / encoder_path(lane), encoder);
    write_file_atomic(ctx.out / pplcurve_path(lane), ppl_curve_csv(result.ppl_curve));
    outputs.push_back(encoder_path(lane));
    outputs.push_back(pplcurve_path(lane));
  }
  return outputs;
}

std::string task_name(corpus::NoteType type) {
  std::string name = corpus::to_string(type);
  for (char& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return "ner_" + name;
}

std::vector<std::string> run_tag(const Ctx& ctx) {
  const model::Vocab vocab = model::Vocab::load(ctx.out / kVocabFile);
  const auto annotated = corpus::load_annotated(ctx.out / kAnnotatedHeldout);
  if (annotated.empty()) fail(ErrorCode::EmptyCorpus, "no annotated held-out notes");

  std::vector<tagging::TaggedSentence> sentences(annotated.size());
  std::vector<corpus::NoteType> types(annotated.size());
  parallel_for(annotated.size(), [&](size_t i) {
    sentences[i] = tagging::make_tagged(annotated[i]);
    types[i] = annotated[i].note.note_type;
  });

  const double fraction = ctx.cfg.get_double("tag.train_fraction", 0.5);
  if (fraction <= 0.0 || fraction >= 1.0)
    fail(ErrorCode::ConfigError, "'tag.train_fraction' must be in (0,1)");
  Rng split_rng(Rng::derive(ctx.seed, "tag-split"));
  const std::vector<size_t> order = split_rng.permutation(sentences.size());
  const size_t n_train = static_cast<size_t>(
      std::llround(fraction * static_cast<double>(sentences.size())));
  std::vector<tagging::TaggedSentence> tag_train;
  std::vector<tagging::TaggedSentence> tag_test;
  std::vector<corpus::NoteType> test_types;
  for (size_t i = 0; i < order.size(); ++i) {
    if (i < n_train) {
      tag_train.push_back(sentences[order[i]]);
    } else {
      tag_test.push_back(sentences[order[i]]);
      test_types.push_back(types[order[i]]);
    }
  }
  if (tag_train.empty() || tag_test.empty())
    fail(ErrorCode::ConfigError, "tag split left an empty side");

  tagging::TaggerConfig tc;
  tc.steps = cfg_count(ctx.cfg, "tag.steps", 300);
  tc.batch_size = cfg_count(ctx.cfg, "tag.batch_size", 8);
  tc.lr = ctx.cfg.get_double("tag.lr", 1e-3);
  tc.seed = ctx.seed;

  Json grid;
  Json supports;
  for (const char* lane : kGridLanes) {
    const model::ModelParams encoder = model::load_checkpoint(ctx.out / encoder_path(lane));
    const model::ModelParams tagger = tagging::train_tagger(encoder, vocab, tag_train, tc);
    Json row;
    for (corpus::NoteType type : corpus::kNoteTypes) {
      std::vector<tagging::TaggedSentence> slice;
      for (size_t i = 0; i < tag_test.size(); ++i)
        if (test_types[i] == type) slice.push_back(tag_test[i]);
      const std::string task = task_name(type);
      if (slice.empty()) {
        supports[task] = 0;
        continue;
      }
      const tagging::F1Report f1 = tagging::evaluate_tagger(tagger, vocab, slice);
      row[task] = f1.weighted_f1;
      size_t support = 0;
      for (const auto& cat : f1.per_category) support += cat.support;
      supports[task] = support;
    }
    grid[lane] = row;
  }

  Json tasks = Json::array();
  for (corpus::NoteType type : corpus::kNoteTypes) tasks.push_back(task_name(type));
  const Json doc{{"tasks", tasks},
                 {"grid", grid},
                 {"task_support", supports},
                 {"tag_train_sentences", tag_train.size()},
                 {"tag_test_sentences", tag_test.size()}};
  write_file_atomic(ctx.out / kTagF1, doc.dump(2) + "\n");
  return {kTagF1};
}

std::vector<std::string> run_audit(const Ctx& ctx) {
  const model::Vocab vocab = model::Vocab::load(ctx.out / kVocabFile);
  const model::ModelParams base = model::load_checkpoint(ctx.out / kBase);
  const model::LoraAdapter adapter_eps4 =
      load_adapter_checked(ctx.out / adapter_path("clone_eps4"), base);

  const auto train_pairs = instruct::load_pairs(ctx.out / kPairsTrain);
  const auto heldout_pairs = instruct::load_pairs(ctx.out / kPairsHeldout);
  const size_t context_len = base.hparams.context_len;
  const auto train_examples = encode_pairs(vocab, train_pairs, context_len);
  const auto heldout_examples = encode_pairs(vocab, heldout_pairs, context_len);

  const size_t n_members = cfg_count(ctx.cfg, "audit.n_members", 100);
  const size_t n_nonmembers = cfg_count(ctx.cfg, "audit.n_nonmembers", 100);
  const size_t n_population = cfg_count(ctx.cfg, "audit.n_population", 200);
  const size_t n_overfit = cfg_count(ctx.cfg, "audit.overfit_examples", 50);
  if (n_members == 0 || n_members > train_examples.size())
    fail(ErrorCode::ConfigError, "'audit.n_members' exceeds the training pair count");
  if (n_nonmembers + n_population + n_overfit > heldout_examples.size())
    fail(ErrorCode::ConfigError,
         "audit needs " + std::to_string(n_nonmembers + n_population + n_overfit) +
             " held-out pairs, have " + std::to_string(heldout_examples.size()));

  Rng select(Rng::derive(ctx.seed, "audit-select"));
  const std::vector<size_t> train_order = select.permutation(train_examples.size());
  const std::vector<size_t> heldout_order = select.permutation(heldout_examples.size());

  std::vector<mia::Candidate> candidates;
  for (size_t i = 0; i < n_members; ++i) {
    const size_t idx = train_order[i];
    candidates.push_back({"m:" + train_pairs[idx].source_note_id, true, train_examples[idx]});
  }
  for (size_t i = 0; i < n_nonmembers; ++i) {
    const size_t idx = heldout_order[i];
    candidates.push_back({"n:" + heldout_pairs[idx].source_note_id, false, heldout_examples[idx]});
  }
  std::vector<model::TokenExample> population;
  for (size_t i = 0; i < n_population; ++i)
    population.push_back(heldout_examples[heldout_order[n_nonmembers + i]]);

  const mia::MiaResult eps4 =
      mia::rmia_audit(base, &adapter_eps4, base, nullptr, candidates, population);
  Json eps4_doc = mia::mia_to_json(eps4);
  eps4_doc["lane"] = "clone_eps4";
  write_file_atomic(ctx.out / kMiaEps4, eps4_doc.dump(2) + "\n");

  std::vector<std::string> outputs = {kMiaEps4};
  if (ctx.cfg.get_bool("audit.include_overfit", true)) {
    // Deliberately overfit adapter: full-batch passes over a tiny member set,
    // non-private, to confirm the harness detects real leakage.
    const size_t epochs = cfg_count(ctx.cfg, "audit.overfit_epochs", 500);
    const double lr = ctx.cfg.get_double("audit.overfit_lr", 1e-2);
    std::vector<model::TokenExample> overfit_set;
    std::vector<mia::Candidate> overfit_candidates;
    for (size_t i = 0; i < n_overfit && i < train_order.size(); ++i) {
      const size_t idx = train_order[i];
      overfit_set.push_back(train_examples[idx]);
      overfit_candidates.push_back(
          {"m:" + train_pairs[idx].source_note_id, true, train_examples[idx]});
    }
    for (size_t i = 0; i < n_overfit; ++i) {
      const size_t idx = heldout_order[n_nonmembers + n_population + i];
      overfit_candidates.push_back(
          {"n:" + heldout_pairs[idx].source_note_id, false, heldout_examples[idx]});
    }

    model::LoraAdapter overfit =
        model::init_lora(base, cfg_count(ctx.cfg, "lora.rank", 8),
                         ctx.cfg.get_double("lora.alpha", 16.0),
                         Rng::derive(ctx.seed, "overfit-lora"));
    optim::Adam adam(overfit.tensors, {.lr = lr});
    for (size_t epoch = 0; epoch < epochs; ++epoch) {
      std::vector<TensorMap> grads(overfit_set.size());
      parallel_for(overfit_set.size(), [&](size_t i) {
        grads[i] = model::nll_and_grad(base, &overfit, overfit_set[i]).grad;
      });
      TensorMap mean = zeros_like(overfit.tensors);
      for (const TensorMap& g : grads)
        axpy_into(mean, g, 1.0 / static_cast<double>(overfit_set.size()));
      adam.step(overfit.tensors, mean);
      if (!all_finite(overfit.tensors))
        fail(ErrorCode::Diverged, "non-finite adapter at epoch " + std::to_string(epoch + 1));
    }

    const mia::MiaResult of =
        mia::rmia_audit(base, &overfit, base, nullptr, overfit_candidates, population);
    Json of_doc = mia::mia_to_json(of);
    of_doc["lane"] = "overfit";
    of_doc["epochs"] = epochs;
    of_doc["train_examples"] = overfit_set.size();
    write_file_atomic(ctx.out / kMiaOverfit, of_doc.dump(2) + "\n");
    outputs.push_back(kMiaOverfit);
  }
  return outputs;
}

}  // namespace

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::Synth: return "synth";
    case Stage::Annotate: return "annotate";
    case Stage::Instruct: return "instruct";
    case Stage::Train: return "train";
    case Stage::Generate: return "generate";
    case Stage::Adapt: return "adapt";
    case Stage::Tag: return "tag";
    case Stage::Audit: return "audit";
    case Stage::Report: return "report";
  }
  return "unknown";
}

Stage stage_from_string(const std::string& name) {
  for (Stage stage : kStages)
    if (to_string(stage) == name) return stage;
  fail(ErrorCode::ConfigError, "unknown stage '" + name + "'");
}

Pipeline::Pipeline(config::Config cfg, std::filesystem::path out_dir,
                   std::map<std::string, uint64_t> seed_overrides)
    : cfg_(std::move(cfg)), out_dir_(std::move(out_dir)), seed_overrides_(std::move(seed_overrides)) {
  for (const auto& [stage_name, seed] : seed_overrides_) {
    (void)seed;
    stage_from_string(stage_name);  // reject typos up front
  }
  std::error_code ec;
  fs::create_directories(out_dir_, ec);
  if (ec) fail(ErrorCode::IoError, "cannot create " + out_dir_.string() + ": " + ec.message());

  const fs::path lock = out_dir_ / kLockFile;
  lock_fd_ = ::open(lock.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (lock_fd_ < 0)
    fail(ErrorCode::IoError,
         out_dir_.string() + " is locked by another run (remove " + lock.string() +
             " if that run is dead)");
  const std::string pid = std::to_string(::getpid()) + "\n";
  (void)!::write(lock_fd_, pid.data(), pid.size());
  load_manifest();
}

Pipeline::~Pipeline() {
  if (lock_fd_ >= 0) {
    ::close(lock_fd_);
    std::error_code ec;
    fs::remove(out_dir_ / kLockFile, ec);
  }
}

void Pipeline::load_manifest() {
  const fs::path path = out_dir_ / kManifestFile;
  if (fs::exists(path)) {
    manifest_ = Json::parse(read_file(path), nullptr, false);
    if (manifest_.is_discarded())
      fail(ErrorCode::ParseError, "malformed manifest at " + path.string());
  } else {
    manifest_ = Json::object();
  }
  manifest_["tool"] = kToolName;
  manifest_["version"] = kToolVersion;
  manifest_["config_fingerprint"] = cfg_.fingerprint();
  if (!manifest_.contains("stages")) manifest_["stages"] = Json::object();
}

void Pipeline::save_manifest() {
  write_file_atomic(out_dir_ / kManifestFile, manifest_.dump(2) + "\n");
}

uint64_t Pipeline::stage_seed(Stage stage) const {
  const std::string name = to_string(stage);
  const auto it = seed_overrides_.find(name);
  if (it != seed_overrides_.end()) return it->second;
  return cfg_.get_u64("seeds." + name);  // required: no wall-clock fallbacks
}

StageResult Pipeline::run_stage(Stage stage) {
  const std::string name = to_string(stage);
  const StageSpec spec = stage_spec(stage);
  const uint64_t seed = stage_seed(stage);

  Json inputs;
  inputs["config"] = stage_config_hash(cfg_, spec.sections, seed);
  for (const ArtifactDep& dep : spec.inputs) {
    const fs::path path = out_dir_ / dep.path;
    if (!fs::exists(path)) {
      // The report renders holes for missing inputs instead of failing.
      if (stage == Stage::Report) {
        inputs[dep.path] = "absent";
        continue;
      }
      fail(ErrorCode::MissingDependency,
           name + " needs " + dep.path + "; run stage '" + to_string(dep.producer) + "' first");
    }
    inputs[dep.path] = file_fingerprint(path);
  }

  StageResult result;
  const Json& stages = manifest_["stages"];
  if (const char* dbg = std::getenv("DATACLONE_DEBUG_SKIP"); dbg && *dbg) {
    std::fprintf(stderr, "[skip-debug] stage=%s computed=%s stored=%s\n", name.c_str(),
                 inputs.dump().c_str(),
                 stages.contains(name) ? stages[name].value("inputs", Json()).dump().c_str()
                                       : "<none>");
  }
  if (stages.contains(name) && stages[name].value("inputs", Json()) == inputs) {
    bool intact = true;
    for (const auto& [path, hash] : stages[name].value("outputs", Json::object()).items()) {
      const fs::path full = out_dir_ / path;
      if (const char* dbg = std::getenv("DATACLONE_DEBUG_SKIP"); dbg && *dbg) {
        std::fprintf(stderr, "[skip-debug] out=%s exists=%d now=%s stored=%s\n", path.c_str(),
                     (int)fs::exists(full),
                     fs::exists(full) ? file_fingerprint(full).c_str() : "-",
                     hash.get<std::string>().c_str());
      }
      if (!fs::exists(full) || file_fingerprint(full) != hash.get<std::string>()) {
        intact = false;
        break;
      }
      result.outputs.push_back(path);
    }
    if (intact && !stages[name].value("outputs", Json::object()).empty()) {
      result.skipped = true;
      if (stage == Stage::Report)
        result.missing_cells = stages[name].value("missing", std::vector<std::string>{});
      return result;
    }
    result.outputs.clear();
  }

  const Ctx ctx{cfg_, out_dir_, seed};
  switch (stage) {
    case Stage::Synth: result.outputs = run_synth(ctx); break;
    case Stage::Annotate: result.outputs = run_annotate(ctx); break;
    case Stage::Instruct: result.outputs = run_instruct(ctx); break;
    case Stage::Train: result.outputs = run_train(ctx); break;
    case Stage::Generate: result.outputs = run_generate(ctx); break;
    case Stage::Adapt: result.outputs = run_adapt(ctx); break;
    case Stage::Tag: result.outputs = run_tag(ctx); break;
    case Stage::Audit: result.outputs = run_audit(ctx); break;
    case Stage::Report: {
      const report::Report rep = report::build(out_dir_);
      write_file_atomic(out_dir_ / kReportMd, rep.markdown);
      write_file_atomic(out_dir_ / kReportJson, rep.json.dump(2) + "\n");
      result.outputs = {kReportMd, kReportJson};
      result.missing_cells = rep.missing;
      break;
    }
  }

  Json entry;
  entry["seed"] = seed;
  entry["inputs"] = inputs;
  Json outs;
  for (const std::string& path : result.outputs) outs[path] = file_fingerprint(out_dir_ / path);
  entry["outputs"] = outs;
  if (stage == Stage::Report) entry["missing"] = result.missing_cells;
  manifest_["stages"][name] = entry;
  save_manifest();
  return result;
}

}  // namespace dataclone::pipeline
