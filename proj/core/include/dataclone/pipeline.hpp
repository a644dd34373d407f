#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dataclone/config.hpp"
#include "dataclone/jsonl.hpp"

namespace dataclone::pipeline {

inline constexpr const char* kToolName = "dataclone";
inline constexpr const char* kToolVersion = "0.1.0";

enum class Stage { Synth, Annotate, Instruct, Train, Generate, Adapt, Tag, Audit, Report };

inline constexpr std::array<Stage, 9> kStages = {
    Stage::Synth, Stage::Annotate, Stage::Instruct, Stage::Train, Stage::Generate,
    Stage::Adapt, Stage::Tag,      Stage::Audit,    Stage::Report};

std::string to_string(Stage stage);
Stage stage_from_string(const std::string& name);

// Adaptation lanes, in report-grid row order; "babble" is the extra
// untrained-generation control lane tracked for the perplexity comparison but
// kept out of the grid.
inline constexpr std::array<const char*, 6> kGridLanes = {
    "no_adapt", "source", "clone_inf", "clone_eps2", "clone_eps4", "clone_eps8"};
inline constexpr const char* kBabbleLane = "babble";

struct StageResult {
  bool skipped = false;                    // inputs unchanged, outputs intact
  std::vector<std::string> outputs;        // artifact paths relative to out dir
  std::vector<std::string> missing_cells;  // report stage: unfilled grid cells
};

// Orchestrates the stage graph over one output directory. Construction takes
// the directory lock; stages load their inputs from disk and write outputs
// atomically, so each stage can also run as its own process.
class Pipeline {
 public:
  Pipeline(config::Config cfg, std::filesystem::path out_dir,
           std::map<std::string, uint64_t> seed_overrides = {});
  ~Pipeline();

  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  // Runs one stage, or skips it when every recorded input hash still matches.
  // Missing upstream artifacts fail with MissingDependency naming the stage
  // that produces them.
  StageResult run_stage(Stage stage);

  const std::filesystem::path& out_dir() const { return out_dir_; }
  uint64_t stage_seed(Stage stage) const;

 private:
  config::Config cfg_;
  std::filesystem::path out_dir_;
  std::map<std::string, uint64_t> seed_overrides_;
  Json manifest_;
  int lock_fd_ = -1;

  void load_manifest();
  void save_manifest();
};

}  // namespace dataclone::pipeline
