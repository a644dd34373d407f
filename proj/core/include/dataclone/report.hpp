#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dataclone/jsonl.hpp"

namespace dataclone::report {

struct Report {
  std::string markdown;
  Json json;                         // same numbers as the markdown grid
  std::vector<std::string> missing;  // grid cells / artifacts not found
};

// Renders the comparison grid (adaptation lanes x tagging tasks), the
// epsilon-vs-F1 summary, perplexity curve references, and the membership
// audit AUCs from a results directory. Absent artifacts leave holes that are
// listed in `missing`; rendering itself never throws for partial results.
Report build(const std::filesystem::path& results_dir);

}  // namespace dataclone::report
