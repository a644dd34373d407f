#include <cctype>
#include <cstdio>

#include "dataclone/errors.hpp"
#include "dataclone/eval.hpp"
#include "dataclone/instruct.hpp"
#include "dataclone/parallel.hpp"
#include "dataclone/rng.hpp"

namespace dataclone::eval {

namespace {

bool is_blank(const std::string& s) {
  for (char c : s)
    if (std::isspace(static_cast<unsigned char>(c)) == 0) return false;
  return true;
}

}  // namespace

std::vector<corpus::Note> generate_clone(const model::ModelParams& params,
                                         const model::LoraAdapter* adapter,
                                         const model::Vocab& vocab,
                                         const std::vector<std::string>& prompts,
                                         const CloneConfig& config, size_t* n_dropped) {
  if (prompts.empty()) fail(ErrorCode::InvalidArgument, "no prompts to complete");

  std::vector<std::string> texts(prompts.size());
  parallel_for(prompts.size(), [&](size_t i) {
    std::vector<model::TokenId> ids;
    ids.push_back(model::kBosId);
    const std::vector<model::TokenId> prompt_ids = vocab.encode(prompts[i] + "\n");
    ids.insert(ids.end(), prompt_ids.begin(), prompt_ids.end());
    if (ids.size() >= params.hparams.context_len) {
      texts[i].clear();
      return;
    }
    model::Decoding decoding;
    decoding.max_new = config.max_new;
    decoding.temperature = config.temperature;
    decoding.top_k = config.top_k;
    decoding.seed = Rng::derive(config.seed, "clone", i);
    texts[i] = vocab.decode(model::sample(params, adapter, ids, decoding));
  });

  std::vector<corpus::Note> notes;
  size_t degenerate = 0;
  char id_buf[32];
  for (size_t i = 0; i < texts.size(); ++i) {
    if (is_blank(texts[i])) {
      degenerate += 1;
      continue;
    }
    corpus::Note note;
    std::snprintf(id_buf, sizeof(id_buf), "clone-%06zu", notes.size());
    note.id = id_buf;
    note.note_type =
        instruct::note_type_from_prompt(prompts[i]).value_or(corpus::NoteType::PROGRESS);
    note.text = texts[i];
    notes.push_back(std::move(note));
  }
  if (notes.empty())
    fail(ErrorCode::DegenerateModel,
         "all " + std::to_string(prompts.size()) + " generations were empty");
  if (n_dropped != nullptr) *n_dropped = degenerate;
  return notes;
}

}  // namespace dataclone::eval
