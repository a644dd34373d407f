#pragma once

#include <string>
#include <vector>

namespace dataclone::corpus {

// Public clinical lexicons. The note generator, the annotator, and the
// vocabulary builder all read from this one source, so every surface form the
// generator can emit is also matchable by the annotator and coverable by the
// vocabulary. These lists are fixtures of the tool, not derived from any
// training corpus.
struct Lexicon {
  std::vector<std::string> medications;
  std::vector<std::string> symptoms;
  std::vector<std::string> examinations;
  std::vector<std::string> body_structures;
  std::vector<std::string> directions;       // laterality / position modifiers
  std::vector<std::string> frequencies;
  std::vector<std::string> dosage_numbers;
  std::vector<std::string> dosage_units;
  std::vector<std::string> negation_triggers;
  std::vector<std::string> history_triggers;
};

const Lexicon& lexicon();

// Sentence skeletons used by the generator, keyed by note type. Slots are
// written as {med} {dose} {freq} {sym} {exam} {body} {dirbody} {age}.
const std::vector<std::string>& sentence_pool_cxr();
const std::vector<std::string>& sentence_pool_discharge();
const std::vector<std::string>& sentence_pool_progress();

// Concatenation of every lexicon phrase and sentence skeleton. This is the
// public text the vocabulary is built from; the private corpus never feeds
// the tokenizer.
std::string public_vocab_text();

}  // namespace dataclone::corpus
