#include "dataclone/corpus.hpp"

#include <cmath>
#include <cstdio>

#include "dataclone/errors.hpp"
#include "dataclone/lexicon.hpp"
#include "dataclone/rng.hpp"

namespace dataclone::corpus {

std::string to_string(NoteType t) {
  switch (t) {
    case NoteType::CXR: return "CXR";
    case NoteType::DISCHARGE: return "DISCHARGE";
    case NoteType::PROGRESS: return "PROGRESS";
  }
  return "CXR";
}

std::string to_string(EntityCategory c) {
  switch (c) {
    case EntityCategory::MedicationName: return "MedicationName";
    case EntityCategory::Dosage: return "Dosage";
    case EntityCategory::Frequency: return "Frequency";
    case EntityCategory::SymptomOrSign: return "SymptomOrSign";
    case EntityCategory::ExaminationName: return "ExaminationName";
    case EntityCategory::BodyStructure: return "BodyStructure";
    case EntityCategory::Age: return "Age";
  }
  return "SymptomOrSign";
}

std::string to_string(RelationKind k) {
  switch (k) {
    case RelationKind::DosageOfMedication: return "DosageOfMedication";
    case RelationKind::FrequencyOfMedication: return "FrequencyOfMedication";
    case RelationKind::DirectionOfBody: return "DirectionOfBody";
  }
  return "DosageOfMedication";
}

std::string to_string(Temporality t) {
  return t == Temporality::Past ? "Past" : "Present";
}

NoteType note_type_from_string(const std::string& s) {
  if (s == "CXR") return NoteType::CXR;
  if (s == "DISCHARGE") return NoteType::DISCHARGE;
  if (s == "PROGRESS") return NoteType::PROGRESS;
  fail(ErrorCode::ParseError, "unknown note_type '" + s + "'");
}

EntityCategory entity_category_from_string(const std::string& s) {
  for (size_t i = 0; i < kNumEntityCategories; ++i) {
    const auto c = static_cast<EntityCategory>(i);
    if (to_string(c) == s) return c;
  }
  fail(ErrorCode::ParseError, "unknown entity category '" + s + "'");
}

RelationKind relation_kind_from_string(const std::string& s) {
  for (auto k : {RelationKind::DosageOfMedication, RelationKind::FrequencyOfMedication,
                 RelationKind::DirectionOfBody}) {
    if (to_string(k) == s) return k;
  }
  fail(ErrorCode::ParseError, "unknown relation kind '" + s + "'");
}

Temporality temporality_from_string(const std::string& s) {
  if (s == "Past") return Temporality::Past;
  if (s == "Present") return Temporality::Present;
  fail(ErrorCode::ParseError, "unknown temporality '" + s + "'");
}

std::string category_display_name(EntityCategory c) {
  switch (c) {
    case EntityCategory::MedicationName: return "Medication name";
    case EntityCategory::Dosage: return "Dosage";
    case EntityCategory::Frequency: return "Frequency";
    case EntityCategory::SymptomOrSign: return "Symptom or sign";
    case EntityCategory::ExaminationName: return "Examination name";
    case EntityCategory::BodyStructure: return "Body structure";
    case EntityCategory::Age: return "Age";
  }
  return "Symptom or sign";
}

std::pair<EntityCategory, EntityCategory> relation_signature(RelationKind k) {
  switch (k) {
    case RelationKind::DosageOfMedication:
      return {EntityCategory::Dosage, EntityCategory::MedicationName};
    case RelationKind::FrequencyOfMedication:
      return {EntityCategory::Frequency, EntityCategory::MedicationName};
    case RelationKind::DirectionOfBody:
      return {EntityCategory::BodyStructure, EntityCategory::BodyStructure};
  }
  return {EntityCategory::Dosage, EntityCategory::MedicationName};
}

namespace {

const std::string& pick(Rng& rng, const std::vector<std::string>& list) {
  return list[rng.below(list.size())];
}

// Expands one sentence skeleton, drawing slot fillers from the lexicons.
std::string expand_skeleton(const std::string& skeleton, Rng& rng) {
  const Lexicon& lex = lexicon();
  std::string out;
  out.reserve(skeleton.size() + 32);
  size_t i = 0;
  while (i < skeleton.size()) {
    if (skeleton[i] != '{') {
      out.push_back(skeleton[i]);
      ++i;
      continue;
    }
    const size_t close = skeleton.find('}', i);
    const std::string tag = skeleton.substr(i + 1, close - i - 1);
    if (tag == "med") {
      out += pick(rng, lex.medications);
    } else if (tag == "sym") {
      out += pick(rng, lex.symptoms);
    } else if (tag == "exam") {
      out += pick(rng, lex.examinations);
    } else if (tag == "body") {
      out += pick(rng, lex.body_structures);
    } else if (tag == "dirbody") {
      out += pick(rng, lex.directions);
      out.push_back(' ');
      out += pick(rng, lex.body_structures);
    } else if (tag == "freq") {
      out += pick(rng, lex.frequencies);
    } else if (tag == "dose") {
      out += pick(rng, lex.dosage_numbers);
      out.push_back(' ');
      out += pick(rng, lex.dosage_units);
    } else if (tag == "age") {
      out += std::to_string(18 + rng.below(78));  // 18..95
    } else {
      out += tag;
    }
    i = close + 1;
  }
  return out;
}

const std::vector<std::string>& pool_for(NoteType t) {
  switch (t) {
    case NoteType::CXR: return sentence_pool_cxr();
    case NoteType::DISCHARGE: return sentence_pool_discharge();
    case NoteType::PROGRESS: return sentence_pool_progress();
  }
  return sentence_pool_cxr();
}

}  // namespace

std::vector<Note> synth_corpus(const CorpusProfile& profile) {
  if (profile.n_notes == 0) {
    fail(ErrorCode::EmptyProfile, "n_notes must be >= 1");
  }
  double mix_sum = 0.0;
  for (double p : profile.note_type_mix) {
    if (p < 0.0) fail(ErrorCode::InvalidProfile, "note_type_mix entries must be >= 0");
    mix_sum += p;
  }
  if (std::abs(mix_sum - 1.0) > 1e-9) {
    fail(ErrorCode::InvalidProfile, "note_type_mix must sum to 1");
  }

  Rng rng(profile.seed);
  std::vector<Note> notes;
  notes.reserve(profile.n_notes);
  for (size_t i = 0; i < profile.n_notes; ++i) {
    const double u = rng.uniform01();
    NoteType type = NoteType::PROGRESS;
    double acc = 0.0;
    for (size_t t = 0; t < kNoteTypes.size(); ++t) {
      acc += profile.note_type_mix[t];
      if (u < acc) {
        type = kNoteTypes[t];
        break;
      }
    }

    const auto& pool = pool_for(type);
    const size_t n_sentences = 2 + rng.below(3);  // 2..4
    std::string text;
    for (size_t s = 0; s < n_sentences; ++s) {
      if (s > 0) text.push_back(' ');
      text += expand_skeleton(pool[rng.below(pool.size())], rng);
    }

    char id[32];
    std::snprintf(id, sizeof(id), "note-%06zu", i);
    notes.push_back(Note{id, type, std::move(text)});
  }
  return notes;
}

std::pair<std::vector<Note>, std::vector<Note>> split_corpus(const std::vector<Note>& notes,
                                                             double train_fraction,
                                                             uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    fail(ErrorCode::InvalidFraction, "train_fraction must lie in (0, 1)");
  }
  const size_t n = notes.size();
  const size_t n_train =
      static_cast<size_t>(std::llround(train_fraction * static_cast<double>(n)));

  Rng rng(seed);
  const std::vector<size_t> order = rng.permutation(n);
  std::vector<bool> in_train(n, false);
  for (size_t i = 0; i < n_train && i < n; ++i) in_train[order[i]] = true;

  std::vector<Note> train;
  std::vector<Note> heldout;
  train.reserve(n_train);
  heldout.reserve(n - n_train);
  for (size_t i = 0; i < n; ++i) {
    (in_train[i] ? train : heldout).push_back(notes[i]);
  }
  return {std::move(train), std::move(heldout)};
}

}  // namespace dataclone::corpus
