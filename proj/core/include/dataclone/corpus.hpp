#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dataclone::corpus {

enum class NoteType { CXR, DISCHARGE, PROGRESS };
constexpr std::array<NoteType, 3> kNoteTypes = {NoteType::CXR, NoteType::DISCHARGE,
                                                NoteType::PROGRESS};

enum class EntityCategory {
  MedicationName,
  Dosage,
  Frequency,
  SymptomOrSign,
  ExaminationName,
  BodyStructure,
  Age,
};
constexpr size_t kNumEntityCategories = 7;

enum class RelationKind {
  DosageOfMedication,     // Dosage -> MedicationName
  FrequencyOfMedication,  // Frequency -> MedicationName
  DirectionOfBody,        // BodyStructure (direction modifier) -> BodyStructure
};

enum class Temporality { Past, Present };

std::string to_string(NoteType t);
std::string to_string(EntityCategory c);
std::string to_string(RelationKind k);
std::string to_string(Temporality t);
NoteType note_type_from_string(const std::string& s);
EntityCategory entity_category_from_string(const std::string& s);
RelationKind relation_kind_from_string(const std::string& s);
Temporality temporality_from_string(const std::string& s);

// Human-readable category label used in instruction blocks,
// e.g. SymptomOrSign -> "Symptom or sign".
std::string category_display_name(EntityCategory c);

// Declared endpoint signature of a relation kind: {source, target}.
std::pair<EntityCategory, EntityCategory> relation_signature(RelationKind k);

struct Note {
  std::string id;
  NoteType note_type = NoteType::CXR;
  std::string text;

  bool operator==(const Note&) const = default;
};

struct Entity {
  EntityCategory category = EntityCategory::SymptomOrSign;
  std::string surface;
  size_t start = 0;  // [start, end) char span into note text
  size_t end = 0;

  bool operator==(const Entity&) const = default;
};

struct Relation {
  RelationKind kind = RelationKind::DosageOfMedication;
  size_t source = 0;  // index into AnnotatedNote::entities
  size_t target = 0;

  bool operator==(const Relation&) const = default;
};

struct Assertion {
  size_t entity = 0;  // index into AnnotatedNote::entities
  bool negated = false;
  Temporality temporality = Temporality::Present;

  bool operator==(const Assertion&) const = default;
};

struct AnnotatedNote {
  Note note;
  std::vector<Entity> entities;      // sorted by span start, pairwise disjoint
  std::vector<Relation> relations;
  std::vector<Assertion> assertions;  // at most one per entity

  bool operator==(const AnnotatedNote&) const = default;
};

struct CorpusProfile {
  size_t n_notes = 0;
  uint64_t seed = 0;
  std::array<double, 3> note_type_mix = {1.0 / 3, 1.0 / 3, 1.0 / 3};
};

// Deterministically generates grammar-based notes over the public lexicons.
// Same profile, same bytes.
std::vector<Note> synth_corpus(const CorpusProfile& profile);

// Disjoint partition with |train| = round(train_fraction * N), membership by
// seeded shuffle. Relative input order is preserved on both sides.
std::pair<std::vector<Note>, std::vector<Note>> split_corpus(const std::vector<Note>& notes,
                                                             double train_fraction,
                                                             uint64_t seed);

// Lexicon/pattern annotator: longest-match left-to-right entity extraction,
// nearest-compatible-in-sentence relations, trigger-word assertions.
AnnotatedNote annotate(const Note& note);

// JSON-lines persistence. load validates ids, spans, and indices and reports
// the offending line number.
void save_corpus(const std::filesystem::path& path, const std::vector<Note>& notes);
std::vector<Note> load_corpus(const std::filesystem::path& path);
void save_annotated(const std::filesystem::path& path, const std::vector<AnnotatedNote>& notes);
std::vector<AnnotatedNote> load_annotated(const std::filesystem::path& path);

}  // namespace dataclone::corpus
