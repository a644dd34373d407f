#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dataclone/corpus.hpp"

namespace dataclone::instruct {

// A generation-instruction template. Placeholders are written <NAME>:
// category placeholders (<AGE>, <MEDICINE>, <DOSAGE>, <FREQUENCY>, <SYMPTOM>,
// <EXAMINATION>, <BODY_STRUCTURE>) substitute the first matching entity;
// block placeholders (<ENTITY_BLOCK>, <RELATION_BLOCK>, <ASSERTION_BLOCK>)
// expand to "- Label: surface" lines; <NOTE_TYPE> names the note type in the
// completion delimiter. Every body must contain the delimiter line.
struct Template {
  std::string id;
  std::optional<corpus::NoteType> note_type_filter;
  std::string body;
};

struct InstructionPair {
  std::string instruction;
  std::string completion;  // verbatim source note text
  std::string source_note_id;
  std::string template_id;

  bool operator==(const InstructionPair&) const = default;
};

inline constexpr const char* kCompletionDelimiterPrefix = "*** CLINICAL NOTE OF TYPE ";

// The shipped template set, in selection order.
std::vector<Template> default_templates();

// Deterministic placeholder substitution. Throws TemplateUnsatisfied when the
// annotation lacks a required category and InvalidTemplate for unknown
// placeholders or a missing delimiter line.
std::string render_instruction(const Template& tmpl, const corpus::AnnotatedNote& annotation);

// True when render_instruction would succeed (filter included).
bool satisfiable(const Template& tmpl, const corpus::AnnotatedNote& annotation);

struct BuildPairsResult {
  std::vector<InstructionPair> pairs;
  size_t skipped = 0;  // notes with no satisfiable template
};

// One pair per note from the first satisfiable template, completion equal to
// the note text.
BuildPairsResult build_pairs(const std::vector<corpus::AnnotatedNote>& annotated,
                             const std::vector<Template>& templates);

// n instructions drawn with replacement: template uniform over satisfiable
// template ids, then a uniform satisfying note for it.
std::vector<std::string> sample_prompts(const std::vector<corpus::AnnotatedNote>& annotated,
                                        const std::vector<Template>& templates, size_t n,
                                        uint64_t seed);

// Extracts the note type named in a prompt's completion delimiter.
std::optional<corpus::NoteType> note_type_from_prompt(const std::string& prompt);

// JSON-lines persistence: {"id","note_type_filter","body"} and
// {"instruction","completion","source_note_id","template_id"}.
void save_templates(const std::filesystem::path& path, const std::vector<Template>& templates);
std::vector<Template> load_templates(const std::filesystem::path& path);
void save_pairs(const std::filesystem::path& path, const std::vector<InstructionPair>& pairs);
std::vector<InstructionPair> load_pairs(const std::filesystem::path& path);

}  // namespace dataclone::instruct
