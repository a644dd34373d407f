#include "dataclone/instruct.hpp"

#include <algorithm>
#include <map>

#include "dataclone/errors.hpp"
#include "dataclone/jsonl.hpp"
#include "dataclone/rng.hpp"

namespace dataclone::instruct {

using corpus::AnnotatedNote;
using corpus::EntityCategory;
using corpus::NoteType;
using corpus::RelationKind;

namespace {

std::optional<EntityCategory> category_placeholder(const std::string& name) {
  if (name == "AGE") return EntityCategory::Age;
  if (name == "MEDICINE") return EntityCategory::MedicationName;
  if (name == "DOSAGE") return EntityCategory::Dosage;
  if (name == "FREQUENCY") return EntityCategory::Frequency;
  if (name == "SYMPTOM") return EntityCategory::SymptomOrSign;
  if (name == "EXAMINATION") return EntityCategory::ExaminationName;
  if (name == "BODY_STRUCTURE") return EntityCategory::BodyStructure;
  return std::nullopt;
}

std::string relation_display_name(RelationKind k) {
  switch (k) {
    case RelationKind::DosageOfMedication: return "Dosage of medication";
    case RelationKind::FrequencyOfMedication: return "Frequency of medication";
    case RelationKind::DirectionOfBody: return "Direction of body";
  }
  return "Dosage of medication";
}

std::string entity_block(const AnnotatedNote& a) {
  std::string out;
  for (size_t i = 0; i < a.entities.size(); ++i) {
    if (i > 0) out.push_back('\n');
    out += "- " + corpus::category_display_name(a.entities[i].category) + ": " +
           a.entities[i].surface;
  }
  return out;
}

std::string relation_block(const AnnotatedNote& a) {
  if (a.relations.empty()) return "- none";
  std::string out;
  for (size_t i = 0; i < a.relations.size(); ++i) {
    if (i > 0) out.push_back('\n');
    const auto& r = a.relations[i];
    out += "- " + relation_display_name(r.kind) + ": " + a.entities[r.source].surface + " -> " +
           a.entities[r.target].surface;
  }
  return out;
}

std::string assertion_block(const AnnotatedNote& a) {
  if (a.assertions.empty()) return "- none";
  std::string out;
  bool first = true;
  for (const auto& s : a.assertions) {
    if (!first) out.push_back('\n');
    first = false;
    std::string label;
    if (s.negated) label = "Negated";
    if (s.temporality == corpus::Temporality::Past) {
      label = label.empty() ? "Past" : label + ", past";
    }
    out += "- " + label + ": " + a.entities[s.entity].surface;
  }
  return out;
}

// A placeholder is '<' [A-Z][A-Z_]* '>'.
bool scan_placeholder(const std::string& body, size_t at, std::string& name, size_t& end) {
  if (body[at] != '<') return false;
  size_t i = at + 1;
  if (i >= body.size() || body[i] < 'A' || body[i] > 'Z') return false;
  while (i < body.size() && ((body[i] >= 'A' && body[i] <= 'Z') || body[i] == '_')) ++i;
  if (i >= body.size() || body[i] != '>') return false;
  name = body.substr(at + 1, i - at - 1);
  end = i + 1;
  return true;
}

}  // namespace

std::vector<Template> default_templates() {
  return {
      {"rx-inline", NoteType::DISCHARGE,
       "Generate a clinical note about patient of <AGE> being prescribed with <MEDICINE> at a "
       "given <FREQUENCY> with <DOSAGE>.\n\n*** CLINICAL NOTE OF TYPE <NOTE_TYPE> ***"},
      {"cxr-block", NoteType::CXR,
       "*** ENTITIES ***\n<ENTITY_BLOCK>\n\n*** CLINICAL NOTE OF TYPE <NOTE_TYPE> ***"},
      {"full-structure", std::nullopt,
       "*** ENTITIES ***\n<ENTITY_BLOCK>\n\n*** RELATIONS ***\n<RELATION_BLOCK>\n\n"
       "*** ASSERTIONS ***\n<ASSERTION_BLOCK>\n\n*** CLINICAL NOTE OF TYPE <NOTE_TYPE> ***"},
  };
}

std::string render_instruction(const Template& tmpl, const AnnotatedNote& annotation) {
  if (tmpl.body.find(kCompletionDelimiterPrefix) == std::string::npos) {
    fail(ErrorCode::InvalidTemplate,
         "template '" + tmpl.id + "' lacks the completion delimiter line");
  }

  std::string out;
  out.reserve(tmpl.body.size() + 64);
  size_t i = 0;
  while (i < tmpl.body.size()) {
    std::string name;
    size_t end = 0;
    if (!scan_placeholder(tmpl.body, i, name, end)) {
      out.push_back(tmpl.body[i]);
      ++i;
      continue;
    }
    if (name == "NOTE_TYPE") {
      out += corpus::to_string(annotation.note.note_type);
    } else if (name == "ENTITY_BLOCK") {
      if (annotation.entities.empty()) {
        fail(ErrorCode::TemplateUnsatisfied, "Entities: annotation has no entities");
      }
      out += entity_block(annotation);
    } else if (name == "RELATION_BLOCK") {
      out += relation_block(annotation);
    } else if (name == "ASSERTION_BLOCK") {
      out += assertion_block(annotation);
    } else if (auto cat = category_placeholder(name)) {
      const auto it = std::find_if(
          annotation.entities.begin(), annotation.entities.end(),
          [&](const corpus::Entity& e) { return e.category == *cat; });
      if (it == annotation.entities.end()) {
        fail(ErrorCode::TemplateUnsatisfied, corpus::to_string(*cat));
      }
      out += it->surface;
    } else {
      fail(ErrorCode::InvalidTemplate, "unknown placeholder <" + name + ">");
    }
    i = end;
  }
  return out;
}

bool satisfiable(const Template& tmpl, const AnnotatedNote& annotation) {
  if (tmpl.note_type_filter && *tmpl.note_type_filter != annotation.note.note_type) return false;
  try {
    (void)render_instruction(tmpl, annotation);
    return true;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::TemplateUnsatisfied) return false;
    throw;
  }
}

BuildPairsResult build_pairs(const std::vector<AnnotatedNote>& annotated,
                             const std::vector<Template>& templates) {
  if (templates.empty()) {
    fail(ErrorCode::NoTemplates, "at least one template is required");
  }
  BuildPairsResult result;
  for (const auto& a : annotated) {
    bool emitted = false;
    for (const auto& tmpl : templates) {
      if (tmpl.note_type_filter && *tmpl.note_type_filter != a.note.note_type) continue;
      if (!satisfiable(tmpl, a)) continue;
      result.pairs.push_back(InstructionPair{render_instruction(tmpl, a), a.note.text,
                                             a.note.id, tmpl.id});
      emitted = true;
      break;
    }
    if (!emitted) ++result.skipped;
  }
  return result;
}

std::vector<std::string> sample_prompts(const std::vector<AnnotatedNote>& annotated,
                                        const std::vector<Template>& templates, size_t n,
                                        uint64_t seed) {
  if (n == 0) fail(ErrorCode::InvalidArgument, "n must be >= 1");
  if (templates.empty()) fail(ErrorCode::NoTemplates, "at least one template is required");

  // Satisfying note indices per template, in template order.
  std::vector<std::vector<size_t>> note_index_per_template(templates.size());
  std::vector<size_t> usable_templates;
  for (size_t t = 0; t < templates.size(); ++t) {
    for (size_t i = 0; i < annotated.size(); ++i) {
      if (satisfiable(templates[t], annotated[i])) {
        note_index_per_template[t].push_back(i);
      }
    }
    if (!note_index_per_template[t].empty()) usable_templates.push_back(t);
  }
  if (usable_templates.empty()) {
    fail(ErrorCode::NoSatisfiablePrompts, "no (note, template) combination is satisfiable");
  }

  Rng rng(seed);
  std::vector<std::string> prompts;
  prompts.reserve(n);
  for (size_t k = 0; k < n; ++k) {
    const size_t t = usable_templates[rng.below(usable_templates.size())];
    const auto& pool = note_index_per_template[t];
    const size_t i = pool[rng.below(pool.size())];
    prompts.push_back(render_instruction(templates[t], annotated[i]));
  }
  return prompts;
}

std::optional<NoteType> note_type_from_prompt(const std::string& prompt) {
  const size_t at = prompt.rfind(kCompletionDelimiterPrefix);
  if (at == std::string::npos) return std::nullopt;
  const size_t start = at + std::string(kCompletionDelimiterPrefix).size();
  const size_t end = prompt.find(' ', start);
  if (end == std::string::npos) return std::nullopt;
  const std::string name = prompt.substr(start, end - start);
  for (auto t : corpus::kNoteTypes) {
    if (corpus::to_string(t) == name) return t;
  }
  return std::nullopt;
}

void save_templates(const std::filesystem::path& path, const std::vector<Template>& templates) {
  std::vector<Json> rows;
  for (const auto& t : templates) {
    Json j{{"id", t.id}, {"body", t.body}};
    j["note_type_filter"] =
        t.note_type_filter ? Json(corpus::to_string(*t.note_type_filter)) : Json(nullptr);
    rows.push_back(std::move(j));
  }
  write_jsonl(path, rows);
}

std::vector<Template> load_templates(const std::filesystem::path& path) {
  std::vector<Template> templates;
  const auto rows = read_jsonl(path);
  for (size_t i = 0; i < rows.size(); ++i) {
    const Json& j = rows[i];
    Template t;
    if (!j.contains("id") || !j.contains("body")) {
      fail(ErrorCode::ParseError, "line " + std::to_string(i + 1) + ": template fields missing");
    }
    t.id = j.at("id").get<std::string>();
    t.body = j.at("body").get<std::string>();
    if (j.contains("note_type_filter") && !j.at("note_type_filter").is_null()) {
      t.note_type_filter = corpus::note_type_from_string(j.at("note_type_filter").get<std::string>());
    }
    templates.push_back(std::move(t));
  }
  return templates;
}

void save_pairs(const std::filesystem::path& path, const std::vector<InstructionPair>& pairs) {
  std::vector<Json> rows;
  rows.reserve(pairs.size());
  for (const auto& p : pairs) {
    rows.push_back(Json{{"instruction", p.instruction},
                        {"completion", p.completion},
                        {"source_note_id", p.source_note_id},
                        {"template_id", p.template_id}});
  }
  write_jsonl(path, rows);
}

std::vector<InstructionPair> load_pairs(const std::filesystem::path& path) {
  std::vector<InstructionPair> pairs;
  const auto rows = read_jsonl(path);
  for (size_t i = 0; i < rows.size(); ++i) {
    const Json& j = rows[i];
    if (!j.contains("instruction") || !j.contains("completion")) {
      fail(ErrorCode::ParseError, "line " + std::to_string(i + 1) + ": pair fields missing");
    }
    pairs.push_back(InstructionPair{j.at("instruction").get<std::string>(),
                                    j.at("completion").get<std::string>(),
                                    j.value("source_note_id", std::string{}),
                                    j.value("template_id", std::string{})});
  }
  return pairs;
}

}  // namespace dataclone::instruct
