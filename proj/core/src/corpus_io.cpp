#include <set>
#include <string>

#include "dataclone/corpus.hpp"
#include "dataclone/errors.hpp"
#include "dataclone/jsonl.hpp"

namespace dataclone::corpus {

namespace {

Json note_to_json(const Note& n) {
  return Json{{"id", n.id}, {"note_type", to_string(n.note_type)}, {"text", n.text}};
}

Note note_from_json(const Json& j, size_t line) {
  if (!j.is_object() || !j.contains("id") || !j.contains("note_type") || !j.contains("text")) {
    fail(ErrorCode::ParseError, "line " + std::to_string(line) + ": note fields missing");
  }
  Note n;
  n.id = j.at("id").get<std::string>();
  n.note_type = note_type_from_string(j.at("note_type").get<std::string>());
  n.text = j.at("text").get<std::string>();
  if (n.text.empty()) {
    fail(ErrorCode::ParseError, "line " + std::to_string(line) + ": empty note text");
  }
  return n;
}

void check_duplicate(std::set<std::string>& seen, const std::string& id) {
  if (!seen.insert(id).second) {
    fail(ErrorCode::DuplicateId, "duplicate note id '" + id + "'");
  }
}

}  // namespace

void save_corpus(const std::filesystem::path& path, const std::vector<Note>& notes) {
  std::vector<Json> rows;
  rows.reserve(notes.size());
  for (const auto& n : notes) rows.push_back(note_to_json(n));
  write_jsonl(path, rows);
}

std::vector<Note> load_corpus(const std::filesystem::path& path) {
  const auto rows = read_jsonl(path);
  std::vector<Note> notes;
  notes.reserve(rows.size());
  std::set<std::string> seen;
  for (size_t i = 0; i < rows.size(); ++i) {
    Note n = note_from_json(rows[i], i + 1);
    check_duplicate(seen, n.id);
    notes.push_back(std::move(n));
  }
  return notes;
}

void save_annotated(const std::filesystem::path& path, const std::vector<AnnotatedNote>& notes) {
  std::vector<Json> rows;
  rows.reserve(notes.size());
  for (const auto& a : notes) {
    Json j = note_to_json(a.note);
    Json entities = Json::array();
    for (const auto& e : a.entities) {
      entities.push_back(Json{{"category", to_string(e.category)},
                              {"surface", e.surface},
                              {"start", e.start},
                              {"end", e.end}});
    }
    Json relations = Json::array();
    for (const auto& r : a.relations) {
      relations.push_back(
          Json{{"kind", to_string(r.kind)}, {"source", r.source}, {"target", r.target}});
    }
    Json assertions = Json::array();
    for (const auto& s : a.assertions) {
      assertions.push_back(Json{{"entity", s.entity},
                                {"negated", s.negated},
                                {"temporality", to_string(s.temporality)}});
    }
    j["entities"] = std::move(entities);
    j["relations"] = std::move(relations);
    j["assertions"] = std::move(assertions);
    rows.push_back(std::move(j));
  }
  write_jsonl(path, rows);
}

std::vector<AnnotatedNote> load_annotated(const std::filesystem::path& path) {
  const auto rows = read_jsonl(path);
  std::vector<AnnotatedNote> notes;
  notes.reserve(rows.size());
  std::set<std::string> seen;
  for (size_t i = 0; i < rows.size(); ++i) {
    const Json& j = rows[i];
    const size_t line = i + 1;
    AnnotatedNote a;
    a.note = note_from_json(j, line);
    check_duplicate(seen, a.note.id);

    for (const auto& je : j.value("entities", Json::array())) {
      Entity e;
      e.category = entity_category_from_string(je.at("category").get<std::string>());
      e.surface = je.at("surface").get<std::string>();
      e.start = je.at("start").get<size_t>();
      e.end = je.at("end").get<size_t>();
      if (e.start >= e.end || e.end > a.note.text.size() ||
          a.note.text.substr(e.start, e.end - e.start) != e.surface) {
        fail(ErrorCode::ParseError,
             "line " + std::to_string(line) + ": entity span does not match surface");
      }
      a.entities.push_back(std::move(e));
    }
    for (const auto& jr : j.value("relations", Json::array())) {
      Relation r;
      r.kind = relation_kind_from_string(jr.at("kind").get<std::string>());
      r.source = jr.at("source").get<size_t>();
      r.target = jr.at("target").get<size_t>();
      if (r.source >= a.entities.size() || r.target >= a.entities.size() || r.source == r.target) {
        fail(ErrorCode::ParseError, "line " + std::to_string(line) + ": relation index out of range");
      }
      a.relations.push_back(r);
    }
    for (const auto& js : j.value("assertions", Json::array())) {
      Assertion s;
      s.entity = js.at("entity").get<size_t>();
      s.negated = js.at("negated").get<bool>();
      s.temporality = temporality_from_string(js.at("temporality").get<std::string>());
      if (s.entity >= a.entities.size()) {
        fail(ErrorCode::ParseError, "line " + std::to_string(line) + ": assertion index out of range");
      }
      a.assertions.push_back(s);
    }
    notes.push_back(std::move(a));
  }
  return notes;
}

}  // namespace dataclone::corpus
