#include <algorithm>
#include <cctype>
#include <limits>
#include <string>
#include <vector>

#include "dataclone/corpus.hpp"
#include "dataclone/errors.hpp"
#include "dataclone/lexicon.hpp"

namespace dataclone::corpus {

namespace {

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

std::string to_lower(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool word_bounded(const std::string& text, size_t start, size_t end) {
  if (start > 0 && is_word_char(text[start - 1]) && is_word_char(text[start])) return false;
  if (end < text.size() && is_word_char(text[end]) && is_word_char(text[end - 1])) return false;
  return true;
}

struct Candidate {
  size_t start = 0;
  size_t end = 0;
  EntityCategory category = EntityCategory::SymptomOrSign;
  bool is_direction = false;
  int priority = 0;  // tie-break for same (start, length)
};

void collect_phrase_candidates(const std::string& lower, const std::vector<std::string>& phrases,
                               EntityCategory category, bool is_direction, int priority,
                               std::vector<Candidate>& out) {
  for (const auto& phrase : phrases) {
    const std::string needle = to_lower(phrase);
    size_t pos = lower.find(needle);
    while (pos != std::string::npos) {
      const size_t end = pos + needle.size();
      if (word_bounded(lower, pos, end)) {
        out.push_back({pos, end, category, is_direction, priority});
      }
      pos = lower.find(needle, pos + 1);
    }
  }
}

// Scans "<digits> <unit>" dosages and "<digits>-year-old" / "<digits> years old"
// ages. Dosage spans cover number and unit; age spans cover digits only.
void collect_pattern_candidates(const std::string& lower, std::vector<Candidate>& out) {
  const Lexicon& lex = lexicon();
  size_t i = 0;
  while (i < lower.size()) {
    if (!std::isdigit(static_cast<unsigned char>(lower[i])) ||
        (i > 0 && is_word_char(lower[i - 1]))) {
      ++i;
      continue;
    }
    size_t d_end = i;
    while (d_end < lower.size() && std::isdigit(static_cast<unsigned char>(lower[d_end]))) ++d_end;
    if (d_end + 1 < lower.size() && lower[d_end] == '.' &&
        std::isdigit(static_cast<unsigned char>(lower[d_end + 1]))) {
      d_end += 2;
      while (d_end < lower.size() && std::isdigit(static_cast<unsigned char>(lower[d_end]))) ++d_end;
    }

    if (lower.compare(d_end, 9, "-year-old") == 0 ||
        lower.compare(d_end, 10, " years old") == 0) {
      out.push_back({i, d_end, EntityCategory::Age, false, 0});
    } else if (d_end < lower.size() && lower[d_end] == ' ') {
      for (const auto& unit : lex.dosage_units) {
        const size_t u_end = d_end + 1 + unit.size();
        if (lower.compare(d_end + 1, unit.size(), unit) == 0 &&
            word_bounded(lower, d_end + 1, u_end)) {
          out.push_back({i, u_end, EntityCategory::Dosage, false, 0});
          break;
        }
      }
    }
    i = d_end;
  }
}

struct TriggerHit {
  size_t pos = 0;
  bool negation = false;  // else history-of
};

void collect_triggers(const std::string& lower, std::vector<TriggerHit>& out) {
  const Lexicon& lex = lexicon();
  for (bool negation : {true, false}) {
    const auto& triggers = negation ? lex.negation_triggers : lex.history_triggers;
    for (const auto& trig : triggers) {
      size_t pos = lower.find(trig);
      while (pos != std::string::npos) {
        if (word_bounded(lower, pos, pos + trig.size())) {
          out.push_back({pos, negation});
        }
        pos = lower.find(trig, pos + 1);
      }
    }
  }
}

}  // namespace

AnnotatedNote annotate(const Note& note) {
  if (note.text.empty()) {
    fail(ErrorCode::InvalidArgument, "annotate: note text must be non-empty");
  }
  const std::string& text = note.text;
  const std::string lower = to_lower(text);

  // Sentence index per character, split on ./!/?.
  std::vector<size_t> sentence_of(text.size(), 0);
  {
    size_t sent = 0;
    for (size_t i = 0; i < text.size(); ++i) {
      sentence_of[i] = sent;
      if (text[i] == '.' || text[i] == '!' || text[i] == '?') ++sent;
    }
  }

  const Lexicon& lex = lexicon();
  std::vector<Candidate> candidates;
  collect_phrase_candidates(lower, lex.medications, EntityCategory::MedicationName, false, 0, candidates);
  collect_phrase_candidates(lower, lex.symptoms, EntityCategory::SymptomOrSign, false, 1, candidates);
  collect_phrase_candidates(lower, lex.examinations, EntityCategory::ExaminationName, false, 2, candidates);
  collect_phrase_candidates(lower, lex.frequencies, EntityCategory::Frequency, false, 3, candidates);
  collect_phrase_candidates(lower, lex.body_structures, EntityCategory::BodyStructure, false, 4, candidates);
  collect_phrase_candidates(lower, lex.directions, EntityCategory::BodyStructure, true, 5, candidates);
  collect_pattern_candidates(lower, candidates);

  // Longest match, left to right: earliest start wins; at equal start the
  // longer span wins; remaining ties go to the lower priority rank.
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.start != b.start) return a.start < b.start;
    if (a.end != b.end) return a.end > b.end;
    return a.priority < b.priority;
  });
  std::vector<Candidate> selected;
  size_t cursor = 0;
  for (const auto& c : candidates) {
    if (c.start >= cursor) {
      selected.push_back(c);
      cursor = c.end;
    }
  }

  // A direction modifier is only an entity when some anatomy mention shares
  // its sentence; otherwise it is dropped.
  std::vector<char> keep(selected.size(), 1);
  for (size_t i = 0; i < selected.size(); ++i) {
    if (!selected[i].is_direction) continue;
    bool has_anatomy = false;
    for (size_t j = 0; j < selected.size(); ++j) {
      if (j == i || selected[j].is_direction) continue;
      if (selected[j].category == EntityCategory::BodyStructure &&
          sentence_of[selected[j].start] == sentence_of[selected[i].start]) {
        has_anatomy = true;
        break;
      }
    }
    keep[i] = has_anatomy ? 1 : 0;
  }

  AnnotatedNote out;
  out.note = note;
  std::vector<bool> is_direction_entity;
  for (size_t i = 0; i < selected.size(); ++i) {
    if (!keep[i]) continue;
    const auto& c = selected[i];
    out.entities.push_back(
        Entity{c.category, text.substr(c.start, c.end - c.start), c.start, c.end});
    is_direction_entity.push_back(c.is_direction);
  }

  // Relations: attach each source entity to the nearest compatible target in
  // the same sentence (char distance; ties to the earlier entity).
  auto nearest = [&](size_t src, EntityCategory target_cat, bool exclude_direction) {
    const size_t sent = sentence_of[out.entities[src].start];
    size_t best = std::numeric_limits<size_t>::max();
    size_t best_dist = std::numeric_limits<size_t>::max();
    for (size_t j = 0; j < out.entities.size(); ++j) {
      if (j == src || out.entities[j].category != target_cat) continue;
      if (exclude_direction && is_direction_entity[j]) continue;
      if (sentence_of[out.entities[j].start] != sent) continue;
      const size_t a = out.entities[src].start;
      const size_t b = out.entities[j].start;
      const size_t dist = a > b ? a - b : b - a;
      if (dist < best_dist) {
        best_dist = dist;
        best = j;
      }
    }
    return best;
  };

  for (size_t i = 0; i < out.entities.size(); ++i) {
    const auto cat = out.entities[i].category;
    if (cat == EntityCategory::Dosage) {
      const size_t t = nearest(i, EntityCategory::MedicationName, false);
      if (t != std::numeric_limits<size_t>::max()) {
        out.relations.push_back({RelationKind::DosageOfMedication, i, t});
      }
    } else if (cat == EntityCategory::Frequency) {
      const size_t t = nearest(i, EntityCategory::MedicationName, false);
      if (t != std::numeric_limits<size_t>::max()) {
        out.relations.push_back({RelationKind::FrequencyOfMedication, i, t});
      }
    } else if (is_direction_entity[i]) {
      const size_t t = nearest(i, EntityCategory::BodyStructure, true);
      if (t != std::numeric_limits<size_t>::max()) {
        out.relations.push_back({RelationKind::DirectionOfBody, i, t});
      }
    }
  }

  // Assertions: a negation trigger negates following symptom mentions in its
  // sentence; "history of" marks following entities as past.
  std::vector<TriggerHit> triggers;
  collect_triggers(lower, triggers);
  std::vector<bool> negated(out.entities.size(), false);
  std::vector<bool> past(out.entities.size(), false);
  for (const auto& trig : triggers) {
    for (size_t i = 0; i < out.entities.size(); ++i) {
      const auto& e = out.entities[i];
      if (e.start <= trig.pos || sentence_of[e.start] != sentence_of[trig.pos]) continue;
      if (trig.negation) {
        if (e.category == EntityCategory::SymptomOrSign) negated[i] = true;
      } else {
        past[i] = true;
      }
    }
  }
  for (size_t i = 0; i < out.entities.size(); ++i) {
    if (negated[i] || past[i]) {
      out.assertions.push_back(
          Assertion{i, negated[i], past[i] ? Temporality::Past : Temporality::Present});
    }
  }

  return out;
}

}  // namespace dataclone::corpus
