#include "dataclone/lexicon.hpp"

#include <sstream>

namespace dataclone::corpus {

const Lexicon& lexicon() {
  static const Lexicon lex = [] {
    Lexicon l;
    l.medications = {
        "aspirin",   "metformin",  "lisinopril", "atorvastatin",
        "amoxicillin", "ibuprofen", "warfarin",  "insulin",
        "albuterol", "omeprazole", "furosemide", "gabapentin",
        "prednisone", "metoprolol", "losartan",  "sertraline",
    };
    l.symptoms = {
        "chest pain",      "shortness of breath", "headache",
        "nausea",          "dizziness",           "fever",
        "cough",           "fatigue",             "abdominal pain",
        "back pain",       "palpitations",        "wheezing",
        "vomiting",        "rash",                "swelling",
        "scarring",        "edema",               "pleural effusion",
        "atelectasis",     "congestion",          "pain",
        "tenderness",      "infiltrate",          "consolidation",
    };
    l.examinations = {
        "CT chest",            "chest x-ray",        "MRI brain",
        "echocardiogram",      "abdominal ultrasound", "electrocardiogram",
        "complete blood count", "spirometry",         "colonoscopy",
        "CT abdomen",          "chest radiograph",
    };
    l.body_structures = {
        "lung",      "heart",     "liver",    "kidney",  "abdomen",
        "knee",      "shoulder",  "arm",      "leg",     "ankle",
        "wrist",     "hip",       "spine",    "chest wall",
        "lower back", "lobe",     "diaphragm", "rib",
    };
    l.directions = {"left", "right", "upper", "lower", "bilateral"};
    l.frequencies = {
        "once daily",       "twice daily",    "three times daily",
        "every morning",    "every evening",  "at bedtime",
        "every 6 hours",    "every 8 hours",  "as needed",
        "weekly",
    };
    l.dosage_numbers = {"5",  "10", "20",  "25",  "40",  "50",
                        "81", "100", "125", "250", "500", "1000"};
    l.dosage_units = {"mg", "mcg", "g", "ml", "units"};
    l.negation_triggers = {"no", "denies", "without", "negative for"};
    l.history_triggers = {"history of"};
    return l;
  }();
  return lex;
}

const std::vector<std::string>& sentence_pool_cxr() {
  static const std::vector<std::string> pool = {
      "Chest x-ray shows {sym} in the {dirbody}.",
      "{exam} demonstrates {sym} near the {body}.",
      "No evidence of {sym} or {sym}.",
      "Lungs are clear without {sym}.",
      "Mild {sym} is noted in the {dirbody}.",
      "Comparison with prior {exam} shows stable {sym}.",
      "There is {sym} overlying the {dirbody}.",
      "The {dirbody} is unremarkable.",
  };
  return pool;
}

const std::vector<std::string>& sentence_pool_discharge() {
  static const std::vector<std::string> pool = {
      "Patient is a {age}-year-old admitted with {sym}.",
      "Discharged on {med} {dose} {freq}.",
      "The patient was treated with {med} {dose} {freq} for {sym}.",
      "History of {sym} and {sym}.",
      "Patient denies {sym} at discharge.",
      "Follow-up {exam} is scheduled.",
      "Home medications include {med} {dose} {freq}.",
      "Hospital course was complicated by {sym}.",
  };
  return pool;
}

const std::vector<std::string>& sentence_pool_progress() {
  static const std::vector<std::string> pool = {
      "Patient reports {sym} in the {dirbody}.",
      "Continue {med} {dose} {freq}.",
      "Patient denies {sym} and {sym}.",
      "{exam} ordered to evaluate {sym}.",
      "No {sym} noted on examination today.",
      "The {dirbody} remains tender.",
      "History of {sym} managed with {med} {dose} {freq}.",
      "Started {med} {dose} {freq} this morning.",
  };
  return pool;
}

std::string public_vocab_text() {
  std::ostringstream out;
  const Lexicon& l = lexicon();
  for (const auto* list :
       {&l.medications, &l.symptoms, &l.examinations, &l.body_structures,
        &l.directions, &l.frequencies, &l.dosage_numbers, &l.dosage_units,
        &l.negation_triggers, &l.history_triggers}) {
    for (const auto& phrase : *list) out << phrase << "\n";
  }
  for (const auto* pool :
       {&sentence_pool_cxr(), &sentence_pool_discharge(), &sentence_pool_progress()}) {
    for (const auto& skeleton : *pool) out << skeleton << "\n";
  }
  // Surfaces produced by slot expansion that are not lexicon entries.
  out << "year-old\nyears old\n0 1 2 3 4 5 6 7 8 9\n";
  return out.str();
}

}  // namespace dataclone::corpus
