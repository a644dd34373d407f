#include "dataclone/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "dataclone/errors.hpp"
#include "dataclone/jsonl.hpp"
#include "dataclone/lexicon.hpp"
#include "dataclone/rng.hpp"

namespace dataclone::model {

namespace {

bool is_word_byte(unsigned char c) {
  return std::isalnum(c) != 0;
}

}  // namespace

std::vector<std::pair<std::string, bool>> segment_text(const std::string& text) {
  std::vector<std::pair<std::string, bool>> segments;
  size_t i = 0;
  while (i < text.size()) {
    if (is_word_byte(static_cast<unsigned char>(text[i]))) {
      size_t j = i;
      while (j < text.size() && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
      segments.emplace_back(text.substr(i, j - i), true);
      i = j;
    } else {
      segments.emplace_back(text.substr(i, 1), false);
      ++i;
    }
  }
  return segments;
}

Vocab Vocab::build_from_texts(const std::vector<std::string>& texts, size_t max_size) {
  if (max_size <= kReservedTokens) {
    fail(ErrorCode::VocabTooSmall,
         "max_size must exceed " + std::to_string(kReservedTokens) + " reserved tokens");
  }
  // std::map keeps counting deterministic; rank by (count desc, token asc).
  std::map<std::string, size_t> counts;
  for (const auto& text : texts) {
    for (const auto& [segment, is_word] : segment_text(text)) {
      (void)is_word;
      ++counts[segment];
    }
  }
  std::vector<std::pair<std::string, size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocab v;
  const size_t capacity = max_size - kReservedTokens;
  for (const auto& [token, count] : ranked) {
    (void)count;
    if (v.words_.size() == capacity) break;
    v.words_.push_back(token);
  }
  v.rebuild_index();
  return v;
}

Vocab Vocab::build(const std::vector<corpus::Note>& notes, size_t max_size) {
  std::vector<std::string> texts;
  texts.reserve(notes.size());
  for (const auto& n : notes) texts.push_back(n.text);
  return build_from_texts(texts, max_size);
}

Vocab Vocab::build_public(const std::vector<instruct::Template>& templates, size_t max_size) {
  std::vector<std::string> texts{corpus::public_vocab_text()};
  for (const auto& t : templates) texts.push_back(t.body);
  return build_from_texts(texts, max_size);
}

void Vocab::rebuild_index() {
  word_ids_.clear();
  word_ids_.reserve(words_.size());
  for (size_t i = 0; i < words_.size(); ++i) {
    word_ids_.emplace(words_[i], static_cast<TokenId>(kReservedTokens + i));
  }
}

std::vector<TokenId> Vocab::encode(const std::string& text) const {
  std::vector<TokenId> ids;
  ids.reserve(text.size() / 3 + 4);
  for (const auto& [segment, is_word] : segment_text(text)) {
    (void)is_word;
    const auto it = word_ids_.find(segment);
    if (it != word_ids_.end()) {
      ids.push_back(it->second);
    } else {
      for (unsigned char byte : segment) {
        ids.push_back(kByteBase + byte);
      }
    }
  }
  return ids;
}

std::string Vocab::token_text(TokenId id) const {
  if (id >= size()) {
    fail(ErrorCode::InvalidTokenId,
         "id " + std::to_string(id) + " >= vocab size " + std::to_string(size()));
  }
  if (id >= kReservedTokens) return words_[id - kReservedTokens];
  if (id >= kByteBase) return std::string(1, static_cast<char>(id - kByteBase));
  return {};  // PAD / BOS / EOS / MASK
}

std::string Vocab::decode(const std::vector<TokenId>& ids) const {
  std::string out;
  for (TokenId id : ids) out += token_text(id);
  return out;
}

TokenId Vocab::word_bucket_id(const std::string& word) const {
  const auto it = word_ids_.find(word);
  if (it != word_ids_.end()) return it->second;
  return kByteBase + static_cast<TokenId>(fnv1a64_str(word) % 256);
}

void Vocab::save(const std::filesystem::path& path) const {
  Json j{{"words", words_}};
  write_file_atomic(path, j.dump(2) + "\n");
}

Vocab Vocab::load(const std::filesystem::path& path) {
  const Json j = Json::parse(read_file(path), nullptr, false);
  if (j.is_discarded() || !j.contains("words")) {
    fail(ErrorCode::ParseError, "malformed vocab file " + path.string());
  }
  Vocab v;
  v.words_ = j.at("words").get<std::vector<std::string>>();
  v.rebuild_index();
  return v;
}

TokenExample encode_pair(const Vocab& vocab, const instruct::InstructionPair& pair,
                         size_t context_len) {
  // The "\n" junction guarantees enc(prefix) + enc(completion) equals
  // enc(prefix + completion): segments never span it.
  const std::vector<TokenId> prefix = vocab.encode(pair.instruction + "\n");
  const std::vector<TokenId> completion = vocab.encode(pair.completion);

  TokenExample ex;
  ex.ids.push_back(kBosId);
  ex.ids.insert(ex.ids.end(), prefix.begin(), prefix.end());
  ex.target_mask.assign(ex.ids.size(), false);
  for (TokenId id : completion) {
    ex.ids.push_back(id);
    ex.target_mask.push_back(true);
  }
  ex.ids.push_back(kEosId);
  ex.target_mask.push_back(true);

  if (ex.ids.size() > context_len) {
    ex.ids.resize(context_len);
    ex.target_mask.resize(context_len);
  }
  return ex;
}

std::vector<TokenId> encode_word_sequence(const Vocab& vocab,
                                          const std::vector<std::string>& words,
                                          size_t context_len) {
  std::vector<TokenId> ids;
  ids.reserve(words.size() + 2);
  ids.push_back(kBosId);
  for (const auto& w : words) {
    if (ids.size() + 1 >= context_len) break;
    ids.push_back(vocab.word_bucket_id(w));
  }
  ids.push_back(kEosId);
  return ids;
}

std::vector<WordSpan> split_words(const std::string& text) {
  std::vector<WordSpan> words;
  for (size_t i = 0; i < text.size();) {
    if (!is_word_byte(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < text.size() && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
    words.push_back(WordSpan{text.substr(i, j - i), i, j});
    i = j;
  }
  return words;
}

}  // namespace dataclone::model
