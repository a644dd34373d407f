#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "dataclone/corpus.hpp"
#include "dataclone/instruct.hpp"

namespace dataclone::model {

using TokenId = uint32_t;

// Reserved ids occupy the lowest slots; byte tokens make encoding total over
// arbitrary UTF-8.
inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kBosId = 1;
inline constexpr TokenId kEosId = 2;
inline constexpr TokenId kMaskId = 3;
inline constexpr TokenId kByteBase = 4;
inline constexpr size_t kReservedTokens = 4 + 256;

// Word-level vocabulary with byte fallback. Tokens are maximal alnum runs or
// single non-alnum characters, ranked by descending frequency over the
// building text (ties lexicographic). The pipeline builds it from the public
// lexicon and template text only, never from the private training corpus.
class Vocab {
 public:
  static Vocab build_from_texts(const std::vector<std::string>& texts, size_t max_size);
  static Vocab build(const std::vector<corpus::Note>& notes, size_t max_size);
  // Lexicons + shipped sentence skeletons + template bodies.
  static Vocab build_public(const std::vector<instruct::Template>& templates, size_t max_size);

  size_t size() const { return kReservedTokens + words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  std::vector<TokenId> encode(const std::string& text) const;
  std::string decode(const std::vector<TokenId>& ids) const;

  // The string for one id; control tokens decode to "".
  std::string token_text(TokenId id) const;

  // Fixed one-id-per-word encoding for the tagging/MLM lane: the word's vocab
  // id when present, otherwise a deterministic byte-bucket id.
  TokenId word_bucket_id(const std::string& word) const;

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> words_;                     // id = kReservedTokens + index
  std::unordered_map<std::string, TokenId> word_ids_;  // token string -> id

  void rebuild_index();
};

// Splits text into tokenizer segments: (segment, is_word) in order.
std::vector<std::pair<std::string, bool>> segment_text(const std::string& text);

// One training example: full token sequence and per-token target mask
// (true = the token is scored as a prediction target).
struct TokenExample {
  std::vector<TokenId> ids;
  std::vector<bool> target_mask;
};

// BOS + instruction + "\n" + completion + EOS, mask covering the completion
// and EOS. Truncated to context_len total tokens.
TokenExample encode_pair(const Vocab& vocab, const instruct::InstructionPair& pair,
                         size_t context_len);

// BOS + one bucket id per word + EOS for the encoder lane.
std::vector<TokenId> encode_word_sequence(const Vocab& vocab,
                                          const std::vector<std::string>& words,
                                          size_t context_len);

// Splits text into whitespace/punctuation-delimited words with char offsets.
struct WordSpan {
  std::string word;
  size_t start = 0;
  size_t end = 0;
};
std::vector<WordSpan> split_words(const std::string& text);

}  // namespace dataclone::model
