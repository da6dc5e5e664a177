#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "idfprobe/vocabulary.h"

namespace idfprobe {

/// Uncased BERT tokenization: text cleanup, CJK isolation, lowercasing,
/// accent stripping, whitespace/punctuation splitting, then greedy
/// longest-match-first WordPiece with "##" continuation pieces.
///
/// Literal occurrences of the special-token strings ("[CLS]", "[SEP]", ...)
/// are kept atomic, as the reference tokenizer does. The tokenizer holds a
/// reference to the vocabulary, which must outlive it.
class WordPieceTokenizer {
 public:
  static constexpr std::size_t kMaxCharsPerWord = 100;

  explicit WordPieceTokenizer(const Vocabulary& vocab,
                              std::size_t max_chars_per_word = kMaxCharsPerWord)
      : vocab_(&vocab), max_chars_per_word_(max_chars_per_word) {}

  /// Total: never throws on malformed UTF-8 (invalid sequences are dropped).
  std::vector<TokenId> Encode(std::string_view text) const;

  /// Normalized, split words before WordPiece. Special-token literals are
  /// returned verbatim.
  std::vector<std::string> PreTokenize(std::string_view text) const;

  const Vocabulary& vocab() const { return *vocab_; }

 private:
  void EncodeWord(const std::string& word, std::vector<TokenId>& out) const;

  const Vocabulary* vocab_;
  std::size_t max_chars_per_word_;
};

std::vector<TokenId> WordPieceTokenize(std::string_view text,
                                       const Vocabulary& vocab);

/// Inverse mapping for inspection: ids to their vocabulary strings.
std::vector<std::string> IdsToTokens(const std::vector<TokenId>& ids,
                                     const Vocabulary& vocab);

}  // namespace idfprobe
