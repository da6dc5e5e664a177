#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace idfprobe {

using TokenId = std::int32_t;

/// Ids of the five special tokens every WordPiece vocabulary must carry.
struct SpecialTokens {
  TokenId unknown = -1;
  TokenId classifier = -1;
  TokenId separator = -1;
  TokenId pad = -1;
  TokenId mask = -1;
};

/// Immutable WordPiece vocabulary. Ids are dense 0..size()-1 and follow the
/// line order of the vocab file.
class Vocabulary {
 public:
  static constexpr std::string_view kUnknown = "[UNK]";
  static constexpr std::string_view kClassifier = "[CLS]";
  static constexpr std::string_view kSeparator = "[SEP]";
  static constexpr std::string_view kPad = "[PAD]";
  static constexpr std::string_view kMask = "[MASK]";

  /// Throws std::invalid_argument on duplicate entries or a missing or
  /// repeated special token.
  explicit Vocabulary(std::vector<std::string> entries);

  /// One token per line; line number (0-based) is the token id.
  static Vocabulary FromFile(const std::filesystem::path& path);
  static Vocabulary FromText(std::string_view text);

  std::size_t size() const { return entries_.size(); }
  const std::string& token(TokenId id) const { return entries_.at(id); }
  const std::vector<std::string>& entries() const { return entries_; }
  std::optional<TokenId> Find(std::string_view token) const;
  const SpecialTokens& special() const { return special_; }

  /// True for [CLS], [SEP], [PAD] and [MASK]. [UNK] stands in for a real
  /// query word and is treated as content.
  bool IsStructural(TokenId id) const;

  /// Lowercase hex SHA-256 of the canonical file bytes: every entry followed
  /// by '\n'. Equal to the hash of a standard newline-terminated vocab file.
  const std::string& hash() const { return hash_; }

 private:
  std::vector<std::string> entries_;
  std::unordered_map<std::string, TokenId> index_;
  SpecialTokens special_;
  std::string hash_;
};

/// Hex SHA-256 of arbitrary bytes.
std::string Sha256Hex(std::string_view bytes);

}  // namespace idfprobe
