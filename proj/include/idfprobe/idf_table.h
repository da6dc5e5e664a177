#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "idfprobe/vocabulary.h"

namespace idfprobe {

/// IDF assigned to tokens that occur in no document: -ln(0.5 / (|D| + 1)).
double UnseenIdf(std::int64_t corpus_size);

/// Ground-truth IDF per token id, in natural-log units:
/// idf(x) = -ln(df(x) / |D|) for df(x) >= 1, UnseenIdf(|D|) otherwise.
class IdfTable {
 public:
  IdfTable() = default;

  /// Throws std::invalid_argument if corpus_size < 1 or some df is negative
  /// or exceeds corpus_size.
  static IdfTable FromCounts(std::vector<std::int64_t> df,
                             std::int64_t corpus_size, std::string vocab_hash);

  std::size_t size() const { return values_.size(); }
  double idf(TokenId id) const { return values_.at(id); }
  std::int64_t df(TokenId id) const { return df_.at(id); }
  const std::vector<double>& values() const { return values_; }
  const std::vector<std::int64_t>& document_frequencies() const { return df_; }
  std::int64_t corpus_size() const { return corpus_size_; }
  double unseen_value() const { return unseen_value_; }
  const std::string& vocab_hash() const { return vocab_hash_; }
  std::size_t unseen_count() const;

  /// Run configuration echoed into the saved file under "config".
  const std::vector<std::pair<std::string, std::string>>& config() const {
    return config_;
  }
  void set_config(std::vector<std::pair<std::string, std::string>> c) {
    config_ = std::move(c);
  }

  /// JSON object {corpus_size, unseen_value, vocab_hash, vocab_size, config,
  /// entries: [[token_id, df, idf], ...]}. Reals carry 17 significant
  /// digits so a save/load cycle is bit-exact.
  std::string ToJson() const;
  static IdfTable FromJson(std::string_view json);

  void Save(const std::filesystem::path& path) const;
  static IdfTable Load(const std::filesystem::path& path);

  friend bool operator==(const IdfTable&, const IdfTable&) = default;

 private:
  std::vector<double> values_;
  std::vector<std::int64_t> df_;
  std::int64_t corpus_size_ = 0;
  double unseen_value_ = 0.0;
  std::string vocab_hash_;
  std::vector<std::pair<std::string, std::string>> config_;
};

}  // namespace idfprobe
