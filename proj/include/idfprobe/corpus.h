#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "idfprobe/idf_table.h"
#include "idfprobe/vocabulary.h"

namespace idfprobe {

struct Document {
  std::string id;
  std::string text;
};

/// The candidate document set D. Document ids are unique.
class Corpus {
 public:
  /// Throws std::invalid_argument on a repeated id.
  void Add(Document doc);
  std::size_t size() const { return documents_.size(); }
  const std::vector<Document>& documents() const { return documents_; }

  /// `doc-id<TAB>text` lines; malformed lines are reported with their
  /// line number.
  static Corpus FromTsv(std::istream& in);

 private:
  std::vector<Document> documents_;
  std::unordered_set<std::string> ids_;
};

/// Document-frequency counts over token ids. A token counts once per
/// document regardless of how often it occurs there. Counters built over
/// disjoint shards combine by Merge().
class DocumentFrequencyCounter {
 public:
  explicit DocumentFrequencyCounter(std::size_t vocab_size);

  void AddDocument(std::span<const TokenId> token_ids);
  void Merge(const DocumentFrequencyCounter& other);

  const std::vector<std::int64_t>& df() const { return df_; }
  std::int64_t documents() const { return documents_; }

 private:
  std::vector<std::int64_t> df_;
  std::vector<std::uint64_t> last_seen_;  // document stamp per token
  std::int64_t documents_ = 0;
};

struct IdfBuildOptions {
  unsigned threads = 1;
  std::size_t batch_size = 4096;
  /// Called after each batch with the running document count.
  std::function<void(std::int64_t)> progress;
};

/// Tokenizes every document and builds the ground-truth IDF table.
/// Throws std::invalid_argument("empty corpus") when |D| = 0.
IdfTable BuildIdfTable(const Corpus& corpus, const Vocabulary& vocab,
                       const IdfBuildOptions& options = {});

/// Streaming variant over a `doc-id<TAB>text` source; never holds more than
/// one batch of documents in memory. Enforces unique document ids.
IdfTable BuildIdfTableFromTsv(std::istream& in, const Vocabulary& vocab,
                              const IdfBuildOptions& options = {});

}  // namespace idfprobe
