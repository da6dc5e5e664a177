#pragma once

#include <istream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "idfprobe/idf_table.h"
#include "idfprobe/vocabulary.h"

namespace idfprobe {

/// A query as the encoder sees it: [CLS] pieces... [SEP]. The content mask
/// is false on structural special tokens and true elsewhere.
struct TokenizedQuery {
  std::string query_id;
  std::vector<TokenId> token_ids;
  std::vector<std::string> token_strings;
  std::vector<bool> content_mask;

  /// N, the number of content positions.
  std::size_t content_count() const;
};

struct AnnotatedQuery {
  TokenizedQuery query;
  /// Ground-truth IDF at each content position, in position order.
  std::vector<double> idf;
};

struct Annotation {
  std::vector<AnnotatedQuery> queries;
  /// Content positions whose token never occurs in the corpus.
  std::size_t unseen_occurrences = 0;
};

using QueryText = std::pair<std::string, std::string>;  // (id, text)

/// `query-id<TAB>text` lines.
std::vector<QueryText> ReadQueriesTsv(std::istream& in);

TokenizedQuery TokenizeQuery(std::string query_id, std::string_view text,
                             const Vocabulary& vocab);

/// Throws std::invalid_argument on duplicate query ids or when the table was
/// built from a different vocabulary.
Annotation AnnotateQueries(const std::vector<QueryText>& queries,
                           const Vocabulary& vocab, const IdfTable& idf);

/// IDF values at the content positions of a token sequence.
std::vector<double> ContentIdf(std::span<const TokenId> token_ids,
                               const std::vector<bool>& content_mask,
                               const IdfTable& idf);

/// Literal IDF-weighted term-frequency score: sum over content positions i of
/// idf(q_i) * count(q_i in doc). No saturation or length normalization.
double TfidfScore(const TokenizedQuery& query,
                  std::span<const TokenId> doc_token_ids, const IdfTable& idf);

struct ScoredDocument {
  std::size_t index;
  double score;
};

/// Scores every document; sorted by descending score, ties by index.
std::vector<ScoredDocument> RankDocuments(
    const TokenizedQuery& query,
    const std::vector<std::vector<TokenId>>& doc_token_ids,
    const IdfTable& idf);

}  // namespace idfprobe
