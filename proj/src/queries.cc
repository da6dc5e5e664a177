#include "idfprobe/queries.h"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "idfprobe/io_util.h"
#include "idfprobe/wordpiece.h"

namespace idfprobe {

std::size_t TokenizedQuery::content_count() const {
  return static_cast<std::size_t>(
      std::count(content_mask.begin(), content_mask.end(), true));
}

std::vector<QueryText> ReadQueriesTsv(std::istream& in) {
  std::vector<QueryText> out;
  ForEachTsvRecord(in, [&](std::size_t, std::string_view id,
                           std::string_view text) {
    out.emplace_back(std::string(id), std::string(text));
  });
  return out;
}

TokenizedQuery TokenizeQuery(std::string query_id, std::string_view text,
                             const Vocabulary& vocab) {
  TokenizedQuery q;
  q.query_id = std::move(query_id);
  const auto pieces = WordPieceTokenize(text, vocab);
  q.token_ids.reserve(pieces.size() + 2);
  q.token_ids.push_back(vocab.special().classifier);
  q.token_ids.insert(q.token_ids.end(), pieces.begin(), pieces.end());
  q.token_ids.push_back(vocab.special().separator);
  for (TokenId id : q.token_ids) {
    q.token_strings.push_back(vocab.token(id));
    q.content_mask.push_back(!vocab.IsStructural(id));
  }
  return q;
}

std::vector<double> ContentIdf(std::span<const TokenId> token_ids,
                               const std::vector<bool>& content_mask,
                               const IdfTable& idf) {
  if (token_ids.size() != content_mask.size()) {
    throw std::invalid_argument("token ids and content mask differ in length");
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    if (content_mask[i]) out.push_back(idf.idf(token_ids[i]));
  }
  return out;
}

Annotation AnnotateQueries(const std::vector<QueryText>& queries,
                           const Vocabulary& vocab, const IdfTable& idf) {
  if (idf.size() != vocab.size() ||
      (!idf.vocab_hash().empty() && idf.vocab_hash() != vocab.hash())) {
    throw std::invalid_argument("IDF table was built from a different vocabulary");
  }
  Annotation result;
  std::unordered_set<std::string> seen;
  for (const auto& [id, text] : queries) {
    if (!seen.insert(id).second) {
      throw std::invalid_argument("duplicate query id '" + id + "'");
    }
    AnnotatedQuery aq;
    aq.query = TokenizeQuery(id, text, vocab);
    aq.idf = ContentIdf(aq.query.token_ids, aq.query.content_mask, idf);
    for (std::size_t i = 0; i < aq.query.token_ids.size(); ++i) {
      if (aq.query.content_mask[i] && idf.df(aq.query.token_ids[i]) == 0) {
        ++result.unseen_occurrences;
      }
    }
    result.queries.push_back(std::move(aq));
  }
  return result;
}

double TfidfScore(const TokenizedQuery& query,
                  std::span<const TokenId> doc_token_ids, const IdfTable& idf) {
  std::unordered_map<TokenId, std::int64_t> tf;
  for (std::size_t i = 0; i < query.token_ids.size(); ++i) {
    if (query.content_mask[i]) tf.emplace(query.token_ids[i], 0);
  }
  if (tf.empty()) return 0.0;
  for (TokenId id : doc_token_ids) {
    auto it = tf.find(id);
    if (it != tf.end()) ++it->second;
  }
  double score = 0.0;
  for (std::size_t i = 0; i < query.token_ids.size(); ++i) {
    if (!query.content_mask[i]) continue;
    const TokenId id = query.token_ids[i];
    score += idf.idf(id) * static_cast<double>(tf.at(id));
  }
  return score;
}

std::vector<ScoredDocument> RankDocuments(
    const TokenizedQuery& query,
    const std::vector<std::vector<TokenId>>& doc_token_ids,
    const IdfTable& idf) {
  std::vector<ScoredDocument> ranked;
  ranked.reserve(doc_token_ids.size());
  for (std::size_t i = 0; i < doc_token_ids.size(); ++i) {
    ranked.push_back({i, TfidfScore(query, doc_token_ids[i], idf)});
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const ScoredDocument& a, const ScoredDocument& b) {
                     return a.score > b.score;
                   });
  return ranked;
}

}  // namespace idfprobe
