#include "idfprobe/queries.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "idfprobe/corpus.h"
#include "idfprobe/io_util.h"
#include "idfprobe/wordpiece.h"
#include "test_util.h"

namespace idfprobe {
namespace {

using ::idfprobe::testing::BertVocab;
using ::idfprobe::testing::DataPath;
using ::idfprobe::testing::ToyVocab;

Corpus ToyCorpus() {
  std::istringstream in(ReadFile(DataPath("toy_corpus.tsv")));
  return Corpus::FromTsv(in);
}

TEST(TokenizeQueryTest, WrapsPiecesInStructuralTokens) {
  const TokenizedQuery q = TokenizeQuery("q1", "Cats run", BertVocab());
  EXPECT_EQ(q.token_strings, (std::vector<std::string>{"[CLS]", "cats", "run", "[SEP]"}));
  EXPECT_EQ(q.content_mask, (std::vector<bool>{false, true, true, false}));
  EXPECT_EQ(q.content_count(), 2u);
  EXPECT_EQ(q.token_ids.front(), 101);
  EXPECT_EQ(q.token_ids.back(), 102);
}

TEST(TokenizeQueryTest, UnknownIsContentButLiteralSeparatorIsNot) {
  const Vocabulary v = ToyVocab({"a"});
  const TokenizedQuery q = TokenizeQuery("q", "a zz [SEP]", v);
  EXPECT_EQ(q.token_strings,
            (std::vector<std::string>{"[CLS]", "a", "[UNK]", "[SEP]", "[SEP]"}));
  EXPECT_EQ(q.content_mask, (std::vector<bool>{false, true, true, false, false}));
}

TEST(ReadQueriesTest, ParsesTsv) {
  std::istringstream in("1\twhat is idf\r\n\n2\ta\tb\n");
  const auto qs = ReadQueriesTsv(in);
  ASSERT_EQ(qs.size(), 2u);
  EXPECT_EQ(qs[0], (QueryText{"1", "what is idf"}));
  EXPECT_EQ(qs[1], (QueryText{"2", "a\tb"}));
  std::istringstream bad("1\tok\n\tno id\n");
  EXPECT_THROW(ReadQueriesTsv(bad), std::runtime_error);
}

class AnnotateTest : public ::testing::Test {
 protected:
  // |D| = 4: "a" in two documents, "b" in one, "c" in none.
  AnnotateTest()
      : vocab_(ToyVocab({"a", "b", "c"})),
        idf_(IdfTable::FromCounts({0, 0, 0, 0, 0, 2, 1, 0}, 4, vocab_.hash())) {}
  Vocabulary vocab_;
  IdfTable idf_;
};

TEST_F(AnnotateTest, ContentPositionsCarryIdf) {
  const Annotation a = AnnotateQueries({{"q", "a b"}}, vocab_, idf_);
  ASSERT_EQ(a.queries.size(), 1u);
  ASSERT_EQ(a.queries[0].idf.size(), 2u);
  EXPECT_NEAR(a.queries[0].idf[0], std::log(2.0), 1e-15);
  EXPECT_NEAR(a.queries[0].idf[1], std::log(4.0), 1e-15);
  EXPECT_EQ(a.unseen_occurrences, 0u);
}

TEST_F(AnnotateTest, AllUnknownTokens) {
  const Annotation a = AnnotateQueries({{"q", "c zz c"}}, vocab_, idf_);
  const std::vector<double> expected(3, UnseenIdf(4));
  EXPECT_EQ(a.queries[0].idf, expected);
  EXPECT_EQ(a.unseen_occurrences, 3u);
}

TEST_F(AnnotateTest, EmptyText) {
  const Annotation a = AnnotateQueries({{"q", ""}}, vocab_, idf_);
  EXPECT_EQ(a.queries[0].query.token_strings, (std::vector<std::string>{"[CLS]", "[SEP]"}));
  EXPECT_TRUE(a.queries[0].idf.empty());
}

TEST_F(AnnotateTest, RejectsDuplicateIdsAndForeignTables) {
  EXPECT_THROW(AnnotateQueries({{"q", "a"}, {"q", "b"}}, vocab_, idf_),
               std::invalid_argument);
  const IdfTable other = IdfTable::FromCounts(std::vector<std::int64_t>(8, 1), 4, "other");
  EXPECT_THROW(AnnotateQueries({{"q", "a"}}, vocab_, other), std::invalid_argument);
}

TEST(TfidfScoreTest, HandCheckedToyScore) {
  const Vocabulary& vocab = BertVocab();
  const IdfTable idf = BuildIdfTable(ToyCorpus(), vocab);
  const TokenizedQuery q = TokenizeQuery("q", "cat", vocab);
  // d2 mentions "cat" twice; df(cat) = 5 of 10 documents.
  const auto d2 = WordPieceTokenize("The dog chased the cat; the cat ran.", vocab);
  EXPECT_NEAR(TfidfScore(q, d2, idf), 2.0 * std::log(2.0), 1e-12);
  EXPECT_EQ(TfidfScore(q, WordPieceTokenize("A bird sang.", vocab), idf), 0.0);
}

TEST(TfidfScoreTest, RepeatedQueryTermsCountPerPosition) {
  const Vocabulary v = ToyVocab({"a", "b"});
  const IdfTable idf = IdfTable::FromCounts({0, 0, 0, 0, 0, 1, 2}, 2, v.hash());
  const TokenizedQuery q = TokenizeQuery("q", "a a b", v);
  const std::vector<TokenId> doc = {5, 6, 6, 6};
  EXPECT_NEAR(TfidfScore(q, doc, idf), 2.0 * std::log(2.0), 1e-15);
}

TEST(RankDocumentsTest, MatchesBruteForceOnToyCorpus) {
  const Vocabulary& vocab = BertVocab();
  const Corpus corpus = ToyCorpus();
  const IdfTable idf = BuildIdfTable(corpus, vocab);
  std::vector<std::vector<TokenId>> docs;
  for (const auto& d : corpus.documents()) docs.push_back(WordPieceTokenize(d.text, vocab));

  std::istringstream in(ReadFile(DataPath("toy_queries.tsv")));
  for (const auto& [id, text] : ReadQueriesTsv(in)) {
    const TokenizedQuery q = TokenizeQuery(id, text, vocab);
    std::vector<double> brute(docs.size(), 0.0);
    for (std::size_t d = 0; d < docs.size(); ++d) {
      for (std::size_t i = 0; i < q.token_ids.size(); ++i) {
        if (!q.content_mask[i]) continue;
        for (TokenId t : docs[d]) {
          if (t == q.token_ids[i]) brute[d] += idf.idf(t);
        }
      }
    }
    std::vector<std::size_t> order(docs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return brute[a] > brute[b]; });

    const auto ranked = RankDocuments(q, docs, idf);
    ASSERT_EQ(ranked.size(), docs.size());
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      EXPECT_EQ(ranked[r].index, order[r]) << id << " rank " << r;
      EXPECT_NEAR(ranked[r].score, brute[order[r]], 1e-12);
    }
  }
}

}  // namespace
}  // namespace idfprobe
