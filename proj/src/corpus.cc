#include "idfprobe/corpus.h"

#include <algorithm>
#include <stdexcept>
#include <thread>

#include "idfprobe/io_util.h"
#include "idfprobe/wordpiece.h"

namespace idfprobe {

void Corpus::Add(Document doc) {
  if (!ids_.insert(doc.id).second) {
    throw std::invalid_argument("duplicate document id '" + doc.id + "'");
  }
  documents_.push_back(std::move(doc));
}

Corpus Corpus::FromTsv(std::istream& in) {
  Corpus corpus;
  ForEachTsvRecord(in, [&](std::size_t line, std::string_view id,
                           std::string_view text) {
    if (corpus.ids_.count(std::string(id))) {
      throw std::runtime_error("line " + std::to_string(line) +
                               ": duplicate document id '" + std::string(id) +
                               "'");
    }
    corpus.Add(Document{std::string(id), std::string(text)});
  });
  return corpus;
}

DocumentFrequencyCounter::DocumentFrequencyCounter(std::size_t vocab_size)
    : df_(vocab_size, 0), last_seen_(vocab_size, 0) {}

void DocumentFrequencyCounter::AddDocument(std::span<const TokenId> token_ids) {
  const std::uint64_t stamp = static_cast<std::uint64_t>(++documents_);
  for (TokenId id : token_ids) {
    auto& seen = last_seen_.at(static_cast<std::size_t>(id));
    if (seen != stamp) {
      seen = stamp;
      ++df_[id];
    }
  }
}

void DocumentFrequencyCounter::Merge(const DocumentFrequencyCounter& other) {
  if (other.df_.size() != df_.size()) {
    throw std::invalid_argument("merging counters of different vocab sizes");
  }
  for (std::size_t i = 0; i < df_.size(); ++i) df_[i] += other.df_[i];
  documents_ += other.documents_;
}

namespace {

// Tokenizes one batch, spreading contiguous slices over the counters.
void CountBatch(const std::vector<std::string_view>& texts,
                const WordPieceTokenizer& tokenizer,
                std::vector<DocumentFrequencyCounter>& counters) {
  const std::size_t workers =
      std::min<std::size_t>(counters.size(), std::max<std::size_t>(texts.size(), 1));
  auto work = [&](std::size_t w) {
    const std::size_t begin = texts.size() * w / workers;
    const std::size_t end = texts.size() * (w + 1) / workers;
    for (std::size_t i = begin; i < end; ++i) {
      counters[w].AddDocument(tokenizer.Encode(texts[i]));
    }
  };
  if (workers <= 1) {
    work(0);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
}

IdfTable Finish(std::vector<DocumentFrequencyCounter>& counters,
                const Vocabulary& vocab) {
  DocumentFrequencyCounter total(vocab.size());
  for (const auto& c : counters) total.Merge(c);
  if (total.documents() == 0) throw std::invalid_argument("empty corpus");
  return IdfTable::FromCounts(total.df(), total.documents(), vocab.hash());
}

}  // namespace

IdfTable BuildIdfTable(const Corpus& corpus, const Vocabulary& vocab,
                       const IdfBuildOptions& options) {
  if (corpus.size() == 0) throw std::invalid_argument("empty corpus");
  const WordPieceTokenizer tokenizer(vocab);
  std::vector<DocumentFrequencyCounter> counters(
      std::max(1u, options.threads), DocumentFrequencyCounter(vocab.size()));
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
  std::vector<std::string_view> texts;
  for (std::size_t start = 0; start < corpus.size(); start += batch) {
    texts.clear();
    const std::size_t end = std::min(corpus.size(), start + batch);
    for (std::size_t i = start; i < end; ++i) {
      texts.push_back(corpus.documents()[i].text);
    }
    CountBatch(texts, tokenizer, counters);
    if (options.progress) options.progress(static_cast<std::int64_t>(end));
  }
  return Finish(counters, vocab);
}

IdfTable BuildIdfTableFromTsv(std::istream& in, const Vocabulary& vocab,
                              const IdfBuildOptions& options) {
  const WordPieceTokenizer tokenizer(vocab);
  std::vector<DocumentFrequencyCounter> counters(
      std::max(1u, options.threads), DocumentFrequencyCounter(vocab.size()));
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
  std::unordered_set<std::string> ids;
  std::vector<std::string> pending;
  std::vector<std::string_view> texts;
  std::int64_t seen = 0;

  auto flush = [&] {
    texts.assign(pending.begin(), pending.end());
    CountBatch(texts, tokenizer, counters);
    seen += static_cast<std::int64_t>(pending.size());
    pending.clear();
    if (options.progress) options.progress(seen);
  };
  ForEachTsvRecord(in, [&](std::size_t line, std::string_view id,
                           std::string_view text) {
    if (!ids.emplace(id).second) {
      throw std::runtime_error("line " + std::to_string(line) +
                               ": duplicate document id '" + std::string(id) +
                               "'");
    }
    pending.emplace_back(text);
    if (pending.size() >= batch) flush();
  });
  if (!pending.empty()) flush();
  return Finish(counters, vocab);
}

}  // namespace idfprobe
