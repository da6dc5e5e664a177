#include "idfprobe/idf_table.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

#include "idfprobe/io_util.h"

namespace idfprobe {

double UnseenIdf(std::int64_t corpus_size) {
  return -std::log(0.5 / (static_cast<double>(corpus_size) + 1.0));
}

IdfTable IdfTable::FromCounts(std::vector<std::int64_t> df,
                              std::int64_t corpus_size,
                              std::string vocab_hash) {
  if (corpus_size < 1) throw std::invalid_argument("empty corpus");
  IdfTable t;
  t.corpus_size_ = corpus_size;
  t.unseen_value_ = UnseenIdf(corpus_size);
  t.vocab_hash_ = std::move(vocab_hash);
  t.values_.resize(df.size());
  const double docs = static_cast<double>(corpus_size);
  for (std::size_t i = 0; i < df.size(); ++i) {
    if (df[i] < 0 || df[i] > corpus_size) {
      throw std::invalid_argument("document frequency out of range for token " +
                                  std::to_string(i));
    }
    if (df[i] == 0) {
      t.values_[i] = t.unseen_value_;
    } else {
      const double v = -std::log(static_cast<double>(df[i]) / docs);
      t.values_[i] = v == 0.0 ? 0.0 : v;  // no -0
    }
  }
  t.df_ = std::move(df);
  return t;
}

std::size_t IdfTable::unseen_count() const {
  std::size_t n = 0;
  for (auto d : df_) n += d == 0;
  return n;
}

std::string IdfTable::ToJson() const {
  std::string out;
  out.reserve(64 + values_.size() * 40);
  out += "{\"corpus_size\": " + std::to_string(corpus_size_);
  out += ", \"unseen_value\": " + FormatExact(unseen_value_);
  out += ", \"vocab_hash\": \"" + vocab_hash_ + "\"";
  out += ", \"vocab_size\": " + std::to_string(values_.size());
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config_) config[k] = v;
  out += ", \"config\": " + config.dump();
  out += ", \"entries\": [";
  for (std::size_t i = 0; i < values_.size(); ++i) {
    out += i == 0 ? "\n" : ",\n";
    out += "[" + std::to_string(i) + ", " + std::to_string(df_[i]) + ", " +
           FormatExact(values_[i]) + "]";
  }
  out += "\n]}\n";
  return out;
}

IdfTable IdfTable::FromJson(std::string_view json) {
  const auto doc = nlohmann::ordered_json::parse(json);
  IdfTable t;
  t.corpus_size_ = doc.at("corpus_size").get<std::int64_t>();
  t.unseen_value_ = doc.at("unseen_value").get<double>();
  t.vocab_hash_ = doc.value("vocab_hash", std::string());
  if (doc.contains("config")) {
    for (const auto& [k, v] : doc.at("config").items()) {
      t.config_.emplace_back(k, v.get<std::string>());
    }
  }
  const auto& entries = doc.at("entries");
  const std::size_t n = doc.value("vocab_size", entries.size());
  if (entries.size() != n) {
    throw std::runtime_error("idf table: vocab_size does not match entries");
  }
  t.values_.assign(n, t.unseen_value_);
  t.df_.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = entries[i];
    const auto id = e.at(0).get<std::int64_t>();
    if (id != static_cast<std::int64_t>(i)) {
      throw std::runtime_error("idf table: entry " + std::to_string(i) +
                               " has token id " + std::to_string(id));
    }
    t.df_[i] = e.at(1).get<std::int64_t>();
    t.values_[i] = e.at(2).get<double>();
    if (t.df_[i] < 0 || t.df_[i] > t.corpus_size_) {
      throw std::runtime_error("idf table: df out of range at token " +
                               std::to_string(i));
    }
  }
  return t;
}

void IdfTable::Save(const std::filesystem::path& path) const {
  WriteFileAtomic(path, ToJson());
}

IdfTable IdfTable::Load(const std::filesystem::path& path) {
  return FromJson(ReadFile(path));
}

}  // namespace idfprobe
