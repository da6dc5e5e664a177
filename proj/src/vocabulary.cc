#include "idfprobe/vocabulary.h"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace idfprobe {

std::string Sha256Hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                             &EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> entries)
    : entries_(std::move(entries)) {
  index_.reserve(entries_.size());
  std::string canonical;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto [it, inserted] =
        index_.emplace(entries_[i], static_cast<TokenId>(i));
    if (!inserted) {
      throw std::invalid_argument("duplicate vocabulary entry '" + entries_[i] +
                                  "' at line " + std::to_string(i + 1));
    }
    canonical += entries_[i];
    canonical += '\n';
  }
  auto require = [this](std::string_view name) {
    auto id = Find(name);
    if (!id) {
      throw std::invalid_argument("vocabulary lacks special token " +
                                  std::string(name));
    }
    return *id;
  };
  special_.unknown = require(kUnknown);
  special_.classifier = require(kClassifier);
  special_.separator = require(kSeparator);
  special_.pad = require(kPad);
  special_.mask = require(kMask);
  hash_ = Sha256Hex(canonical);
}

Vocabulary Vocabulary::FromText(std::string_view text) {
  std::vector<std::string> entries;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    entries.emplace_back(line);
    pos = eol + 1;
  }
  return Vocabulary(std::move(entries));
}

Vocabulary Vocabulary::FromFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vocabulary " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return FromText(buf.str());
}

std::optional<TokenId> Vocabulary::Find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool Vocabulary::IsStructural(TokenId id) const {
  return id == special_.classifier || id == special_.separator ||
         id == special_.pad || id == special_.mask;
}

}  // namespace idfprobe
