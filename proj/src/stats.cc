#include "idfprobe/stats.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "idfprobe/rng.h"

namespace idfprobe {

std::string_view ToString(SkipReason reason) {
  switch (reason) {
    case SkipReason::kTooShort:
      return "too_short";
    case SkipReason::kZeroVariance:
      return "zero_variance";
  }
  return "unknown";
}

double Correlation::value() const {
  if (reason_) throw std::logic_error("correlation is undefined");
  return value_;
}

double StableMean(std::span<const double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pivot = values[0];
  double shifted = 0.0;
  for (double v : values) shifted += v - pivot;
  return pivot + shifted / static_cast<double>(values.size());
}

Correlation Pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw std::invalid_argument("pearson: length mismatch (" +
                                std::to_string(x.size()) + " vs " +
                                std::to_string(y.size()) + ")");
  }
  if (x.size() < 2) return Correlation::Undefined(SkipReason::kTooShort);
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double e) { return e == v[0]; });
  };
  if (constant(x) || constant(y)) {
    return Correlation::Undefined(SkipReason::kZeroVariance);
  }
  const double mx = StableMean(x);
  const double my = StableMean(y);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    return Correlation::Undefined(SkipReason::kZeroVariance);
  }
  const double r = sxy / std::sqrt(sxx * syy);
  return Correlation::Of(std::clamp(r, -1.0, 1.0));
}

CorrelationSummary Summarize(std::span<const QueryCorrelation> values) {
  CorrelationSummary s;
  std::vector<double> defined;
  defined.reserve(values.size());
  for (const auto& v : values) {
    if (v.value.defined()) {
      defined.push_back(v.value.value());
      continue;
    }
    ++s.skipped;
    if (v.value.reason() == SkipReason::kTooShort) {
      ++s.skipped_too_short;
    } else {
      ++s.skipped_zero_variance;
    }
  }
  s.count = defined.size();
  if (defined.empty()) {
    s.mean = s.std = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  s.mean = StableMean(defined);
  double ss = 0.0;
  for (double v : defined) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(defined.size()));
  return s;
}

std::string_view ToString(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kValid:
      return "valid";
    case Split::kTest:
      return "test";
  }
  return "unknown";
}

std::string_view ToString(SplitUnit unit) {
  return unit == SplitUnit::kQuery ? "query" : "token";
}

void SplitFractions::Validate() const {
  if (!(train > 0.0 && valid > 0.0 && test > 0.0)) {
    throw std::invalid_argument("split fractions must be positive");
  }
  if (std::abs(train + valid + test - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must sum to 1");
  }
}

SplitFractions SplitFractions::Parse(std::string_view text) {
  double parts[3];
  std::size_t n = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    if (n == 3) throw std::invalid_argument("split needs exactly three fractions");
    const std::string part(text.substr(pos, comma - pos));
    std::size_t used = 0;
    try {
      parts[n++] = std::stod(part, &used);
    } catch (const std::exception&) {
      used = std::string::npos;
    }
    if (used != part.size() || part.empty()) {
      throw std::invalid_argument("bad split fraction '" + part + "'");
    }
    pos = comma + 1;
  }
  if (n != 3) throw std::invalid_argument("split needs exactly three fractions");
  SplitFractions f{parts[0], parts[1], parts[2]};
  f.Validate();
  return f;
}

std::optional<Split> SplitAssignment::Of(const std::string& key) const {
  auto it = assignment_.find(key);
  if (it == assignment_.end()) return std::nullopt;
  return it->second;
}

std::size_t SplitAssignment::CountOf(Split split) const {
  return static_cast<std::size_t>(std::count_if(
      assignment_.begin(), assignment_.end(),
      [&](const auto& kv) { return kv.second == split; }));
}

bool SplitAssignment::Includes(const std::string& query_id, TokenId token,
                               Split which) const {
  const auto s = unit_ == SplitUnit::kQuery ? Of(query_id)
                                            : Of(std::to_string(token));
  return s && *s == which;
}

bool SplitAssignment::MayInclude(const std::string& query_id,
                                 Split which) const {
  if (unit_ == SplitUnit::kToken) return true;
  const auto s = Of(query_id);
  return s && *s == which;
}

std::string SplitAssignment::Fingerprint() const {
  std::string lines;
  for (const auto& [key, split] : assignment_) {
    lines += key;
    lines += '\t';
    lines += ToString(split);
    lines += '\n';
  }
  return Sha256Hex(lines);
}

SplitAssignment SplitKeys(std::vector<std::string> keys, std::uint64_t seed,
                          SplitFractions fractions, SplitUnit unit) {
  fractions.Validate();
  if (keys.empty()) throw std::invalid_argument("cannot split an empty id list");
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

  SplitMix64 rng(seed);
  for (std::size_t i = keys.size() - 1; i > 0; --i) {
    std::swap(keys[i], keys[rng.Below(i + 1)]);
  }
  const double n = static_cast<double>(keys.size());
  const auto train_end = std::min<std::size_t>(
      keys.size(), static_cast<std::size_t>(std::llround(n * fractions.train)));
  const auto valid_end = std::clamp<std::size_t>(
      static_cast<std::size_t>(
          std::llround(n * (fractions.train + fractions.valid))),
      train_end, keys.size());

  std::map<std::string, Split> assignment;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const Split s = i < train_end   ? Split::kTrain
                    : i < valid_end ? Split::kValid
                                    : Split::kTest;
    assignment.emplace(std::move(keys[i]), s);
  }
  return SplitAssignment(seed, fractions, unit, std::move(assignment));
}

SplitAssignment SplitQueries(std::vector<std::string> query_ids,
                             std::uint64_t seed, SplitFractions fractions) {
  return SplitKeys(std::move(query_ids), seed, fractions, SplitUnit::kQuery);
}

SplitAssignment SplitTokens(std::span<const TokenId> token_ids,
                            std::uint64_t seed, SplitFractions fractions) {
  std::vector<std::string> keys;
  keys.reserve(token_ids.size());
  for (TokenId id : token_ids) keys.push_back(std::to_string(id));
  return SplitKeys(std::move(keys), seed, fractions, SplitUnit::kToken);
}

}  // namespace idfprobe
