#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "idfprobe/vocabulary.h"

namespace idfprobe {

enum class SkipReason { kTooShort, kZeroVariance };

std::string_view ToString(SkipReason reason);

/// A Pearson coefficient, or the reason it is undefined.
class Correlation {
 public:
  static Correlation Of(double r) { return Correlation(r, std::nullopt); }
  static Correlation Undefined(SkipReason why) { return Correlation(0.0, why); }

  bool defined() const { return !reason_.has_value(); }
  double value() const;  // throws std::logic_error when undefined
  SkipReason reason() const { return *reason_; }

 private:
  Correlation(double r, std::optional<SkipReason> why) : value_(r), reason_(why) {}
  double value_;
  std::optional<SkipReason> reason_;
};

/// Product-moment correlation in float64. Undefined when there are fewer
/// than two points or either side is constant. Throws
/// std::invalid_argument on a length mismatch.
Correlation Pearson(std::span<const double> x, std::span<const double> y);

struct QueryCorrelation {
  std::string query_id;
  Correlation value;
};

/// Mean and population standard deviation over the defined correlations.
/// `mean` and `std` are NaN when count is 0.
struct CorrelationSummary {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
  std::size_t skipped = 0;
  std::size_t skipped_too_short = 0;
  std::size_t skipped_zero_variance = 0;
};

CorrelationSummary Summarize(std::span<const QueryCorrelation> values);

/// Arithmetic mean, shifted by the first element so n equal values
/// average to exactly that value.
double StableMean(std::span<const double> values);

enum class Split { kTrain, kValid, kTest };
enum class SplitUnit { kQuery, kToken };

std::string_view ToString(Split split);
std::string_view ToString(SplitUnit unit);

struct SplitFractions {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;

  /// "0.8,0.1,0.1". Throws std::invalid_argument unless three positive
  /// values sum to 1 within 1e-9.
  static SplitFractions Parse(std::string_view text);
  void Validate() const;
};

/// Deterministic train/valid/test partition. In query mode the keys are
/// query ids; in token mode they are decimal token ids and a (query,
/// position) pair belongs to the split of the token at that position.
class SplitAssignment {
 public:
  SplitAssignment(std::uint64_t seed, SplitFractions fractions, SplitUnit unit,
                  std::map<std::string, Split> assignment)
      : seed_(seed),
        fractions_(fractions),
        unit_(unit),
        assignment_(std::move(assignment)) {}

  std::uint64_t seed() const { return seed_; }
  const SplitFractions& fractions() const { return fractions_; }
  SplitUnit unit() const { return unit_; }
  const std::map<std::string, Split>& assignment() const { return assignment_; }

  std::optional<Split> Of(const std::string& key) const;
  std::size_t CountOf(Split split) const;

  /// Whether position `token` of `query_id` takes part in `which`.
  bool Includes(const std::string& query_id, TokenId token, Split which) const;
  /// Whether `query_id` can contribute any position to `which`.
  bool MayInclude(const std::string& query_id, Split which) const;

  /// SHA-256 over sorted "key<TAB>split\n" lines; pins assignments in tests.
  std::string Fingerprint() const;

 private:
  std::uint64_t seed_;
  SplitFractions fractions_;
  SplitUnit unit_;
  std::map<std::string, Split> assignment_;
};

/// Sorts and de-duplicates the keys, Fisher-Yates shuffles them with
/// SplitMix64(seed), then cuts at round(n*train) and round(n*(train+valid)).
/// Throws std::invalid_argument on an empty key list.
SplitAssignment SplitKeys(std::vector<std::string> keys, std::uint64_t seed,
                          SplitFractions fractions, SplitUnit unit);

SplitAssignment SplitQueries(std::vector<std::string> query_ids,
                             std::uint64_t seed, SplitFractions fractions);

/// Token-level partition over the distinct token ids given.
SplitAssignment SplitTokens(std::span<const TokenId> token_ids,
                            std::uint64_t seed, SplitFractions fractions);

}  // namespace idfprobe
