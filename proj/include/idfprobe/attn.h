#pragma once

#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "idfprobe/bundle.h"
#include "idfprobe/probe.h"
#include "idfprobe/stats.h"

namespace idfprobe {

inline constexpr double kDefaultDisplayThreshold = 0.3;
inline constexpr double kDefaultModelDelta = 0.10;

struct HeadCorrelationReport {
  /// Index h-1 holds head h. Heads are 1-based everywhere outside this vector.
  std::vector<CorrelationSummary> heads;
  /// per_query[h-1] lists every query of the split in manifest order.
  std::vector<std::vector<QueryCorrelation>> per_query;
  /// Heads whose mean correlation exceeds `threshold`.
  std::vector<bool> flagged;
  double threshold = kDefaultDisplayThreshold;

  std::size_t head_count() const { return heads.size(); }
};

/// For every query of `which` and every last-layer head, the Pearson
/// correlation between the CLS attention row and the IDF vector, both
/// restricted to the content positions of the split. Throws BundleError when
/// a query lacks its attention record or head counts disagree.
HeadCorrelationReport HeadCorrelations(const RecordSource& bundle,
                                       const QueryTargets& targets,
                                       const SplitAssignment& split,
                                       Split which,
                                       double threshold = kDefaultDisplayThreshold);

struct AttentionExample {
  std::string query_id;
  int head = 0;  // 1-based
  double correlation = 0.0;
  std::vector<std::string> tokens;  // empty unless a vocabulary was supplied
  std::vector<double> weights;      // attention on content positions
  std::vector<double> idf;

  nlohmann::ordered_json ToJson() const;
};

/// (query, head) pairs whose per-query correlation exceeds `tau`, ordered by
/// query id then head, with the attention weights and IDF they were computed
/// from. `vocab` may be null.
std::vector<AttentionExample> FindExamples(const RecordSource& bundle,
                                           const QueryTargets& targets,
                                           const SplitAssignment& split,
                                           Split which, double tau,
                                           const Vocabulary* vocab = nullptr);

struct CorrelationGap {
  std::string query_id;
  double first = 0.0;
  double second = 0.0;
  double gap() const { return first - second; }
};

/// Queries defined in both lists whose correlations differ by at least
/// `delta` in absolute value, ordered by query id.
std::vector<CorrelationGap> FindModelGaps(const std::vector<QueryCorrelation>& first,
                                          const std::vector<QueryCorrelation>& second,
                                          double delta = kDefaultModelDelta);

}  // namespace idfprobe
