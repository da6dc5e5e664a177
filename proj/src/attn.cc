#include "idfprobe/attn.h"

#include <algorithm>
#include <cmath>
#include <map>

namespace idfprobe {
namespace {

struct HeadVectors {
  std::vector<std::vector<double>> weights;  // per head, content positions
  std::vector<double> idf;
  std::vector<TokenId> tokens;
};

// Attention rows and IDF restricted to the split's content positions.
HeadVectors Restrict(const RecordSource& bundle, const QueryEntry& q,
                     const QueryTargets& targets, const SplitAssignment& split,
                     Split which) {
  const auto tensor = bundle.LoadByName(AttentionRecordName(q.query_id));
  if (!tensor) {
    throw BundleError("query " + q.query_id + ": missing attention record");
  }
  const int heads = bundle.manifest().head_count;
  if (tensor->rows() != heads) {
    throw BundleError("query " + q.query_id + ": attention has " +
                      std::to_string(tensor->rows()) + " heads, expected " +
                      std::to_string(heads));
  }
  auto truth = targets.find(q.query_id);
  if (truth == targets.end()) {
    throw std::runtime_error("no ground-truth IDF for query " + q.query_id);
  }
  HeadVectors out;
  out.weights.resize(static_cast<std::size_t>(heads));
  std::size_t content = 0;
  for (std::size_t i = 0; i < q.length(); ++i) {
    if (!q.content_mask[i]) continue;
    if (content >= truth->second.size()) {
      throw std::runtime_error("query " + q.query_id +
                               ": IDF vector shorter than its content positions");
    }
    if (split.Includes(q.query_id, q.token_ids[i], which)) {
      for (int h = 0; h < heads; ++h) {
        out.weights[h].push_back(tensor->row(h)[i]);
      }
      out.idf.push_back(truth->second[content]);
      out.tokens.push_back(q.token_ids[i]);
    }
    ++content;
  }
  return out;
}

}  // namespace

HeadCorrelationReport HeadCorrelations(const RecordSource& bundle,
                                       const QueryTargets& targets,
                                       const SplitAssignment& split,
                                       Split which, double threshold) {
  const int heads = bundle.manifest().head_count;
  HeadCorrelationReport report;
  report.threshold = threshold;
  report.per_query.resize(static_cast<std::size_t>(heads));
  for (const QueryEntry& q : bundle.manifest().queries) {
    if (!split.MayInclude(q.query_id, which)) continue;
    const HeadVectors v = Restrict(bundle, q, targets, split, which);
    for (int h = 0; h < heads; ++h) {
      report.per_query[h].push_back({q.query_id, Pearson(v.weights[h], v.idf)});
    }
  }
  for (int h = 0; h < heads; ++h) {
    report.heads.push_back(Summarize(report.per_query[h]));
    const auto& s = report.heads.back();
    report.flagged.push_back(s.count > 0 && s.mean > threshold);
  }
  return report;
}

nlohmann::ordered_json AttentionExample::ToJson() const {
  nlohmann::ordered_json j{{"query_id", query_id},
                           {"head", head},
                           {"correlation", correlation}};
  if (!tokens.empty()) j["tokens"] = tokens;
  j["weights"] = weights;
  j["idf"] = idf;
  return j;
}

std::vector<AttentionExample> FindExamples(const RecordSource& bundle,
                                           const QueryTargets& targets,
                                           const SplitAssignment& split,
                                           Split which, double tau,
                                           const Vocabulary* vocab) {
  std::vector<AttentionExample> out;
  const int heads = bundle.manifest().head_count;
  for (const QueryEntry& q : bundle.manifest().queries) {
    if (!split.MayInclude(q.query_id, which)) continue;
    const HeadVectors v = Restrict(bundle, q, targets, split, which);
    for (int h = 0; h < heads; ++h) {
      const Correlation r = Pearson(v.weights[h], v.idf);
      if (!r.defined() || !(r.value() > tau)) continue;
      AttentionExample ex;
      ex.query_id = q.query_id;
      ex.head = h + 1;
      ex.correlation = r.value();
      ex.weights = v.weights[h];
      ex.idf = v.idf;
      if (vocab) {
        for (TokenId id : v.tokens) ex.tokens.push_back(vocab->token(id));
      }
      out.push_back(std::move(ex));
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.query_id != b.query_id ? a.query_id < b.query_id : a.head < b.head;
  });
  return out;
}

std::vector<CorrelationGap> FindModelGaps(const std::vector<QueryCorrelation>& first,
                                          const std::vector<QueryCorrelation>& second,
                                          double delta) {
  std::map<std::string, double> other;
  for (const auto& c : second) {
    if (c.value.defined()) other[c.query_id] = c.value.value();
  }
  std::vector<CorrelationGap> out;
  for (const auto& c : first) {
    if (!c.value.defined()) continue;
    auto it = other.find(c.query_id);
    if (it == other.end()) continue;
    CorrelationGap g{c.query_id, c.value.value(), it->second};
    if (std::abs(g.gap()) >= delta) out.push_back(g);
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.query_id < b.query_id; });
  return out;
}

}  // namespace idfprobe
