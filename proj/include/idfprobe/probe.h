#pragma once

#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "idfprobe/bundle.h"
#include "idfprobe/idf_table.h"
#include "idfprobe/stats.h"

namespace idfprobe {

/// Which representation a probe reads: the input embeddings (index 0) or
/// encoder layer 1..L.
struct LayerTag {
  int index = 0;

  bool is_embedding() const { return index == 0; }
  /// "embedding" or "layer_<n>".
  std::string ToString() const;
  static LayerTag Parse(std::string_view text);
  std::string RecordName(std::string_view query_id) const;

  friend auto operator<=>(const LayerTag&, const LayerTag&) = default;
};

enum class Solver { kClosedForm, kSgd };
std::string_view ToString(Solver solver);
Solver ParseSolver(std::string_view text);

/// pred(z) = dot(weights, z) + bias.
struct LinearProbe {
  LayerTag layer;
  std::vector<double> weights;
  double bias = 0.0;
  Solver solver = Solver::kClosedForm;
  int epochs_run = 0;
  double train_loss = 0.0;
  double lambda = 0.0;
  std::uint64_t seed = 0;

  std::size_t dim() const { return weights.size(); }
  /// Throws std::invalid_argument on a dimension mismatch.
  double Predict(std::span<const double> z) const;
  double Predict(std::span<const float> z) const;

  /// {layer_tag, d, weights, bias, solver, seed, train_loss, epochs, lambda}
  nlohmann::ordered_json ToJson() const;
  static LinearProbe FromJson(const nlohmann::ordered_json& json);
};

/// Training samples grouped by query, so the loss can weight every query
/// equally whatever its token count.
struct QuerySamples {
  std::string query_id;
  std::vector<float> features;  // N x d, row-major
  std::vector<double> targets;  // N

  std::size_t size() const { return targets.size(); }
};

struct ProbeDataset {
  int dim = 0;
  std::vector<QuerySamples> queries;

  std::size_t token_count() const;
  /// Non-empty queries; the ones that contribute to the loss.
  std::size_t active_queries() const;
  /// One single-token query per sample.
  static ProbeDataset FromSamples(const std::vector<std::vector<double>>& z,
                                  const std::vector<double>& targets);
};

/// Mean over non-empty queries of the per-query mean squared error.
double ProbeObjective(std::span<const double> weights, double bias,
                      const ProbeDataset& data);
double ProbeObjective(const LinearProbe& probe, const ProbeDataset& data);

/// Gradient of the per-query-averaged loss restricted to `queries` (indices
/// into data.queries). Writes d weight partials then the bias partial into
/// `grad` (size dim + 1) and returns the loss.
double ObjectiveGradient(std::span<const double> weights, double bias,
                         const ProbeDataset& data,
                         std::span<const std::size_t> queries,
                         std::span<double> grad);

/// Minimizes ProbeObjective + lambda * |w|^2 exactly through the normal
/// equations. At lambda = 0 a rank-deficient system throws
/// std::runtime_error advising lambda > 0.
LinearProbe TrainProbeClosed(const ProbeDataset& data, double lambda,
                             LayerTag layer = {});

struct SgdConfig {
  double lr = 5e-5;
  std::size_t batch = 128;  // queries per step
  int max_epochs = 100;
  std::uint64_t seed = 42;
  int patience = 5;  // epochs without validation improvement; <= 0 disables
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam on the per-query-averaged loss, zero-initialized. Early-stops on
/// `valid` loss (when non-empty) and returns the best validation weights.
/// Throws std::runtime_error on a non-finite loss.
LinearProbe TrainProbeSgd(const ProbeDataset& train, const ProbeDataset& valid,
                          const SgdConfig& config, LayerTag layer = {});

/// Ground-truth IDF at the content positions of each bundle query.
using QueryTargets = std::unordered_map<std::string, std::vector<double>>;

QueryTargets TargetsFromBundle(const BundleManifest& manifest,
                               const IdfTable& idf);

/// Gathers the content positions of `which` from one representation.
/// Throws BundleError naming the query and layer when a tensor is missing.
ProbeDataset CollectSamples(const RecordSource& bundle, LayerTag layer,
                            const QueryTargets& targets,
                            const SplitAssignment& split, Split which);

struct LayerResult {
  LayerTag layer;
  CorrelationSummary summary;
  std::vector<QueryCorrelation> per_query;
  LinearProbe probe;
};

/// Per-query Pearson correlation between the probe's predictions and the
/// ground truth over content positions of `which`, then summarized.
LayerResult EvaluateProbe(const LinearProbe& probe, const RecordSource& bundle,
                          const QueryTargets& targets,
                          const SplitAssignment& split, Split which);

struct ProbeRunConfig {
  Solver solver = Solver::kClosedForm;
  /// Closed-form candidates; the one with the best validation mean wins.
  std::vector<double> lambdas = {1e-6};
  SgdConfig sgd;
  unsigned threads = 1;
};

struct ProbeReport {
  std::vector<LayerResult> layers;
  /// Ordered key/value pairs echoed into every emitted file.
  std::vector<std::pair<std::string, std::string>> config;
};

/// Trains one probe per representation (embedding, then layers 1..L) on the
/// train split, selects on valid, and reports on test.
ProbeReport ProbeAllLayers(const RecordSource& bundle,
                           const QueryTargets& targets,
                           const SplitAssignment& split,
                           const ProbeRunConfig& config);

}  // namespace idfprobe
