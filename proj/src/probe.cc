#include "idfprobe/probe.h"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "idfprobe/queries.h"
#include "idfprobe/rng.h"

namespace idfprobe {
namespace {

template <typename T>
double Dot(std::span<const double> w, std::span<const T> z) {
  double acc = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) acc += w[j] * static_cast<double>(z[j]);
  return acc;
}

std::span<const float> Row(const QuerySamples& q, int d, std::size_t i) {
  return std::span<const float>(q.features)
      .subspan(i * static_cast<std::size_t>(d), static_cast<std::size_t>(d));
}

double QueryLoss(std::span<const double> w, double b, const QuerySamples& q,
                 int d) {
  double acc = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double r = Dot(w, Row(q, d, i)) + b - q.targets[i];
    acc += r * r;
  }
  return acc / static_cast<double>(q.size());
}

}  // namespace

std::string LayerTag::ToString() const {
  return is_embedding() ? "embedding" : "layer_" + std::to_string(index);
}

LayerTag LayerTag::Parse(std::string_view text) {
  if (text == "embedding") return LayerTag{0};
  constexpr std::string_view kPrefix = "layer_";
  if (text.substr(0, kPrefix.size()) == kPrefix) {
    const std::string digits(text.substr(kPrefix.size()));
    std::size_t used = 0;
    int n = -1;
    try {
      n = std::stoi(digits, &used);
    } catch (const std::exception&) {
    }
    if (n >= 1 && used == digits.size()) return LayerTag{n};
  }
  throw std::invalid_argument("bad layer tag '" + std::string(text) + "'");
}

std::string LayerTag::RecordName(std::string_view query_id) const {
  return is_embedding() ? EmbeddingRecordName(query_id)
                        : LayerRecordName(query_id, index);
}

std::string_view ToString(Solver solver) {
  return solver == Solver::kClosedForm ? "closed" : "sgd";
}

Solver ParseSolver(std::string_view text) {
  if (text == "closed") return Solver::kClosedForm;
  if (text == "sgd") return Solver::kSgd;
  throw std::invalid_argument("unknown solver '" + std::string(text) + "'");
}

double LinearProbe::Predict(std::span<const double> z) const {
  if (z.size() != weights.size()) {
    throw std::invalid_argument("probe expects dimension " +
                                std::to_string(weights.size()) + ", got " +
                                std::to_string(z.size()));
  }
  return Dot(weights, z) + bias;
}

double LinearProbe::Predict(std::span<const float> z) const {
  if (z.size() != weights.size()) {
    throw std::invalid_argument("probe expects dimension " +
                                std::to_string(weights.size()) + ", got " +
                                std::to_string(z.size()));
  }
  return Dot(weights, z) + bias;
}

nlohmann::ordered_json LinearProbe::ToJson() const {
  return nlohmann::ordered_json{{"layer_tag", layer.ToString()},
                                {"d", weights.size()},
                                {"weights", weights},
                                {"bias", bias},
                                {"solver", ToString(solver)},
                                {"seed", seed},
                                {"train_loss", train_loss},
                                {"epochs", epochs_run},
                                {"lambda", lambda}};
}

LinearProbe LinearProbe::FromJson(const nlohmann::ordered_json& json) {
  LinearProbe p;
  p.layer = LayerTag::Parse(json.at("layer_tag").get<std::string>());
  p.weights = json.at("weights").get<std::vector<double>>();
  if (json.at("d").get<std::size_t>() != p.weights.size()) {
    throw std::invalid_argument("probe file: d does not match weights");
  }
  p.bias = json.at("bias").get<double>();
  p.solver = ParseSolver(json.at("solver").get<std::string>());
  p.seed = json.value("seed", std::uint64_t{0});
  p.train_loss = json.value("train_loss", 0.0);
  p.epochs_run = json.value("epochs", 0);
  p.lambda = json.value("lambda", 0.0);
  return p;
}

std::size_t ProbeDataset::token_count() const {
  std::size_t n = 0;
  for (const auto& q : queries) n += q.size();
  return n;
}

std::size_t ProbeDataset::active_queries() const {
  return static_cast<std::size_t>(std::count_if(
      queries.begin(), queries.end(), [](const auto& q) { return q.size() > 0; }));
}

ProbeDataset ProbeDataset::FromSamples(const std::vector<std::vector<double>>& z,
                                       const std::vector<double>& targets) {
  if (z.size() != targets.size()) {
    throw std::invalid_argument("sample and target counts differ");
  }
  ProbeDataset data;
  data.dim = z.empty() ? 0 : static_cast<int>(z[0].size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (static_cast<int>(z[i].size()) != data.dim) {
      throw std::invalid_argument("ragged sample dimensions");
    }
    QuerySamples q;
    q.query_id = std::to_string(i);
    q.features.assign(z[i].begin(), z[i].end());
    q.targets.push_back(targets[i]);
    data.queries.push_back(std::move(q));
  }
  return data;
}

double ProbeObjective(std::span<const double> weights, double bias,
                      const ProbeDataset& data) {
  double total = 0.0;
  std::size_t active = 0;
  for (const auto& q : data.queries) {
    if (q.size() == 0) continue;
    total += QueryLoss(weights, bias, q, data.dim);
    ++active;
  }
  return active == 0 ? 0.0 : total / static_cast<double>(active);
}

double ProbeObjective(const LinearProbe& probe, const ProbeDataset& data) {
  return ProbeObjective(probe.weights, probe.bias, data);
}

double ObjectiveGradient(std::span<const double> weights, double bias,
                         const ProbeDataset& data,
                         std::span<const std::size_t> queries,
                         std::span<double> grad) {
  const int d = data.dim;
  if (grad.size() != static_cast<std::size_t>(d) + 1 ||
      weights.size() != static_cast<std::size_t>(d)) {
    throw std::invalid_argument("gradient buffer has the wrong size");
  }
  std::fill(grad.begin(), grad.end(), 0.0);
  double loss = 0.0;
  std::size_t active = 0;
  for (std::size_t qi : queries) {
    const QuerySamples& q = data.queries.at(qi);
    if (q.size() == 0) continue;
    ++active;
    const double scale = 2.0 / static_cast<double>(q.size());
    double q_loss = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const auto z = Row(q, d, i);
      const double r = Dot(weights, z) + bias - q.targets[i];
      q_loss += r * r;
      for (int j = 0; j < d; ++j) grad[j] += scale * r * z[j];
      grad[d] += scale * r;
    }
    loss += q_loss / static_cast<double>(q.size());
  }
  if (active == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(active);
  for (double& g : grad) g *= inv;
  return loss * inv;
}

LinearProbe TrainProbeClosed(const ProbeDataset& data, double lambda,
                             LayerTag layer) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  const int d = data.dim;
  const std::size_t active = data.active_queries();
  if (active == 0) throw std::invalid_argument("no training samples");
  if (lambda == 0.0 && data.token_count() < static_cast<std::size_t>(d) + 1) {
    throw std::runtime_error(
        "singular system: fewer than d+1 samples at lambda = 0; use lambda > 0");
  }

  // Each token carries weight 1 / (Q * N_q); the weights sum to one.
  const double query_weight = 1.0 / static_cast<double>(active);
  Eigen::VectorXd mean_z = Eigen::VectorXd::Zero(d);
  double y_pivot = 0.0;
  bool have_pivot = false;
  double y_shift = 0.0;
  for (const auto& q : data.queries) {
    if (q.size() == 0) continue;
    if (!have_pivot) {
      y_pivot = q.targets[0];
      have_pivot = true;
    }
    const double w = query_weight / static_cast<double>(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
      const auto z = Row(q, d, i);
      for (int j = 0; j < d; ++j) mean_z[j] += w * z[j];
      y_shift += w * (q.targets[i] - y_pivot);
    }
  }
  const double mean_y = y_pivot + y_shift;

  // Centered weighted Gram matrix, accumulated in row blocks so the rank
  // updates run as matrix products.
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
  constexpr Eigen::Index kBlockRows = 2048;
  Eigen::MatrixXd block(kBlockRows, d);
  Eigen::VectorXd block_y(kBlockRows);
  Eigen::Index filled = 0;
  auto flush = [&] {
    if (filled == 0) return;
    const auto b = block.topRows(filled);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(b.transpose());
    rhs.noalias() += b.transpose() * block_y.head(filled);
    filled = 0;
  };
  for (const auto& q : data.queries) {
    if (q.size() == 0) continue;
    const double root_w = std::sqrt(query_weight / static_cast<double>(q.size()));
    for (std::size_t i = 0; i < q.size(); ++i) {
      const auto z = Row(q, d, i);
      for (int j = 0; j < d; ++j) block(filled, j) = root_w * (z[j] - mean_z[j]);
      block_y[filled] = root_w * (q.targets[i] - mean_y);
      if (++filled == kBlockRows) flush();
    }
  }
  flush();
  gram.diagonal().array() += lambda;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  const auto pivots = ldlt.vectorD().cwiseAbs();
  const bool degenerate =
      pivots.minCoeff() <= 1e-12 * std::max(pivots.maxCoeff(), 1e-300);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      (lambda == 0.0 && (degenerate || ldlt.rcond() < 1e-12))) {
    throw std::runtime_error(
        "singular system at lambda = 0 (rank-deficient features); use lambda > 0");
  }
  const Eigen::VectorXd w = ldlt.solve(rhs);

  LinearProbe probe;
  probe.layer = layer;
  probe.solver = Solver::kClosedForm;
  probe.lambda = lambda;
  probe.weights.assign(w.data(), w.data() + d);
  probe.bias = mean_y - w.dot(mean_z);
  probe.train_loss = ProbeObjective(probe, data);
  return probe;
}

LinearProbe TrainProbeSgd(const ProbeDataset& train, const ProbeDataset& valid,
                          const SgdConfig& config, LayerTag layer) {
  if (train.active_queries() == 0) throw std::invalid_argument("no training samples");
  if (config.batch == 0) throw std::invalid_argument("batch must be >= 1");
  const int d = train.dim;
  std::vector<double> params(static_cast<std::size_t>(d) + 1, 0.0);
  std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0);
  std::vector<double> grad(params.size(), 0.0);

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < train.queries.size(); ++i) {
    if (train.queries[i].size() > 0) order.push_back(i);
  }
  const bool early_stop = config.patience > 0 && valid.active_queries() > 0;
  std::vector<double> best = params;
  double best_valid = std::numeric_limits<double>::infinity();
  int since_best = 0;
  SplitMix64 rng(config.seed);
  std::uint64_t step = 0;
  int epochs = 0;

  auto weights = [&] { return std::span<const double>(params.data(), d); };
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      std::swap(order[i], order[rng.Below(i + 1)]);
    }
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t len = std::min(config.batch, order.size() - start);
      const double loss = ObjectiveGradient(
          weights(), params[d], train,
          std::span<const std::size_t>(order).subspan(start, len), grad);
      if (!std::isfinite(loss)) {
        throw std::runtime_error("non-finite training loss at epoch " +
                                 std::to_string(epoch) + ", step " +
                                 std::to_string(step + 1) +
                                 "; lower the learning rate");
      }
      ++step;
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      for (std::size_t j = 0; j < params.size(); ++j) {
        m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * grad[j];
        v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * grad[j] * grad[j];
        params[j] -= config.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config.epsilon);
      }
    }
    epochs = epoch;
    if (!early_stop) continue;
    const double vl = ProbeObjective(weights(), params[d], valid);
    if (!std::isfinite(vl)) {
      throw std::runtime_error("non-finite validation loss at epoch " +
                               std::to_string(epoch));
    }
    if (vl < best_valid) {
      best_valid = vl;
      best = params;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  if (early_stop) params = best;

  LinearProbe probe;
  probe.layer = layer;
  probe.solver = Solver::kSgd;
  probe.weights.assign(params.begin(), params.begin() + d);
  probe.bias = params[d];
  probe.epochs_run = epochs;
  probe.seed = config.seed;
  probe.train_loss = ProbeObjective(probe, train);
  return probe;
}

QueryTargets TargetsFromBundle(const BundleManifest& manifest,
                               const IdfTable& idf) {
  QueryTargets targets;
  for (const auto& q : manifest.queries) {
    for (TokenId id : q.token_ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= idf.size()) {
        throw std::invalid_argument("query " + q.query_id + ": token id " +
                                    std::to_string(id) +
                                    " outside the IDF table");
      }
    }
    targets[q.query_id] = ContentIdf(q.token_ids, q.content_mask, idf);
  }
  return targets;
}

ProbeDataset CollectSamples(const RecordSource& bundle, LayerTag layer,
                            const QueryTargets& targets,
                            const SplitAssignment& split, Split which) {
  const BundleManifest& m = bundle.manifest();
  ProbeDataset data;
  data.dim = m.hidden_dim;
  for (const QueryEntry& q : m.queries) {
    if (!split.MayInclude(q.query_id, which)) continue;
    auto truth = targets.find(q.query_id);
    if (truth == targets.end()) {
      throw std::runtime_error("no ground-truth IDF for query " + q.query_id);
    }
    const auto tensor = bundle.LoadByName(layer.RecordName(q.query_id));
    if (!tensor) {
      throw BundleError("query " + q.query_id + ": missing " + layer.ToString() +
                        " tensor");
    }
    QuerySamples samples;
    samples.query_id = q.query_id;
    std::size_t content = 0;
    for (std::size_t i = 0; i < q.length(); ++i) {
      if (!q.content_mask[i]) continue;
      if (content >= truth->second.size()) {
        throw std::runtime_error("query " + q.query_id +
                                 ": IDF vector shorter than its content positions");
      }
      if (split.Includes(q.query_id, q.token_ids[i], which)) {
        const auto row = tensor->row(static_cast<std::int64_t>(i));
        samples.features.insert(samples.features.end(), row.begin(), row.end());
        samples.targets.push_back(truth->second[content]);
      }
      ++content;
    }
    if (content != truth->second.size()) {
      throw std::runtime_error("query " + q.query_id +
                               ": IDF vector length differs from content positions");
    }
    data.queries.push_back(std::move(samples));
  }
  return data;
}

namespace {

std::vector<QueryCorrelation> Score(const LinearProbe& probe,
                                    const ProbeDataset& data) {
  std::vector<QueryCorrelation> out;
  out.reserve(data.queries.size());
  std::vector<double> predicted;
  for (const auto& q : data.queries) {
    predicted.clear();
    for (std::size_t i = 0; i < q.size(); ++i) {
      predicted.push_back(probe.Predict(Row(q, data.dim, i)));
    }
    out.push_back({q.query_id, Pearson(predicted, q.targets)});
  }
  return out;
}

}  // namespace

LayerResult EvaluateProbe(const LinearProbe& probe, const RecordSource& bundle,
                          const QueryTargets& targets,
                          const SplitAssignment& split, Split which) {
  if (static_cast<int>(probe.dim()) != bundle.manifest().hidden_dim) {
    throw std::invalid_argument("probe dimension does not match the bundle");
  }
  const ProbeDataset data = CollectSamples(bundle, probe.layer, targets, split, which);
  LayerResult result;
  result.layer = probe.layer;
  result.probe = probe;
  result.per_query = Score(probe, data);
  result.summary = Summarize(result.per_query);
  return result;
}

ProbeReport ProbeAllLayers(const RecordSource& bundle,
                           const QueryTargets& targets,
                           const SplitAssignment& split,
                           const ProbeRunConfig& config) {
  if (config.solver == Solver::kClosedForm && config.lambdas.empty()) {
    throw std::invalid_argument("at least one ridge lambda is required");
  }
  const int layer_count = bundle.manifest().layer_count;
  std::vector<LayerTag> tags;
  for (int l = 0; l <= layer_count; ++l) tags.push_back(LayerTag{l});

  auto run_layer = [&](LayerTag tag) {
    const ProbeDataset train = CollectSamples(bundle, tag, targets, split, Split::kTrain);
    const ProbeDataset valid = CollectSamples(bundle, tag, targets, split, Split::kValid);
    LinearProbe probe;
    if (config.solver == Solver::kSgd) {
      probe = TrainProbeSgd(train, valid, config.sgd, tag);
    } else {
      double best_mean = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < config.lambdas.size(); ++i) {
        LinearProbe candidate = TrainProbeClosed(train, config.lambdas[i], tag);
        if (config.lambdas.size() == 1) {
          probe = std::move(candidate);
          break;
        }
        const auto s = Summarize(Score(candidate, valid));
        const double mean = s.count > 0 ? s.mean : -std::numeric_limits<double>::infinity();
        if (i == 0 || mean > best_mean) {
          best_mean = mean;
          probe = std::move(candidate);
        }
      }
    }
    return EvaluateProbe(probe, bundle, targets, split, Split::kTest);
  };

  ProbeReport report;
  report.layers.resize(tags.size());
  const unsigned workers =
      std::max(1u, std::min<unsigned>(config.threads, static_cast<unsigned>(tags.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < tags.size(); ++i) report.layers[i] = run_layer(tags[i]);
    return report;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(tags.size());
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < tags.size(); i = next++) {
          try {
            report.layers[i] = run_layer(tags[i]);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return report;
}

}  // namespace idfprobe
