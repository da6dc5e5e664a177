#include "idfprobe/cli.h"

#include <fmt/format.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <stdexcept>

#include "idfprobe/attn.h"
#include "idfprobe/bundle.h"
#include "idfprobe/corpus.h"
#include "idfprobe/idf_table.h"
#include "idfprobe/io_util.h"
#include "idfprobe/probe.h"
#include "idfprobe/queries.h"
#include "idfprobe/report.h"
#include "idfprobe/svg_plot.h"
#include "idfprobe/synth.h"
#include "idfprobe/wordpiece.h"

namespace idfprobe::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr std::string_view kTool = "idfprobe 1.0.0";

class MissingInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string corpus;
  std::string vocab;
  std::string queries;
  std::string bundle;
  std::string idf;
  std::string probes;
  std::string compare;
  std::string out;
  std::vector<std::string> reports;
  std::vector<std::string> labels;

  std::uint64_t seed = 42;
  std::string split = "0.8,0.1,0.1";
  std::string split_unit = "query";
  std::string eval_split = "all";

  std::string solver = "closed";
  std::vector<double> lambdas = {1e-6};
  double lr = 5e-5;
  std::size_t batch = 128;
  int epochs = 100;
  int patience = 5;
  unsigned threads = 1;

  double tau = kDefaultDisplayThreshold;
  double delta = kDefaultModelDelta;
  std::size_t top = 10;

  int dim = 8;
  int layers = 2;
  int heads = 4;
  double sigma = 0.0;
  int designated_head = 1;
  std::string plant = "all";
  std::string other_heads = "uniform";
  std::string model_name = "synthetic";
  std::string bundle_name = "synth.idfb";
};

std::string Real(double v) { return fmt::format("{}", v); }

std::string JoinReals(const std::vector<double>& values) {
  std::string out;
  for (double v : values) {
    if (!out.empty()) out += ",";
    out += Real(v);
  }
  return out;
}

void RequireInput(const std::string& path, std::string_view flag) {
  if (path.empty()) throw MissingInput(fmt::format("--{} is required", flag));
  if (!fs::exists(path)) {
    throw MissingInput(fmt::format("missing input for --{}: {}", flag, path));
  }
}

void RequireOut(const Options& o) {
  if (o.out.empty()) throw MissingInput("--out is required");
}

void RequireSameVocab(std::string_view what_a, const std::string& a,
                      std::string_view what_b, const std::string& b) {
  if (a != b) {
    throw std::runtime_error(fmt::format(
        "vocab hash mismatch: {} has {} but {} has {}; refusing to run", what_a,
        a.empty() ? "none" : a, what_b, b.empty() ? "none" : b));
  }
}

json EchoJson(const ConfigEcho& echo) {
  json j = json::object();
  for (const auto& [k, v] : echo) j[k] = v;
  return j;
}

std::string EchoComments(const ConfigEcho& echo) {
  std::string out;
  for (const auto& [k, v] : echo) out += fmt::format("# {}: {}\n", k, v);
  return out;
}

// Files are staged in memory, checked, then written. A fresh output
// directory appears in one rename; an existing one is updated file by file.
class OutputSet {
 public:
  using Check = std::function<void(const std::string&)>;

  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}

  void Add(std::string name, std::string contents, Check check = {}) {
    files_.push_back({std::move(name), std::move(contents), std::move(check)});
  }

  void Commit(std::ostream& err) {
    for (const auto& f : files_) {
      if (f.check) f.check(f.contents);
    }
    if (fs::exists(dir_)) {
      if (!fs::is_directory(dir_)) {
        throw std::runtime_error("output path is not a directory: " + dir_.string());
      }
      for (const auto& f : files_) {
        fs::create_directories((dir_ / f.name).parent_path());
        WriteFileAtomic(dir_ / f.name, f.contents);
      }
    } else {
      const fs::path parent = dir_.has_parent_path() ? dir_.parent_path() : fs::path(".");
      fs::create_directories(parent);
      const fs::path staging =
          parent / fmt::format(".{}.partial-{}", dir_.filename().string(), ::getpid());
      fs::remove_all(staging);
      try {
        for (const auto& f : files_) {
          fs::create_directories((staging / f.name).parent_path());
          WriteFileAtomic(staging / f.name, f.contents);
        }
        fs::rename(staging, dir_);
      } catch (...) {
        std::error_code ec;
        fs::remove_all(staging, ec);
        throw;
      }
    }
    for (const auto& f : files_) {
      if (ReadFile(dir_ / f.name) != f.contents) {
        throw std::runtime_error("output did not read back intact: " +
                                 (dir_ / f.name).string());
      }
      err << "idfprobe: wrote " << (dir_ / f.name).string() << "\n";
    }
  }

 private:
  struct File {
    std::string name;
    std::string contents;
    Check check;
  };
  fs::path dir_;
  std::vector<File> files_;
};

std::vector<QueryText> LoadQueries(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return ReadQueriesTsv(in);
}

SplitAssignment MakeSplit(const BundleManifest& manifest, const Options& o) {
  const SplitFractions fractions = SplitFractions::Parse(o.split);
  if (o.split_unit == "query") {
    std::vector<std::string> ids;
    for (const auto& q : manifest.queries) ids.push_back(q.query_id);
    return SplitQueries(std::move(ids), o.seed, fractions);
  }
  if (o.split_unit == "token") {
    std::vector<TokenId> tokens;
    for (const auto& q : manifest.queries) {
      for (std::size_t i = 0; i < q.token_ids.size(); ++i) {
        if (q.content_mask[i]) tokens.push_back(q.token_ids[i]);
      }
    }
    return SplitTokens(tokens, o.seed, fractions);
  }
  throw std::invalid_argument("unknown split unit: " + o.split_unit);
}

std::pair<SplitAssignment, Split> MakeEvalSplit(const BundleManifest& manifest,
                                                const Options& o) {
  if (o.eval_split == "all") {
    std::map<std::string, Split> all;
    for (const auto& q : manifest.queries) all[q.query_id] = Split::kTest;
    return {SplitAssignment(o.seed, SplitFractions{}, SplitUnit::kQuery, std::move(all)),
            Split::kTest};
  }
  static const std::map<std::string, Split> kNames = {
      {"train", Split::kTrain}, {"valid", Split::kValid}, {"test", Split::kTest}};
  const auto it = kNames.find(o.eval_split);
  if (it == kNames.end()) {
    throw std::invalid_argument("unknown evaluation split: " + o.eval_split);
  }
  return {MakeSplit(manifest, o), it->second};
}

// Groups per-query correlations by layer or head label, in first-seen order.
std::vector<std::pair<std::string, std::vector<QueryCorrelation>>> GroupRows(
    const std::vector<QueryRow>& rows) {
  std::vector<std::pair<std::string, std::vector<QueryCorrelation>>> groups;
  std::map<std::string, std::size_t> index;
  for (const auto& r : rows) {
    auto [it, fresh] = index.emplace(r.group, groups.size());
    if (fresh) groups.emplace_back(r.group, std::vector<QueryCorrelation>{});
    groups[it->second].second.push_back({r.query_id, r.value});
  }
  return groups;
}

std::string CompareGaps(std::string_view group_column, const std::string& current_csv,
                        const Options& o, ConfigEcho echo) {
  std::vector<QueryRow> previous;
  try {
    previous = ParseQueriesCsv(ReadFile(o.compare));
  } catch (const ReportParseError& e) {
    throw std::runtime_error(o.compare + ": " + e.what());
  }
  const auto mine = GroupRows(ParseQueriesCsv(current_csv));
  const auto theirs = GroupRows(previous);
  std::map<std::string, const std::vector<QueryCorrelation>*> lookup;
  for (const auto& [group, list] : theirs) lookup[group] = &list;
  std::vector<std::pair<std::string, std::vector<CorrelationGap>>> gaps;
  for (const auto& [group, list] : mine) {
    const auto it = lookup.find(group);
    if (it == lookup.end()) continue;
    gaps.emplace_back(group, FindModelGaps(list, *it->second, o.delta));
  }
  echo.emplace_back("compare", o.compare);
  echo.emplace_back("delta", Real(o.delta));
  return GapsCsv(group_column, gaps, echo);
}

int CmdIdfBuild(const Options& o, std::ostream& out, std::ostream& err) {
  RequireInput(o.vocab, "vocab");
  RequireInput(o.corpus, "corpus");
  RequireOut(o);
  const Vocabulary vocab = Vocabulary::FromFile(o.vocab);
  std::ifstream in(o.corpus, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + o.corpus);
  IdfBuildOptions options;
  options.threads = std::max(1u, o.threads);
  options.progress = [&err](std::int64_t docs) {
    err << "idfprobe: idf build: " << docs << " documents\n";
  };
  IdfTable table = BuildIdfTableFromTsv(in, vocab, options);
  table.set_config({{"tool", std::string(kTool)},
                    {"command", "idf build"},
                    {"corpus", o.corpus},
                    {"vocab", o.vocab},
                    {"vocab_hash", vocab.hash()}});
  OutputSet outputs(o.out);
  outputs.Add("idf_table.json", table.ToJson(), [&](const std::string& text) {
    if (!(IdfTable::FromJson(text) == table)) {
      throw std::runtime_error("idf table did not survive a round trip");
    }
  });
  outputs.Commit(err);
  out << fmt::format("documents: {}\nvocab_size: {}\nunseen_tokens: {}\n",
                     table.corpus_size(), table.size(), table.unseen_count());
  return kExitOk;
}

int CmdQueriesAnnotate(const Options& o, std::ostream& out, std::ostream& err) {
  RequireInput(o.queries, "queries");
  RequireInput(o.vocab, "vocab");
  RequireInput(o.idf, "idf");
  RequireOut(o);
  const Vocabulary vocab = Vocabulary::FromFile(o.vocab);
  const IdfTable idf = IdfTable::Load(o.idf);
  RequireSameVocab("vocab", vocab.hash(), "idf table", idf.vocab_hash());
  const Annotation annotation = AnnotateQueries(LoadQueries(o.queries), vocab, idf);

  const ConfigEcho echo = {{"tool", std::string(kTool)},
                           {"command", "queries annotate"},
                           {"queries", o.queries},
                           {"vocab", o.vocab},
                           {"idf", o.idf},
                           {"vocab_hash", vocab.hash()}};
  std::string text = json{{"config", EchoJson(echo)}}.dump() + "\n";
  for (const auto& a : annotation.queries) {
    json mask = json::array();
    for (bool b : a.query.content_mask) mask.push_back(b ? 1 : 0);
    text += json{{"query_id", a.query.query_id},
                 {"tokens", a.query.token_strings},
                 {"token_ids", a.query.token_ids},
                 {"content_mask", std::move(mask)},
                 {"idf", a.idf}}
                .dump() +
            "\n";
  }
  OutputSet outputs(o.out);
  outputs.Add("queries_annotated.jsonl", std::move(text), [](const std::string& t) {
    std::istringstream lines(t);
    for (std::string line; std::getline(lines, line);) {
      if (!json::accept(line)) throw std::runtime_error("annotation line is not JSON");
    }
  });
  outputs.Commit(err);
  out << fmt::format("queries: {}\nunseen_occurrences: {}\n", annotation.queries.size(),
                     annotation.unseen_occurrences);
  return kExitOk;
}

int CmdBundleSynth(const Options& o, std::ostream& out, std::ostream& err) {
  RequireInput(o.queries, "queries");
  RequireInput(o.vocab, "vocab");
  RequireInput(o.idf, "idf");
  RequireOut(o);
  const Vocabulary vocab = Vocabulary::FromFile(o.vocab);
  const IdfTable idf = IdfTable::Load(o.idf);
  RequireSameVocab("vocab", vocab.hash(), "idf table", idf.vocab_hash());

  SynthSpec spec;
  for (const auto& [id, text] : LoadQueries(o.queries)) {
    spec.queries.push_back(TokenizeQuery(id, text, vocab));
  }
  spec.hidden_dim = o.dim;
  spec.layer_count = o.layers;
  spec.head_count = o.heads;
  spec.noise_sigma = o.sigma;
  spec.seed = o.seed;
  spec.designated_head = o.designated_head;
  spec.model_name = o.model_name;
  if (o.plant == "all") {
    spec.plant = PlantMode::kAll;
  } else if (o.plant == "embeddings") {
    spec.plant = PlantMode::kEmbeddingsOnly;
  } else if (o.plant == "none") {
    spec.plant = PlantMode::kNone;
  } else {
    throw std::invalid_argument("unknown plant mode: " + o.plant);
  }
  if (o.other_heads == "uniform") {
    spec.other_heads = HeadMode::kUniform;
  } else if (o.other_heads == "random") {
    spec.other_heads = HeadMode::kRandom;
  } else {
    throw std::invalid_argument("unknown head mode: " + o.other_heads);
  }

  const ActivationBundle raw = SynthBundle(spec, idf);
  BundleManifest manifest = raw.manifest();
  manifest.extra["config"] = EchoJson({{"tool", std::string(kTool)},
                                       {"command", "bundle synth"},
                                       {"queries", o.queries},
                                       {"vocab", o.vocab},
                                       {"idf", o.idf},
                                       {"seed", std::to_string(o.seed)},
                                       {"hidden_dim", std::to_string(o.dim)},
                                       {"layers", std::to_string(o.layers)},
                                       {"heads", std::to_string(o.heads)},
                                       {"sigma", Real(o.sigma)},
                                       {"designated_head", std::to_string(o.designated_head)},
                                       {"plant", o.plant},
                                       {"other_heads", o.other_heads}});
  const ActivationBundle bundle(std::move(manifest), raw.payload());
  std::ostringstream bytes;
  WriteBundle(bundle, bytes);

  OutputSet outputs(o.out);
  outputs.Add(o.bundle_name, bytes.str(), [](const std::string& b) {
    std::istringstream in(b);
    (void)ReadBundle(in);
  });
  outputs.Commit(err);
  out << fmt::format("queries: {}\nrecords: {}\nbytes: {}\n",
                     bundle.manifest().queries.size(), bundle.manifest().records.size(),
                     bytes.str().size());
  return kExitOk;
}

int CmdBundleInspect(const Options& o, std::ostream& out, std::ostream& err) {
  RequireInput(o.bundle, "bundle");
  if (!o.queries.empty()) {
    RequireInput(o.queries, "queries");
    RequireInput(o.vocab, "vocab");
  } else if (!o.vocab.empty()) {
    RequireInput(o.vocab, "vocab");
  }
  const BundleReader reader(o.bundle);
  const BundleManifest& m = reader.manifest();
  const std::vector<std::string> warnings = CheckAttentionRows(reader);
  for (const auto& w : warnings) err << "idfprobe: warning: " << w << "\n";

  std::size_t truncated = 0;
  std::size_t content = 0;
  for (const auto& q : m.queries) {
    truncated += q.truncated;
    content += static_cast<std::size_t>(
        std::count(q.content_mask.begin(), q.content_mask.end(), true));
  }
  json summary = json::object();
  summary["config"] = EchoJson({{"tool", std::string(kTool)},
                                {"command", "bundle inspect"},
                                {"bundle", o.bundle},
                                {"vocab", o.vocab},
                                {"queries", o.queries}});
  summary["model_name"] = m.model_name;
  summary["hidden_dim"] = m.hidden_dim;
  summary["layer_count"] = m.layer_count;
  summary["head_count"] = m.head_count;
  summary["vocab_hash"] = m.vocab_hash;
  summary["queries"] = m.queries.size();
  summary["truncated_queries"] = truncated;
  summary["content_tokens"] = content;
  summary["records"] = m.records.size();
  summary["warnings"] = warnings;

  if (!o.vocab.empty()) {
    const Vocabulary vocab = Vocabulary::FromFile(o.vocab);
    RequireSameVocab("bundle", m.vocab_hash, "vocab", vocab.hash());
    summary["vocab_hash_matches"] = true;
    if (!o.queries.empty()) {
      std::map<std::string, std::string> texts;
      for (auto& [id, text] : LoadQueries(o.queries)) texts[id] = text;
      for (const auto& q : m.queries) {
        const auto it = texts.find(q.query_id);
        if (it == texts.end()) {
          throw std::runtime_error("query " + q.query_id + " is not in " + o.queries);
        }
        const TokenizedQuery mine = TokenizeQuery(q.query_id, it->second, vocab);
        // A truncated query keeps a prefix of the pieces and its final [SEP].
        bool same = q.token_ids == mine.token_ids;
        if (q.truncated && !same && q.length() >= 1 && q.length() <= mine.token_ids.size()) {
          same = std::equal(q.token_ids.begin(), q.token_ids.end() - 1,
                            mine.token_ids.begin());
        }
        if (!same) {
          throw std::runtime_error("query " + q.query_id +
                                   ": bundle token ids differ from the tokenizer");
        }
      }
      summary["token_ids_match"] = true;
    }
  }
  const std::string text = summary.dump(1) + "\n";
  if (!o.out.empty()) {
    OutputSet outputs(o.out);
    outputs.Add("inspect.json", text);
    outputs.Commit(err);
  }
  out << text;
  return kExitOk;
}

ConfigEcho SplitEcho(const Options& o, const SplitAssignment& split) {
  return {{"seed", std::to_string(o.seed)},
          {"split", o.split},
          {"split_unit", o.split_unit},
          {"split_counts", fmt::format("{}/{}/{}", split.CountOf(Split::kTrain),
                                       split.CountOf(Split::kValid),
                                       split.CountOf(Split::kTest))},
          {"split_fingerprint", split.Fingerprint()}};
}

int CmdProbeRun(const Options& o, std::ostream& out, std::ostream& err) {
  RequireInput(o.bundle, "bundle");
  RequireInput(o.idf, "idf");
  if (!o.probes.empty()) RequireInput(o.probes, "probes");
  if (!o.compare.empty()) RequireInput(o.compare, "compare");
  RequireOut(o);
  const BundleReader reader(o.bundle);
  const BundleManifest& m = reader.manifest();
  const IdfTable idf = IdfTable::Load(o.idf);
  RequireSameVocab("bundle", m.vocab_hash, "idf table", idf.vocab_hash());
  const QueryTargets targets = TargetsFromBundle(m, idf);
  const SplitAssignment split = MakeSplit(m, o);

  ProbeRunConfig config;
  config.solver = ParseSolver(o.solver);
  config.lambdas = o.lambdas;
  config.sgd.lr = o.lr;
  config.sgd.batch = o.batch;
  config.sgd.max_epochs = o.epochs;
  config.sgd.patience = o.patience;
  config.sgd.seed = o.seed;
  config.threads = std::max(1u, o.threads);

  ConfigEcho echo = {{"tool", std::string(kTool)},
                     {"command", "probe run"},
                     {"bundle", o.bundle},
                     {"idf", o.idf},
                     {"model_name", m.model_name},
                     {"vocab_hash", m.vocab_hash}};
  for (auto& kv : SplitEcho(o, split)) echo.push_back(std::move(kv));
  if (!o.probes.empty()) {
    echo.emplace_back("probes", o.probes);
  } else {
    echo.emplace_back("solver", std::string(ToString(config.solver)));
    if (config.solver == Solver::kClosedForm) {
      echo.emplace_back("lambda", JoinReals(o.lambdas));
    } else {
      echo.emplace_back("lr", Real(o.lr));
      echo.emplace_back("batch", std::to_string(o.batch));
      echo.emplace_back("epochs", std::to_string(o.epochs));
      echo.emplace_back("patience", std::to_string(o.patience));
    }
  }
  echo.emplace_back("evaluated_split", "test");

  err << fmt::format("idfprobe: probe run: {} queries, {} representations\n",
                     m.queries.size(), m.layer_count + 1);
  ProbeReport report;
  if (o.probes.empty()) {
    report = ProbeAllLayers(reader, targets, split, config);
  } else {
    for (int l = 0; l <= m.layer_count; ++l) {
      const LayerTag tag{l};
      const fs::path file = fs::path(o.probes) / (tag.ToString() + ".json");
      RequireInput(file.string(), "probes");
      const LinearProbe probe = LinearProbe::FromJson(json::parse(ReadFile(file)));
      if (probe.layer != tag) {
        throw std::runtime_error(file.string() + " holds a probe for " +
                                 probe.layer.ToString());
      }
      report.layers.push_back(EvaluateProbe(probe, reader, targets, split, Split::kTest));
    }
  }
  report.config = echo;

  OutputSet outputs(o.out);
  const std::string report_csv = ProbeReportCsv(report);
  const std::string queries_csv = ProbeQueriesCsv(report);
  outputs.Add("probe_report.csv", report_csv,
              [](const std::string& t) { (void)ParseReportCsv(t); });
  outputs.Add("probe_queries.csv", queries_csv,
              [](const std::string& t) { (void)ParseQueriesCsv(t); });
  if (o.probes.empty()) {
    for (const auto& layer : report.layers) {
      json j = layer.probe.ToJson();
      j["config"] = EchoJson(echo);
      outputs.Add("probes/" + layer.layer.ToString() + ".json", j.dump(1) + "\n",
                  [](const std::string& t) { (void)LinearProbe::FromJson(json::parse(t)); });
    }
  }
  if (!o.compare.empty()) {
    outputs.Add("probe_gaps.csv", CompareGaps("layer", queries_csv, o, echo));
  }
  outputs.Commit(err);
  for (const auto& layer : report.layers) {
    out << fmt::format("{}: mean {:.6f} std {:.6f} (n={}, skipped={})\n",
                       layer.layer.ToString(), layer.summary.mean, layer.summary.std,
                       layer.summary.count, layer.summary.skipped);
  }
  return kExitOk;
}

int CmdAttnRun(const Options& o, std::ostream& out, std::ostream& err) {
  RequireInput(o.bundle, "bundle");
  RequireInput(o.idf, "idf");
  if (!o.vocab.empty()) RequireInput(o.vocab, "vocab");
  if (!o.compare.empty()) RequireInput(o.compare, "compare");
  RequireOut(o);
  const BundleReader reader(o.bundle);
  const BundleManifest& m = reader.manifest();
  const IdfTable idf = IdfTable::Load(o.idf);
  RequireSameVocab("bundle", m.vocab_hash, "idf table", idf.vocab_hash());
  std::optional<Vocabulary> vocab;
  if (!o.vocab.empty()) {
    vocab.emplace(Vocabulary::FromFile(o.vocab));
    RequireSameVocab("bundle", m.vocab_hash, "vocab", vocab->hash());
  }
  const QueryTargets targets = TargetsFromBundle(m, idf);
  const auto [split, which] = MakeEvalSplit(m, o);

  ConfigEcho echo = {{"tool", std::string(kTool)},
                     {"command", "attn run"},
                     {"bundle", o.bundle},
                     {"idf", o.idf},
                     {"model_name", m.model_name},
                     {"vocab_hash", m.vocab_hash},
                     {"evaluated_split", o.eval_split}};
  if (o.eval_split != "all") {
    for (auto& kv : SplitEcho(o, split)) echo.push_back(std::move(kv));
  }
  echo.emplace_back("tau", Real(o.tau));

  const HeadCorrelationReport heads = HeadCorrelations(reader, targets, split, which, o.tau);
  const auto examples =
      FindExamples(reader, targets, split, which, o.tau, vocab ? &*vocab : nullptr);

  OutputSet outputs(o.out);
  const std::string queries_csv = HeadQueriesCsv(heads, echo);
  outputs.Add("attn_report.csv", HeadReportCsv(heads, echo),
              [](const std::string& t) { (void)ParseReportCsv(t); });
  outputs.Add("attn_queries.csv", queries_csv,
              [](const std::string& t) { (void)ParseQueriesCsv(t); });
  json examples_doc = json::object();
  examples_doc["config"] = EchoJson(echo);
  examples_doc["examples"] = json::parse(ExamplesJson(examples));
  outputs.Add("attn_examples.json", examples_doc.dump(1) + "\n",
              [](const std::string& t) {
                if (!json::accept(t)) throw std::runtime_error("examples are not JSON");
              });
  if (!o.compare.empty()) {
    outputs.Add("attn_gaps.csv", CompareGaps("head", queries_csv, o, echo));
  }
  outputs.Commit(err);
  for (std::size_t h = 0; h < heads.head_count(); ++h) {
    const auto& s = heads.heads[h];
    out << fmt::format("head {}: mean {:.6f} std {:.6f} (n={}, skipped={}){}\n", h + 1,
                       s.mean, s.std, s.count, s.skipped,
                       heads.flagged[h] ? " flagged" : "");
  }
  out << fmt::format("examples above tau: {}\n", examples.size());
  return kExitOk;
}

int CmdScoreTfidf(const Options& o, std::ostream& out, std::ostream& err) {
  RequireInput(o.corpus, "corpus");
  RequireInput(o.vocab, "vocab");
  RequireInput(o.idf, "idf");
  RequireInput(o.queries, "queries");
  RequireOut(o);
  const Vocabulary vocab = Vocabulary::FromFile(o.vocab);
  const IdfTable idf = IdfTable::Load(o.idf);
  RequireSameVocab("vocab", vocab.hash(), "idf table", idf.vocab_hash());
  std::ifstream in(o.corpus, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + o.corpus);
  const Corpus corpus = Corpus::FromTsv(in);
  if (corpus.size() == 0) throw std::invalid_argument("empty corpus");
  const WordPieceTokenizer tokenizer(vocab);
  std::vector<std::vector<TokenId>> docs;
  docs.reserve(corpus.size());
  for (const auto& d : corpus.documents()) docs.push_back(tokenizer.Encode(d.text));
  err << fmt::format("idfprobe: score tfidf: {} documents\n", docs.size());

  const ConfigEcho echo = {{"tool", std::string(kTool)},
                           {"command", "score tfidf"},
                           {"corpus", o.corpus},
                           {"queries", o.queries},
                           {"vocab", o.vocab},
                           {"idf", o.idf},
                           {"vocab_hash", vocab.hash()},
                           {"top", std::to_string(o.top)}};
  std::string text = EchoComments(echo) + "query_id\tdoc_id\trank\tscore\n";
  std::size_t queries = 0;
  for (const auto& [id, qtext] : LoadQueries(o.queries)) {
    const TokenizedQuery q = TokenizeQuery(id, qtext, vocab);
    const auto ranked = RankDocuments(q, docs, idf);
    for (std::size_t r = 0; r < ranked.size() && r < o.top; ++r) {
      text += fmt::format("{}\t{}\t{}\t{}\n", id, corpus.documents()[ranked[r].index].id,
                          r + 1, FormatExact(ranked[r].score));
    }
    ++queries;
  }
  OutputSet outputs(o.out);
  outputs.Add("tfidf_run.tsv", std::move(text));
  outputs.Commit(err);
  out << fmt::format("queries: {}\ndocuments: {}\n", queries, docs.size());
  return kExitOk;
}

int CmdPlot(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.reports.empty()) throw MissingInput("--report is required");
  for (const auto& r : o.reports) RequireInput(r, "report");
  if (!o.labels.empty() && o.labels.size() != o.reports.size()) {
    throw std::invalid_argument("--label must be given once per --report");
  }
  RequireOut(o);
  std::vector<PlotSeries> series;
  ConfigEcho echo = {{"tool", std::string(kTool)}, {"command", "plot"}};
  for (std::size_t i = 0; i < o.reports.size(); ++i) {
    PlotSeries s;
    s.label = o.labels.empty() ? fs::path(o.reports[i]).stem().string() : o.labels[i];
    try {
      s.table = ParseReportCsv(ReadFile(o.reports[i]));
    } catch (const ReportParseError& e) {
      throw std::runtime_error(o.reports[i] + ": " + e.what());
    }
    echo.emplace_back("report", o.reports[i]);
    echo.emplace_back("label", s.label);
    series.push_back(std::move(s));
  }
  const std::string svg = RenderChart(series);
  std::string header;
  for (const auto& [k, v] : echo) {
    std::string value = v;
    for (std::size_t p; (p = value.find("--")) != std::string::npos;) value.replace(p, 2, "- -");
    header += fmt::format("<!-- {}: {} -->\n", k, value);
  }
  const std::string name = series.front().table.kind == ReportKind::kLayer
                               ? "plot_layers.svg"
                               : "plot_heads.svg";
  OutputSet outputs(o.out);
  outputs.Add(name, header + svg);
  outputs.Commit(err);
  out << name << "\n";
  return kExitOk;
}

}  // namespace

int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Measure how much IDF information transformer representations carry",
               "idfprobe"};
  app.require_subcommand(1);
  std::function<int()> action;
  auto bind = [&](CLI::App* cmd, int (*fn)(const Options&, std::ostream&, std::ostream&)) {
    cmd->callback([&, fn] { action = [&, fn] { return fn(o, out, err); }; });
  };
  auto add_split = [&](CLI::App* cmd) {
    cmd->add_option("--seed", o.seed, "Split and solver seed")->capture_default_str();
    cmd->add_option("--split", o.split, "train,valid,test fractions")->capture_default_str();
    cmd->add_option("--split-unit", o.split_unit, "query or token")
        ->check(CLI::IsMember({"query", "token"}))
        ->capture_default_str();
  };

  CLI::App* idf = app.add_subcommand("idf", "Ground-truth IDF tables");
  idf->require_subcommand(1);
  CLI::App* idf_build = idf->add_subcommand("build", "Count document frequencies");
  idf_build->add_option("--corpus", o.corpus, "doc-id<TAB>text TSV");
  idf_build->add_option("--vocab", o.vocab, "WordPiece vocabulary");
  idf_build->add_option("--threads", o.threads)->capture_default_str();
  idf_build->add_option("--out", o.out, "Output directory");
  bind(idf_build, CmdIdfBuild);

  CLI::App* queries = app.add_subcommand("queries", "Query files");
  queries->require_subcommand(1);
  CLI::App* annotate = queries->add_subcommand("annotate", "Tokenize and attach IDF");
  annotate->add_option("--queries", o.queries, "query-id<TAB>text TSV");
  annotate->add_option("--vocab", o.vocab);
  annotate->add_option("--idf", o.idf, "IDF table JSON");
  annotate->add_option("--out", o.out);
  bind(annotate, CmdQueriesAnnotate);

  CLI::App* bundle = app.add_subcommand("bundle", "Activation bundles");
  bundle->require_subcommand(1);
  CLI::App* synth = bundle->add_subcommand("synth", "Write a synthetic bundle");
  synth->add_option("--queries", o.queries);
  synth->add_option("--vocab", o.vocab);
  synth->add_option("--idf", o.idf);
  synth->add_option("--out", o.out);
  synth->add_option("--name", o.bundle_name, "Bundle file name")->capture_default_str();
  synth->add_option("--seed", o.seed)->capture_default_str();
  synth->add_option("--dim", o.dim)->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--layers", o.layers)->check(CLI::NonNegativeNumber)->capture_default_str();
  synth->add_option("--heads", o.heads)->check(CLI::NonNegativeNumber)->capture_default_str();
  synth->add_option("--sigma", o.sigma)->check(CLI::NonNegativeNumber)->capture_default_str();
  synth->add_option("--designated-head", o.designated_head, "1-based; 0 for none")
      ->capture_default_str();
  synth->add_option("--plant", o.plant)
      ->check(CLI::IsMember({"all", "embeddings", "none"}))
      ->capture_default_str();
  synth->add_option("--other-heads", o.other_heads)
      ->check(CLI::IsMember({"uniform", "random"}))
      ->capture_default_str();
  synth->add_option("--model-name", o.model_name)->capture_default_str();
  bind(synth, CmdBundleSynth);
  CLI::App* inspect = bundle->add_subcommand("inspect", "Validate and summarize a bundle");
  inspect->add_option("--bundle", o.bundle);
  inspect->add_option("--vocab", o.vocab, "Check the vocabulary hash");
  inspect->add_option("--queries", o.queries, "Check token ids against the tokenizer");
  inspect->add_option("--out", o.out);
  bind(inspect, CmdBundleInspect);

  CLI::App* probe = app.add_subcommand("probe", "Linear IDF probes");
  probe->require_subcommand(1);
  CLI::App* probe_run = probe->add_subcommand("run", "Probe every representation");
  probe_run->add_option("--bundle", o.bundle);
  probe_run->add_option("--idf", o.idf);
  probe_run->add_option("--out", o.out);
  add_split(probe_run);
  probe_run->add_option("--solver", o.solver)
      ->check(CLI::IsMember({"closed", "sgd"}))
      ->capture_default_str();
  probe_run->add_option("--lambda", o.lambdas, "Ridge candidates for the closed form")
      ->delimiter(',');
  probe_run->add_option("--lr", o.lr)->capture_default_str();
  probe_run->add_option("--batch", o.batch, "Queries per step")->capture_default_str();
  probe_run->add_option("--epochs", o.epochs)->capture_default_str();
  probe_run->add_option("--patience", o.patience)->capture_default_str();
  probe_run->add_option("--threads", o.threads)->capture_default_str();
  probe_run->add_option("--probes", o.probes, "Evaluate saved probes instead of training");
  probe_run->add_option("--compare", o.compare, "Per-query CSV of another model");
  probe_run->add_option("--delta", o.delta)->capture_default_str();
  bind(probe_run, CmdProbeRun);

  CLI::App* attn = app.add_subcommand("attn", "CLS attention analysis");
  attn->require_subcommand(1);
  CLI::App* attn_run = attn->add_subcommand("run", "Correlate heads with IDF");
  attn_run->add_option("--bundle", o.bundle);
  attn_run->add_option("--idf", o.idf);
  attn_run->add_option("--vocab", o.vocab, "Adds token strings to examples");
  attn_run->add_option("--out", o.out);
  attn_run->add_option("--tau", o.tau)->capture_default_str();
  add_split(attn_run);
  attn_run->add_option("--eval-split", o.eval_split)
      ->check(CLI::IsMember({"all", "train", "valid", "test"}))
      ->capture_default_str();
  attn_run->add_option("--compare", o.compare, "Per-query CSV of another model");
  attn_run->add_option("--delta", o.delta)->capture_default_str();
  bind(attn_run, CmdAttnRun);

  CLI::App* score = app.add_subcommand("score", "Lexical scoring");
  score->require_subcommand(1);
  CLI::App* tfidf = score->add_subcommand("tfidf", "Rank documents by IDF-weighted TF");
  tfidf->add_option("--corpus", o.corpus);
  tfidf->add_option("--vocab", o.vocab);
  tfidf->add_option("--idf", o.idf);
  tfidf->add_option("--queries", o.queries);
  tfidf->add_option("--out", o.out);
  tfidf->add_option("--top", o.top)->capture_default_str();
  bind(tfidf, CmdScoreTfidf);

  CLI::App* plot = app.add_subcommand("plot", "Render report CSVs as SVG");
  plot->add_option("--report", o.reports, "Layer or head report CSV");
  plot->add_option("--label", o.labels, "Series label per report");
  plot->add_option("--out", o.out);
  bind(plot, CmdPlot);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    return action();
  } catch (const MissingInput& e) {
    err << "idfprobe: error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "idfprobe: error: " << e.what() << "\n";
    return kExitFailure;
  }
}

int Main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return Run(args, std::cout, std::cerr);
}

}  // namespace idfprobe::cli
