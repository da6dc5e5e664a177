// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "idfprobe/attn.h"
#include "idfprobe/bundle.h"
#include "idfprobe/cli.h"
#include "idfprobe/corpus.h"
#include "idfprobe/io_util.h"
#include "idfprobe/probe.h"
#include "idfprobe/queries.h"
#include "idfprobe/rng.h"
#include "idfprobe/stats.h"
#include "idfprobe/synth.h"
#include "idfprobe/wordpiece.h"
#include "test_util.h"

namespace idfprobe {
namespace {

using ::idfprobe::testing::BertVocab;
using ::idfprobe::testing::DataPath;
using ::idfprobe::testing::SyntheticIdf;
using ::idfprobe::testing::SyntheticQueries;
using ::idfprobe::testing::TempDir;
namespace fs = std::filesystem;

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

// Collects failures for one criterion.
class Check {
 public:
  void Expect(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    if (!ok) ++failed_;
  }
  bool ok() const { return failed_ == 0; }
  std::string Failures() const {
    std::string s;
    for (const auto& f : failures_) s += (s.empty() ? "" : "; ") + f;
    if (failed_ > failures_.size()) s += fmt::format("; +{} more", failed_ - failures_.size());
    return s;
  }
  std::string detail;

 private:
  std::vector<std::string> failures_;
  std::size_t failed_ = 0;
};

Corpus ToyCorpus() {
  std::istringstream in(ReadFile(DataPath("toy_corpus.tsv")));
  return Corpus::FromTsv(in);
}

// Counted by hand from tests/data/toy_corpus.tsv.
const std::map<std::string, std::int64_t> kToyDf = {
    {"the", 6},   {"cat", 5},    {".", 10},  {"mat", 2},   {"dog", 2},
    {"a", 2},     {"bird", 2},   {"and", 2}, {"night", 2}, {"sat", 1},
    {"on", 1},    {"chased", 1}, {";", 1},   {"ran", 1},   {"sang", 1},
    {"dogs", 1},  {"bark", 1},   {"at", 1},  {"was", 1},   {"red", 1},
    {"slept", 1}, {"rain", 1},   {"fell", 1}, {"all", 1},  {"sun", 1},
    {"rose", 1}};

void IdfOracle(Check& c) {
  const Vocabulary& vocab = BertVocab();
  const auto start = Clock::now();
  const IdfTable t = BuildIdfTable(ToyCorpus(), vocab);
  const double elapsed = Seconds(start);
  c.Expect(t.corpus_size() == 10, "corpus size");
  double worst = 0.0;
  std::size_t seen = 0;
  for (TokenId id = 0; id < static_cast<TokenId>(t.size()); ++id) {
    const std::string& token = vocab.token(id);
    const auto it = kToyDf.find(token);
    const std::int64_t expected = it == kToyDf.end() ? 0 : it->second;
    c.Expect(t.df(id) == expected, fmt::format("df({}) = {}, expected {}", token, t.df(id),
                                               expected));
    if (expected == 0) {
      c.Expect(t.idf(id) == UnseenIdf(10), "unseen idf for " + token);
      continue;
    }
    ++seen;
    worst = std::max(worst, std::abs(t.idf(id) + std::log(expected / 10.0)));
  }
  c.Expect(seen == kToyDf.size(), "hand-counted token missing from vocabulary");
  c.Expect(worst <= 1e-9, fmt::format("idf error {:.3g}", worst));
  c.Expect(elapsed < 1.0, fmt::format("runtime {:.3f}s", elapsed));
  c.detail = fmt::format("{} tokens counted, max idf error {:.2g}, {:.1f} ms", seen, worst,
                         elapsed * 1e3);
}

void TokenizerOracle(Check& c) {
  const auto doc = nlohmann::json::parse(ReadFile(DataPath("wordpiece_fixtures.json")));
  const auto& fixtures = doc.at("fixtures");
  c.Expect(fixtures.size() == 50, fmt::format("{} fixtures", fixtures.size()));
  c.Expect(BertVocab().size() == 30522, "vocabulary size");
  std::size_t matched = 0;
  for (const auto& f : fixtures) {
    const std::string text = f.at("text");
    const auto ids = WordPieceTokenize(text, BertVocab());
    const bool ok = ids == f.at("ids").get<std::vector<TokenId>>() &&
                    IdsToTokens(ids, BertVocab()) == f.at("tokens").get<std::vector<std::string>>();
    c.Expect(ok, "mismatch on \"" + text + "\"");
    matched += ok;
  }
  c.detail = fmt::format("{}/{} fixtures exact", matched, fixtures.size());
}

void PearsonSuite(Check& c) {
  const std::vector<double> x = {0.3, 1.7, 2.2, 9.0, -4.1};
  std::vector<double> neg;
  for (double v : x) neg.push_back(-v);
  c.Expect(Pearson(x, x).value() == 1.0, "self-correlation");
  c.Expect(Pearson(x, neg).value() == -1.0, "negation");

  SplitMix64 rng(11);
  std::vector<double> a(50), b(50), fa, fb, flip;
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = rng.Gaussian();
    b[i] = 0.5 * a[i] + rng.Gaussian();
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    fa.push_back(3.5 * a[i] - 12.0);
    fb.push_back(0.25 * b[i] + 40.0);
    flip.push_back(-2.0 * b[i] + 1.0);
  }
  const double r = Pearson(a, b).value();
  const double affine = std::max(std::abs(Pearson(fa, fb).value() - r),
                                 std::abs(Pearson(a, flip).value() + r));
  c.Expect(affine <= 1e-12, fmt::format("affine drift {:.3g}", affine));

  const std::vector<double> hx = {1, 2, 3, 4, 5};
  const std::vector<double> hy = {1, 3, 2, 5, 4};
  const double hand = std::abs(Pearson(hx, hy).value() - 0.8);
  c.Expect(hand <= 1e-12, fmt::format("hand case error {:.3g}", hand));

  const std::vector<double> one = {1.0}, flat = {2.0, 2.0, 2.0}, ramp = {1.0, 2.0, 3.0};
  c.Expect(Pearson(one, one).reason() == SkipReason::kTooShort, "N = 1");
  c.Expect(Pearson(std::vector<double>{}, std::vector<double>{}).reason() ==
               SkipReason::kTooShort,
           "N = 0");
  c.Expect(Pearson(flat, ramp).reason() == SkipReason::kZeroVariance, "constant x");
  c.Expect(Pearson(ramp, flat).reason() == SkipReason::kZeroVariance, "constant y");
  c.detail = fmt::format("affine drift {:.2g}, hand case error {:.2g}", affine, hand);
}

ProbeDataset NoisyLine() {
  SplitMix64 rng(9);
  std::vector<std::vector<double>> z;
  std::vector<double> y;
  for (int i = 0; i < 64; ++i) {
    const double x = -1.0 + 2.0 * i / 63.0;
    z.push_back({x});
    y.push_back(2.0 * x + 1.0 + 0.1 * rng.Gaussian());
  }
  return ProbeDataset::FromSamples(z, y);
}

ProbeDataset RandomDataset(int queries, int d, std::uint64_t seed) {
  SplitMix64 rng(seed);
  ProbeDataset data;
  data.dim = d;
  for (int q = 0; q < queries; ++q) {
    QuerySamples s;
    s.query_id = "q" + std::to_string(q);
    const auto n = 1 + rng.Below(6);
    for (std::uint64_t i = 0; i < n; ++i) {
      double y = 0.5;
      for (int j = 0; j < d; ++j) {
        const float v = static_cast<float>(rng.Gaussian());
        s.features.push_back(v);
        y += (j + 1) * 0.3 * v;
      }
      s.targets.push_back(y + 0.2 * rng.Gaussian());
    }
    data.queries.push_back(std::move(s));
  }
  return data;
}

SplitAssignment SplitOf(const BundleManifest& m, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const auto& q : m.queries) ids.push_back(q.query_id);
  return SplitQueries(ids, seed, {});
}

void SolverEquivalence(Check& c) {
  const auto start = Clock::now();
  std::vector<std::pair<std::string, ProbeDataset>> datasets;
  datasets.emplace_back("line", NoisyLine());
  for (std::uint64_t seed : {1, 2, 3, 4}) {
    datasets.emplace_back(fmt::format("random{}", seed), RandomDataset(40, 3, seed));
  }
  {
    const IdfTable idf = SyntheticIdf();
    SynthSpec spec;
    spec.queries = SyntheticQueries(240, 17);
    spec.noise_sigma = 0.3;
    spec.layer_count = 1;
    const ActivationBundle b = SynthBundle(spec, idf);
    const auto targets = TargetsFromBundle(b.manifest(), idf);
    const auto split = SplitOf(b.manifest(), 42);
    for (int layer : {0, 1}) {
      datasets.emplace_back(fmt::format("synth/{}", LayerTag{layer}.ToString()),
                            CollectSamples(b, LayerTag{layer}, targets, split, Split::kTrain));
    }
  }
  std::size_t pairs = 0;
  double worst_margin = -1e300;
  for (const auto& [name, data] : datasets) {
    const LinearProbe exact = TrainProbeClosed(data, 0.0);
    const double exact_mse = ProbeObjective(exact, data);
    for (double lr : {5e-5, 1e-3, 1e-2, 3e-2}) {
      SgdConfig config;
      config.lr = lr;
      config.batch = 16;
      config.max_epochs = 60;
      const double sgd_mse = ProbeObjective(TrainProbeSgd(data, {}, config), data);
      worst_margin = std::max(worst_margin, exact_mse - sgd_mse);
      c.Expect(exact_mse <= sgd_mse + 1e-6,
               fmt::format("{} lr {}: closed {:.6g} > sgd {:.6g}", name, lr, exact_mse,
                           sgd_mse));
      ++pairs;
    }
  }

  const ProbeDataset line = NoisyLine();
  const double exact_mse = ProbeObjective(TrainProbeClosed(line, 0.0), line);
  SgdConfig config;
  config.lr = 1e-2;
  config.batch = 8;
  config.max_epochs = 400;
  const double sgd_mse = ProbeObjective(TrainProbeSgd(line, {}, config), line);
  const double line_gap = sgd_mse / exact_mse - 1.0;
  c.Expect(std::abs(line_gap) <= 0.01, fmt::format("line fixture gap {:.3g}", line_gap));

  const ProbeDataset data = RandomDataset(20, 4, 3);
  const std::vector<double> w = {0.3, -0.2, 0.8, 0.05};
  const double bias = -0.4;
  std::vector<std::size_t> all(data.queries.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<double> grad(w.size() + 1);
  ObjectiveGradient(w, bias, data, all, grad);
  double worst_grad = 0.0;
  const double h = 1e-5;
  for (std::size_t k = 0; k <= w.size(); ++k) {
    std::vector<double> wp = w, wm = w;
    double bp = bias, bm = bias;
    if (k < w.size()) {
      wp[k] += h;
      wm[k] -= h;
    } else {
      bp += h;
      bm -= h;
    }
    const double numeric =
        (ProbeObjective(wp, bp, data) - ProbeObjective(wm, bm, data)) / (2 * h);
    worst_grad = std::max(worst_grad,
                          std::abs(grad[k] - numeric) / std::max(1.0, std::abs(numeric)));
  }
  c.Expect(worst_grad <= 1e-4, fmt::format("gradient error {:.3g}", worst_grad));

  const double elapsed = Seconds(start);
  c.Expect(elapsed < 30.0, fmt::format("runtime {:.1f}s", elapsed));
  c.detail = fmt::format(
      "{} closed/sgd pairs, line gap {:.2g}, gradient error {:.2g}, {:.2f} s", pairs,
      line_gap, worst_grad, elapsed);
}

void PlantedSignal(Check& c) {
  const IdfTable idf = SyntheticIdf();

  SynthSpec planted;
  planted.queries = SyntheticQueries(240, 17);
  planted.layer_count = 3;
  planted.designated_head = 2;
  const ActivationBundle clean = SynthBundle(planted, idf);
  const auto clean_targets = TargetsFromBundle(clean.manifest(), idf);
  const ProbeReport probes = ProbeAllLayers(clean, clean_targets, SplitOf(clean.manifest(), 42), {});
  double worst_probe = 0.0;
  for (const auto& l : probes.layers) {
    worst_probe = std::max(worst_probe, std::abs(l.summary.mean - 1.0));
    c.Expect(l.summary.count > 0, l.layer.ToString() + " has no test queries");
  }
  c.Expect(probes.layers.size() == 4, "layer count");
  c.Expect(worst_probe <= 1e-6, fmt::format("noiseless probe error {:.3g}", worst_probe));

  std::map<std::string, Split> everything;
  for (const auto& q : clean.manifest().queries) everything[q.query_id] = Split::kTest;
  const SplitAssignment all(0, {}, SplitUnit::kQuery, everything);
  const HeadCorrelationReport heads = HeadCorrelations(clean, clean_targets, all, Split::kTest, 0.3);
  const double head_error = std::abs(heads.heads[1].mean - 1.0);
  c.Expect(head_error <= 1e-12, fmt::format("designated head error {:.3g}", head_error));

  // Random representations. The probe split keeps 10% for testing, so the
  // bundle needs enough queries that the test mean is not dominated by chance.
  SynthSpec random;
  random.queries = SyntheticQueries(2000, 31);
  random.plant = PlantMode::kNone;
  random.layer_count = 2;
  random.designated_head = 0;
  random.other_heads = HeadMode::kRandom;
  random.seed = 77;
  const ActivationBundle noise = SynthBundle(random, idf);
  const auto noise_targets = TargetsFromBundle(noise.manifest(), idf);
  const ProbeReport null_probes =
      ProbeAllLayers(noise, noise_targets, SplitOf(noise.manifest(), 42), {});
  double worst_null = 0.0;
  for (const auto& l : null_probes.layers) {
    worst_null = std::max(worst_null, std::abs(l.summary.mean));
    c.Expect(l.summary.count >= 100, l.layer.ToString() + " test set too small");
  }
  std::map<std::string, Split> noise_all;
  for (const auto& q : noise.manifest().queries) noise_all[q.query_id] = Split::kTest;
  const HeadCorrelationReport null_heads =
      HeadCorrelations(noise, noise_targets,
                       SplitAssignment(0, {}, SplitUnit::kQuery, noise_all), Split::kTest, 0.3);
  double worst_head = 0.0;
  for (const auto& h : null_heads.heads) worst_head = std::max(worst_head, std::abs(h.mean));
  c.Expect(worst_null <= 0.15, fmt::format("random probe mean {:.3f}", worst_null));
  c.Expect(worst_head <= 0.15, fmt::format("random head mean {:.3f}", worst_head));
  c.detail = fmt::format(
      "noiseless probe error {:.2g}, head error {:.2g}; random |mean| probe {:.3f}, "
      "head {:.3f}",
      worst_probe, head_error, worst_null, worst_head);
}

std::string Bytes(const ActivationBundle& b) {
  std::ostringstream out;
  WriteBundle(b, out);
  return out.str();
}

std::string BundleErrorOf(const std::string& bytes) {
  try {
    std::istringstream in(bytes);
    ReadBundle(in);
  } catch (const BundleError& e) {
    return e.what();
  }
  return "no error";
}

int RunCli(std::vector<std::string> args, std::string* out = nullptr) {
  std::ostringstream o, e;
  const int code = cli::Run(args, o, e);
  if (out) *out = o.str();
  return code;
}

std::map<std::string, std::string> Snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) {
      files[fs::relative(entry.path(), dir).string()] = ReadFile(entry.path());
    }
  }
  return files;
}

void FormatRoundTrip(Check& c) {
  const IdfTable idf = SyntheticIdf();
  SynthSpec spec;
  spec.queries = SyntheticQueries(30, 5);
  spec.noise_sigma = 0.5;
  spec.other_heads = HeadMode::kRandom;
  const std::string bytes = Bytes(SynthBundle(spec, idf));
  std::istringstream in(bytes);
  c.Expect(Bytes(ReadBundle(in)) == bytes, "bundle round trip differs");

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  c.Expect(BundleErrorOf(bad_magic) == "not a bundle", "bad magic");
  c.Expect(BundleErrorOf(bytes.substr(0, 10)) == "truncated header", "short header");
  std::string version = bytes;
  version[4] = 2;
  c.Expect(BundleErrorOf(version) == "unsupported bundle version 2", "version");
  c.Expect(BundleErrorOf(bytes.substr(0, kBundleHeaderSize + 5)) == "truncated manifest",
           "short manifest");
  const std::string cut = BundleErrorOf(bytes.substr(0, bytes.size() - 1));
  c.Expect(cut.rfind("truncated at record ", 0) == 0, "truncated payload: " + cut);

  TempDir dir;
  const std::string vocab = DataPath("bert-base-uncased-vocab.txt").string();
  const std::string corpus = DataPath("toy_corpus.tsv").string();
  const std::string queries = DataPath("toy_queries.tsv").string();
  c.Expect(RunCli({"idf", "build", "--corpus", corpus, "--vocab", vocab, "--out",
                   (dir / "idf").string()}) == 0,
           "idf build");
  const std::string table = (dir / "idf" / "idf_table.json").string();
  c.Expect(RunCli({"bundle", "synth", "--queries", queries, "--vocab", vocab, "--idf", table,
                   "--sigma", "0.5", "--other-heads", "random", "--out",
                   (dir / "b").string()}) == 0,
           "bundle synth");
  const std::string bundle = (dir / "b" / "synth.idfb").string();
  const std::vector<std::vector<std::string>> commands = {
      {"idf", "build", "--corpus", corpus, "--vocab", vocab, "--threads", "3"},
      {"queries", "annotate", "--queries", queries, "--vocab", vocab, "--idf", table},
      {"bundle", "synth", "--queries", queries, "--vocab", vocab, "--idf", table, "--sigma",
       "0.5", "--other-heads", "random"},
      {"bundle", "inspect", "--bundle", bundle, "--vocab", vocab, "--queries", queries},
      {"probe", "run", "--bundle", bundle, "--idf", table, "--split", "0.5,0.25,0.25"},
      {"probe", "run", "--bundle", bundle, "--idf", table, "--split", "0.5,0.25,0.25",
       "--solver", "sgd", "--lr", "1e-2", "--epochs", "20"},
      {"attn", "run", "--bundle", bundle, "--idf", table, "--vocab", vocab},
      {"score", "tfidf", "--corpus", corpus, "--vocab", vocab, "--idf", table, "--queries",
       queries},
      {"plot", "--report", DataPath("fixture_layers_a.csv").string(), "--report",
       DataPath("fixture_layers_b.csv").string()},
      {"plot", "--report", DataPath("fixture_heads.csv").string()}};
  std::size_t compared = 0;
  int n = 0;
  for (const auto& args : commands) {
    const std::string label = args[0] + " " + (args[0] == "plot" ? "" : args[1]);
    const fs::path first = dir / fmt::format("r{}a", n);
    const fs::path second = dir / fmt::format("r{}b", n);
    ++n;
    auto a = args, b = args;
    a.insert(a.end(), {"--out", first.string()});
    b.insert(b.end(), {"--out", second.string()});
    std::string out_a, out_b, out_again;
    if (RunCli(a, &out_a) != 0 || RunCli(b, &out_b) != 0) {
      c.Expect(false, label + " failed");
      continue;
    }
    const auto snap = Snapshot(first);
    c.Expect(!snap.empty(), label + " wrote nothing");
    c.Expect(snap == Snapshot(second), label + " outputs differ between runs");
    c.Expect(out_a == out_b, label + " stdout differs between runs");
    c.Expect(RunCli(a, &out_again) == 0 && Snapshot(first) == snap,
             label + " rerun into existing directory differs");
    compared += snap.size();
  }
  c.detail = fmt::format("{}-byte bundle exact; {} commands, {} output files byte-identical",
                         bytes.size(), commands.size(), compared);
}

void Scorer(Check& c) {
  const Vocabulary& vocab = BertVocab();
  const Corpus corpus = ToyCorpus();
  const IdfTable idf = BuildIdfTable(corpus, vocab);
  const TokenizedQuery cat = TokenizeQuery("q", "cat", vocab);
  const auto d2 = WordPieceTokenize("The dog chased the cat; the cat ran.", vocab);
  const double hand = std::abs(TfidfScore(cat, d2, idf) - 2.0 * std::log(2.0));
  c.Expect(hand <= 1e-12, fmt::format("hand score error {:.3g}", hand));

  std::vector<std::vector<TokenId>> docs;
  for (const auto& d : corpus.documents()) docs.push_back(WordPieceTokenize(d.text, vocab));
  std::istringstream in(ReadFile(DataPath("toy_queries.tsv")));
  std::size_t checked = 0;
  for (const auto& [id, text] : ReadQueriesTsv(in)) {
    const TokenizedQuery q = TokenizeQuery(id, text, vocab);
    std::vector<double> brute(docs.size(), 0.0);
    for (std::size_t d = 0; d < docs.size(); ++d) {
      for (std::size_t i = 0; i < q.token_ids.size(); ++i) {
        if (!q.content_mask[i]) continue;
        for (TokenId t : docs[d]) {
          if (t == q.token_ids[i]) brute[d] += idf.idf(t);
        }
      }
    }
    std::vector<std::size_t> order(docs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return brute[a] > brute[b]; });
    const auto ranked = RankDocuments(q, docs, idf);
    bool same = ranked.size() == docs.size();
    for (std::size_t r = 0; same && r < ranked.size(); ++r) {
      same = ranked[r].index == order[r] &&
             std::abs(ranked[r].score - brute[order[r]]) <= 1e-12;
    }
    c.Expect(same, "ranking differs for " + id);
    ++checked;
  }
  c.detail = fmt::format("hand score error {:.2g}; {} query rankings match brute force", hand,
                         checked);
}

}  // namespace
}  // namespace idfprobe

int main() {
  using idfprobe::Check;
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria = {
      {"idf_oracle", idfprobe::IdfOracle},
      {"tokenizer_oracle", idfprobe::TokenizerOracle},
      {"pearson_suite", idfprobe::PearsonSuite},
      {"solver_equivalence", idfprobe::SolverEquivalence},
      {"planted_signal", idfprobe::PlantedSignal},
      {"format_round_trip", idfprobe::FormatRoundTrip},
      {"tfidf_scorer", idfprobe::Scorer},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Check c;
    try {
      run(c);
    } catch (const std::exception& e) {
      c.Expect(false, std::string("exception: ") + e.what());
    }
    failed += !c.ok();
    std::printf("%s %s: %s\n", c.ok() ? "PASS" : "FAIL", name.c_str(),
                c.ok() ? c.detail.c_str() : c.Failures().c_str());
  }
  return failed == 0 ? 0 : 1;
}
