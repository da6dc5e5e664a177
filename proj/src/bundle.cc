#include "idfprobe/bundle.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>
#include <unordered_set>

#include "idfprobe/io_util.h"

namespace idfprobe {
namespace {

using json = nlohmann::ordered_json;

std::uint32_t SwapBytes(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xFF00u) | ((v << 8) & 0xFF0000u) | (v << 24);
}

void AppendFloatsLE(std::string& out, std::span<const float> values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * 4);
  char* dst = out.data() + start;
  for (float f : values) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
    if constexpr (std::endian::native == std::endian::big) bits = SwapBytes(bits);
    std::memcpy(dst, &bits, 4);
    dst += 4;
  }
}

std::vector<float> DecodeFloatsLE(const char* src, std::size_t count) {
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, src + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big) bits = SwapBytes(bits);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

template <typename T>
void PutLE(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T GetLE(const char* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<T>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return v;
}

struct Header {
  std::uint32_t version = 0;
  std::uint64_t manifest_length = 0;
};

Header ParseHeader(const char* bytes, std::size_t available) {
  if (available < kBundleMagic.size() ||
      std::string_view(bytes, kBundleMagic.size()) != kBundleMagic) {
    throw BundleError("not a bundle");
  }
  if (available < kBundleHeaderSize) throw BundleError("truncated header");
  Header h;
  h.version = GetLE<std::uint32_t>(bytes + 4);
  h.manifest_length = GetLE<std::uint64_t>(bytes + 8);
  if (h.version != kBundleVersion) {
    throw BundleError("unsupported bundle version " + std::to_string(h.version));
  }
  return h;
}

BundleManifest ParseManifest(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw BundleError(std::string("malformed manifest: ") + e.what());
  }
  try {
    return ManifestFromJson(doc);
  } catch (const json::exception& e) {
    throw BundleError(std::string("malformed manifest: ") + e.what());
  }
}

// Records sorted by offset; the first that does not fit names the truncation.
void CheckPayloadExtent(const BundleManifest& manifest, std::uint64_t available) {
  std::vector<const TensorRecord*> order;
  for (const auto& r : manifest.records) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) {
    return a->offset < b->offset;
  });
  for (const TensorRecord* r : order) {
    if (r->offset + r->length > available) {
      throw BundleError("truncated at record " + r->name);
    }
  }
}

}  // namespace

std::uint64_t TensorRecord::element_count() const {
  std::uint64_t n = 1;
  for (auto d : shape) n *= static_cast<std::uint64_t>(std::max<std::int64_t>(d, 0));
  return n;
}

std::string EmbeddingRecordName(std::string_view query_id) {
  return std::string(query_id) + "/emb";
}

std::string LayerRecordName(std::string_view query_id, int layer) {
  return std::string(query_id) + "/layer/" + std::to_string(layer);
}

std::string AttentionRecordName(std::string_view query_id) {
  return std::string(query_id) + "/attn/last";
}

json ManifestToJson(const BundleManifest& m) {
  json doc = json::object();
  doc["format"] = std::string(kBundleMagic);
  doc["version"] = kBundleVersion;
  doc["model_name"] = m.model_name;
  doc["hidden_dim"] = m.hidden_dim;
  doc["layer_count"] = m.layer_count;
  doc["head_count"] = m.head_count;
  doc["vocab_hash"] = m.vocab_hash;
  json queries = json::array();
  for (const auto& q : m.queries) {
    json mask = json::array();
    for (bool b : q.content_mask) mask.push_back(b ? 1 : 0);
    queries.push_back(json{{"query_id", q.query_id},
                           {"token_ids", q.token_ids},
                           {"content_mask", std::move(mask)},
                           {"truncated", q.truncated}});
  }
  doc["queries"] = std::move(queries);
  json records = json::array();
  for (const auto& r : m.records) {
    records.push_back(json{{"name", r.name},
                           {"dtype", "float32"},
                           {"shape", r.shape},
                           {"offset", r.offset},
                           {"length", r.length}});
  }
  doc["records"] = std::move(records);
  for (const auto& [key, value] : m.extra.items()) doc[key] = value;
  return doc;
}

BundleManifest ManifestFromJson(const json& doc) {
  static const std::unordered_set<std::string> kKnown = {
      "format",    "version",    "model_name", "hidden_dim", "layer_count",
      "head_count", "vocab_hash", "queries",    "records"};
  BundleManifest m;
  m.model_name = doc.value("model_name", std::string());
  m.hidden_dim = doc.at("hidden_dim").get<int>();
  m.layer_count = doc.at("layer_count").get<int>();
  m.head_count = doc.at("head_count").get<int>();
  m.vocab_hash = doc.value("vocab_hash", std::string());
  for (const auto& q : doc.at("queries")) {
    QueryEntry e;
    e.query_id = q.at("query_id").get<std::string>();
    e.token_ids = q.at("token_ids").get<std::vector<TokenId>>();
    for (const auto& b : q.at("content_mask")) {
      e.content_mask.push_back(b.is_boolean() ? b.get<bool>() : b.get<int>() != 0);
    }
    e.truncated = q.value("truncated", false);
    m.queries.push_back(std::move(e));
  }
  for (const auto& r : doc.at("records")) {
    const std::string dtype = r.value("dtype", std::string("float32"));
    TensorRecord rec;
    rec.name = r.at("name").get<std::string>();
    if (dtype != "float32" && dtype != "f32") {
      throw BundleError("record " + rec.name + ": unsupported dtype " + dtype);
    }
    rec.shape = r.at("shape").get<std::vector<std::int64_t>>();
    rec.offset = r.at("offset").get<std::uint64_t>();
    rec.length = r.at("length").get<std::uint64_t>();
    m.records.push_back(std::move(rec));
  }
  for (const auto& [key, value] : doc.items()) {
    if (!kKnown.count(key)) m.extra[key] = value;
  }
  return m;
}

void ValidateManifest(const BundleManifest& m) {
  if (m.hidden_dim < 1) throw BundleError("hidden_dim must be >= 1");
  if (m.layer_count < 0 || m.head_count < 0) {
    throw BundleError("layer_count and head_count must be >= 0");
  }
  std::map<std::string, std::vector<std::int64_t>> expected;
  std::unordered_set<std::string> query_ids;
  for (const auto& q : m.queries) {
    if (!query_ids.insert(q.query_id).second) {
      throw BundleError("duplicate query id " + q.query_id);
    }
    if (q.token_ids.size() != q.content_mask.size()) {
      throw BundleError("query " + q.query_id +
                        ": token_ids and content_mask differ in length");
    }
    const auto t = static_cast<std::int64_t>(q.length());
    expected[EmbeddingRecordName(q.query_id)] = {t, m.hidden_dim};
    for (int l = 1; l <= m.layer_count; ++l) {
      expected[LayerRecordName(q.query_id, l)] = {t, m.hidden_dim};
    }
    expected[AttentionRecordName(q.query_id)] = {m.head_count, t};
  }

  std::unordered_set<std::string> names;
  std::vector<const TensorRecord*> order;
  for (const auto& r : m.records) {
    if (!names.insert(r.name).second) {
      throw BundleError("duplicate record " + r.name);
    }
    if (r.shape.empty() ||
        std::any_of(r.shape.begin(), r.shape.end(), [](auto d) { return d < 0; })) {
      throw BundleError("record " + r.name + ": invalid shape");
    }
    if (r.length != 4 * r.element_count()) {
      throw BundleError("record " + r.name + ": byte length " +
                        std::to_string(r.length) + " != 4 * product(shape) = " +
                        std::to_string(4 * r.element_count()));
    }
    auto it = expected.find(r.name);
    if (it != expected.end() && it->second != r.shape) {
      throw BundleError("record " + r.name + ": shape does not match manifest");
    }
    order.push_back(&r);
  }
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) {
    return a->offset < b->offset;
  });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (order[i - 1]->offset + order[i - 1]->length > order[i]->offset) {
      throw BundleError("record " + order[i]->name + " overlaps record " +
                        order[i - 1]->name);
    }
  }
}

void RecordSource::IndexRecords() {
  index_.clear();
  const auto& records = manifest().records;
  for (std::size_t i = 0; i < records.size(); ++i) index_[records[i].name] = i;
}

const TensorRecord* RecordSource::FindRecord(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return nullptr;
  return &manifest().records[it->second];
}

std::optional<Tensor> RecordSource::LoadByName(std::string_view name) const {
  const TensorRecord* r = FindRecord(name);
  if (!r) return std::nullopt;
  return Load(*r);
}

ActivationBundle::ActivationBundle(BundleManifest manifest, std::string payload)
    : manifest_(std::move(manifest)), payload_(std::move(payload)) {
  IndexRecords();
}

Tensor ActivationBundle::Load(const TensorRecord& record) const {
  if (record.offset + record.length > payload_.size()) {
    throw BundleError("truncated at record " + record.name);
  }
  return Tensor{record.shape, DecodeFloatsLE(payload_.data() + record.offset,
                                             record.element_count())};
}

BundleBuilder::BundleBuilder(std::string model_name, int hidden_dim,
                             int layer_count, int head_count,
                             std::string vocab_hash) {
  manifest_.model_name = std::move(model_name);
  manifest_.hidden_dim = hidden_dim;
  manifest_.layer_count = layer_count;
  manifest_.head_count = head_count;
  manifest_.vocab_hash = std::move(vocab_hash);
}

void BundleBuilder::AddQuery(QueryEntry query) {
  manifest_.queries.push_back(std::move(query));
}

void BundleBuilder::AddTensor(std::string name, std::vector<std::int64_t> shape,
                              std::span<const float> values) {
  TensorRecord r;
  r.name = std::move(name);
  r.shape = std::move(shape);
  r.offset = payload_.size();
  r.length = 4 * values.size();
  if (values.size() != r.element_count()) {
    throw BundleError("record " + r.name + ": " + std::to_string(values.size()) +
                      " values for shape of " +
                      std::to_string(r.element_count()) + " elements");
  }
  AppendFloatsLE(payload_, values);
  manifest_.records.push_back(std::move(r));
}

ActivationBundle BundleBuilder::Build() && {
  ValidateManifest(manifest_);
  return ActivationBundle(std::move(manifest_), std::move(payload_));
}

std::vector<std::string> CheckAttentionRows(const RecordSource& source) {
  std::vector<std::string> warnings;
  for (const auto& q : source.manifest().queries) {
    const TensorRecord* r = source.FindRecord(AttentionRecordName(q.query_id));
    if (!r) continue;
    const Tensor t = source.Load(*r);
    if (t.cols() == 0) continue;
    for (std::int64_t h = 0; h < t.rows(); ++h) {
      double sum = 0.0;
      for (float v : t.row(h)) sum += v;
      if (!(std::abs(sum - 1.0) <= kAttentionRowTolerance)) {
        warnings.push_back("attention row sum " + FormatExact(sum) + " at " +
                           r->name + " head " + std::to_string(h + 1));
      }
    }
  }
  return warnings;
}

std::uint64_t WriteBundle(const ActivationBundle& bundle, std::ostream& sink) {
  const BundleManifest& m = bundle.manifest();
  ValidateManifest(m);
  for (const auto& r : m.records) {
    if (r.offset + r.length > bundle.payload().size()) {
      throw BundleError("record " + r.name + " extends past the payload");
    }
  }
  const std::string manifest = ManifestToJson(m).dump();
  std::string header(kBundleMagic);
  PutLE<std::uint32_t>(header, kBundleVersion);
  PutLE<std::uint64_t>(header, manifest.size());
  sink.write(header.data(), static_cast<std::streamsize>(header.size()));
  sink.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  sink.write(bundle.payload().data(),
             static_cast<std::streamsize>(bundle.payload().size()));
  if (!sink) throw BundleError("write failed");
  return header.size() + manifest.size() + bundle.payload().size();
}

void SaveBundle(const ActivationBundle& bundle,
                const std::filesystem::path& path) {
  std::ostringstream buf;
  WriteBundle(bundle, buf);
  WriteFileAtomic(path, buf.str());
}

ActivationBundle ReadBundle(std::istream& source) {
  char head[kBundleHeaderSize];
  source.read(head, kBundleHeaderSize);
  const Header h = ParseHeader(head, static_cast<std::size_t>(source.gcount()));

  std::string manifest_text(h.manifest_length, '\0');
  source.read(manifest_text.data(), static_cast<std::streamsize>(h.manifest_length));
  if (static_cast<std::uint64_t>(source.gcount()) != h.manifest_length) {
    throw BundleError("truncated manifest");
  }
  BundleManifest manifest = ParseManifest(manifest_text);
  ValidateManifest(manifest);

  std::ostringstream rest;
  rest << source.rdbuf();
  std::string payload = rest.str();
  CheckPayloadExtent(manifest, payload.size());

  ActivationBundle bundle(std::move(manifest), std::move(payload));
  bundle.set_warnings(CheckAttentionRows(bundle));
  return bundle;
}

ActivationBundle LoadBundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BundleError("cannot open bundle " + path.string());
  return ReadBundle(in);
}

BundleReader::BundleReader(const std::filesystem::path& path)
    : file_(path, std::ios::binary) {
  if (!file_) throw BundleError("cannot open bundle " + path.string());
  const std::uint64_t size = std::filesystem::file_size(path);
  char head[kBundleHeaderSize];
  file_.read(head, kBundleHeaderSize);
  const Header h = ParseHeader(head, static_cast<std::size_t>(file_.gcount()));
  if (kBundleHeaderSize + h.manifest_length > size) {
    throw BundleError("truncated manifest");
  }
  std::string manifest_text(h.manifest_length, '\0');
  file_.read(manifest_text.data(), static_cast<std::streamsize>(h.manifest_length));
  manifest_ = ParseManifest(manifest_text);
  ValidateManifest(manifest_);
  payload_start_ = kBundleHeaderSize + h.manifest_length;
  CheckPayloadExtent(manifest_, size - payload_start_);
  IndexRecords();
}

Tensor BundleReader::Load(const TensorRecord& record) const {
  std::string bytes(record.length, '\0');
  {
    std::lock_guard lock(mutex_);
    file_.clear();
    file_.seekg(static_cast<std::streamoff>(payload_start_ + record.offset));
    file_.read(bytes.data(), static_cast<std::streamsize>(record.length));
    if (static_cast<std::uint64_t>(file_.gcount()) != record.length) {
      throw BundleError("truncated at record " + record.name);
    }
  }
  return Tensor{record.shape, DecodeFloatsLE(bytes.data(), record.element_count())};
}

}  // namespace idfprobe
