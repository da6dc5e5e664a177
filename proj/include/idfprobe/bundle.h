#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "idfprobe/vocabulary.h"

namespace idfprobe {

// IDFB v1 layout:
//   "IDFB" | version u32 LE | manifest length u64 LE | manifest (UTF-8 JSON)
//   | payload
// Record offsets are relative to the start of the payload. Tensors are
// float32, little-endian, row-major.
inline constexpr std::string_view kBundleMagic = "IDFB";
inline constexpr std::uint32_t kBundleVersion = 1;
inline constexpr std::size_t kBundleHeaderSize = 16;
inline constexpr double kAttentionRowTolerance = 1e-4;

class BundleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TensorRecord {
  std::string name;
  std::vector<std::int64_t> shape;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;

  std::uint64_t element_count() const;
  friend bool operator==(const TensorRecord&, const TensorRecord&) = default;
};

struct QueryEntry {
  std::string query_id;
  std::vector<TokenId> token_ids;
  std::vector<bool> content_mask;
  bool truncated = false;

  std::size_t length() const { return token_ids.size(); }
  friend bool operator==(const QueryEntry&, const QueryEntry&) = default;
};

std::string EmbeddingRecordName(std::string_view query_id);
/// `layer` is 1-based.
std::string LayerRecordName(std::string_view query_id, int layer);
std::string AttentionRecordName(std::string_view query_id);

struct BundleManifest {
  std::string model_name;
  int hidden_dim = 0;
  int layer_count = 0;
  int head_count = 0;
  std::string vocab_hash;
  std::vector<QueryEntry> queries;
  std::vector<TensorRecord> records;
  /// Unrecognized top-level manifest keys, preserved through a rewrite.
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();

  friend bool operator==(const BundleManifest&, const BundleManifest&) = default;
};

nlohmann::ordered_json ManifestToJson(const BundleManifest& manifest);
BundleManifest ManifestFromJson(const nlohmann::ordered_json& json);

struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;

  std::int64_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  std::span<const float> row(std::int64_t r) const {
    return std::span<const float>(data).subspan(
        static_cast<std::size_t>(r * cols()), static_cast<std::size_t>(cols()));
  }
};

/// Read access to the tensors of a bundle, eager or lazy.
class RecordSource {
 public:
  virtual ~RecordSource() = default;
  virtual const BundleManifest& manifest() const = 0;
  /// Throws BundleError on I/O failure.
  virtual Tensor Load(const TensorRecord& record) const = 0;

  const TensorRecord* FindRecord(std::string_view name) const;
  std::optional<Tensor> LoadByName(std::string_view name) const;

 protected:
  void IndexRecords();

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

/// A fully materialized bundle: manifest plus raw payload bytes.
class ActivationBundle : public RecordSource {
 public:
  ActivationBundle() { IndexRecords(); }
  ActivationBundle(BundleManifest manifest, std::string payload);

  const BundleManifest& manifest() const override { return manifest_; }
  Tensor Load(const TensorRecord& record) const override;

  const std::string& payload() const { return payload_; }
  /// Attention-row normalization warnings collected by ReadBundle.
  const std::vector<std::string>& warnings() const { return warnings_; }
  void set_warnings(std::vector<std::string> w) { warnings_ = std::move(w); }

 private:
  BundleManifest manifest_;
  std::string payload_;
  std::vector<std::string> warnings_;
};

/// Accumulates tensors into a contiguous payload.
class BundleBuilder {
 public:
  BundleBuilder(std::string model_name, int hidden_dim, int layer_count,
                int head_count, std::string vocab_hash);

  void AddQuery(QueryEntry query);
  void AddTensor(std::string name, std::vector<std::int64_t> shape,
                 std::span<const float> values);
  /// Validates and returns the bundle; throws BundleError on violations.
  ActivationBundle Build() &&;

 private:
  BundleManifest manifest_;
  std::string payload_;
};

/// Checks manifest-level invariants: unique names and query ids, length =
/// 4 * product(shape), non-overlapping records, expected shapes for
/// embedding/layer/attention records. Throws BundleError naming the
/// offending record or query.
void ValidateManifest(const BundleManifest& manifest);

/// Returns one warning per attention row whose sum falls outside
/// 1 +- kAttentionRowTolerance.
std::vector<std::string> CheckAttentionRows(const RecordSource& source);

/// Returns the number of bytes written.
std::uint64_t WriteBundle(const ActivationBundle& bundle, std::ostream& sink);
void SaveBundle(const ActivationBundle& bundle, const std::filesystem::path& path);

/// Eager read. Errors: "not a bundle" (bad magic), "truncated at record
/// <name>" (short payload), and manifest violations. Attention rows that are
/// not normalized produce warnings, not errors.
ActivationBundle ReadBundle(std::istream& source);
ActivationBundle LoadBundle(const std::filesystem::path& path);

/// Lazy reader: parses the header and manifest up front and loads records
/// by offset on demand. Safe for concurrent Load() calls.
class BundleReader : public RecordSource {
 public:
  explicit BundleReader(const std::filesystem::path& path);

  const BundleManifest& manifest() const override { return manifest_; }
  Tensor Load(const TensorRecord& record) const override;

 private:
  BundleManifest manifest_;
  std::uint64_t payload_start_ = 0;
  mutable std::ifstream file_;
  mutable std::mutex mutex_;
};

}  // namespace idfprobe
