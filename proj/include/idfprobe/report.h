#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "idfprobe/attn.h"
#include "idfprobe/probe.h"

namespace idfprobe {

using ConfigEcho = std::vector<std::pair<std::string, std::string>>;

// Report CSVs open with "# key: value" lines echoing the run configuration,
// followed by a header row and one row per layer or head.

/// Columns: layer, mean, std, count, skipped.
std::string ProbeReportCsv(const ProbeReport& report);
/// Columns: query_id, layer, correlation, skip_reason.
std::string ProbeQueriesCsv(const ProbeReport& report);

/// Columns: head, mean, std, count, skipped. Heads are 1-based.
std::string HeadReportCsv(const HeadCorrelationReport& report,
                          const ConfigEcho& config);
/// Columns: query_id, head, correlation, skip_reason.
std::string HeadQueriesCsv(const HeadCorrelationReport& report,
                           const ConfigEcho& config);

std::string ExamplesJson(const std::vector<AttentionExample>& examples);

class ReportParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ReportKind { kLayer, kHead };

struct ReportRow {
  std::string label;  // "embedding", "layer_3", or a head number
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
  std::size_t skipped = 0;
};

struct ReportTable {
  ReportKind kind = ReportKind::kLayer;
  ConfigEcho config;
  std::vector<ReportRow> rows;
};

/// Parses a layer or head report. Throws ReportParseError naming the line
/// number of a malformed row, or "no rows" when there is nothing to read.
ReportTable ParseReportCsv(std::string_view text);

/// One row of a per-query CSV: `group` is the layer tag or head number.
struct QueryRow {
  std::string query_id;
  std::string group;
  Correlation value;
};

/// Parses a layer or head per-query CSV with the same error contract as
/// ParseReportCsv.
std::vector<QueryRow> ParseQueriesCsv(std::string_view text);

/// Columns: query_id, <group_column>, first, second, gap.
std::string GapsCsv(std::string_view group_column,
                    const std::vector<std::pair<std::string, std::vector<CorrelationGap>>>& gaps,
                    const ConfigEcho& config);

}  // namespace idfprobe
