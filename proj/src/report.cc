#include "idfprobe/report.h"

#include <fmt/format.h>

#include <charconv>
#include <cmath>

namespace idfprobe {
namespace {

constexpr std::string_view kStdNote =
    "population std across per-query correlations of the evaluated split";

std::string Number(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{:.10f}", v);
}

void AppendConfig(std::string& out, const ConfigEcho& config) {
  for (const auto& [key, value] : config) {
    out += fmt::format("# {}: {}\n", key, value);
  }
  out += fmt::format("# std: {}\n", kStdNote);
}

std::string CorrelationCell(const Correlation& c) {
  return c.defined() ? Number(c.value()) + "," : "," + std::string(ToString(c.reason()));
}

std::vector<std::string_view> SplitCsv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(pos));
      return cells;
    }
    cells.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
}

double ParseReal(std::string_view cell, std::size_t line) {
  if (cell == "nan") return std::nan("");
  const std::string s(cell);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = std::string::npos;
  }
  if (s.empty() || used != s.size()) {
    throw ReportParseError(fmt::format("row {}: bad number '{}'", line, cell));
  }
  return v;
}

std::size_t ParseCount(std::string_view cell, std::size_t line) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty()) {
    throw ReportParseError(fmt::format("row {}: bad count '{}'", line, cell));
  }
  return v;
}

}  // namespace

std::string ProbeReportCsv(const ProbeReport& report) {
  std::string out;
  AppendConfig(out, report.config);
  out += "layer,mean,std,count,skipped\n";
  for (const auto& layer : report.layers) {
    const auto& s = layer.summary;
    out += fmt::format("{},{},{},{},{}\n", layer.layer.ToString(), Number(s.mean),
                       Number(s.std), s.count, s.skipped);
  }
  return out;
}

std::string ProbeQueriesCsv(const ProbeReport& report) {
  std::string out;
  AppendConfig(out, report.config);
  out += "query_id,layer,correlation,skip_reason\n";
  for (const auto& layer : report.layers) {
    for (const auto& q : layer.per_query) {
      out += fmt::format("{},{},{}\n", q.query_id, layer.layer.ToString(),
                         CorrelationCell(q.value));
    }
  }
  return out;
}

std::string HeadReportCsv(const HeadCorrelationReport& report,
                          const ConfigEcho& config) {
  std::string out;
  AppendConfig(out, config);
  std::string flagged;
  for (std::size_t h = 0; h < report.flagged.size(); ++h) {
    if (!report.flagged[h]) continue;
    if (!flagged.empty()) flagged += ",";
    flagged += std::to_string(h + 1);
  }
  out += fmt::format("# flagged_heads (mean > {}): {}\n", Number(report.threshold),
                     flagged.empty() ? "none" : flagged);
  out += "head,mean,std,count,skipped\n";
  for (std::size_t h = 0; h < report.heads.size(); ++h) {
    const auto& s = report.heads[h];
    out += fmt::format("{},{},{},{},{}\n", h + 1, Number(s.mean), Number(s.std),
                       s.count, s.skipped);
  }
  return out;
}

std::string HeadQueriesCsv(const HeadCorrelationReport& report,
                           const ConfigEcho& config) {
  std::string out;
  AppendConfig(out, config);
  out += "query_id,head,correlation,skip_reason\n";
  for (std::size_t h = 0; h < report.per_query.size(); ++h) {
    for (const auto& q : report.per_query[h]) {
      out += fmt::format("{},{},{}\n", q.query_id, h + 1, CorrelationCell(q.value));
    }
  }
  return out;
}

std::string ExamplesJson(const std::vector<AttentionExample>& examples) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : examples) arr.push_back(e.ToJson());
  return arr.dump(1) + "\n";
}

ReportTable ParseReportCsv(std::string_view text) {
  ReportTable table;
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line.front() == '#') {
      const std::size_t colon = line.find(": ");
      if (colon != std::string_view::npos) {
        table.config.emplace_back(std::string(line.substr(2, colon - 2)),
                                  std::string(line.substr(colon + 2)));
      }
      continue;
    }
    const auto cells = SplitCsv(line);
    if (!have_header) {
      if (cells.size() != 5 || cells[1] != "mean" || cells[2] != "std" ||
          cells[3] != "count" || cells[4] != "skipped" ||
          (cells[0] != "layer" && cells[0] != "head")) {
        throw ReportParseError(fmt::format("row {}: unrecognized header", line_no));
      }
      table.kind = cells[0] == "layer" ? ReportKind::kLayer : ReportKind::kHead;
      have_header = true;
      continue;
    }
    if (cells.size() != 5) {
      throw ReportParseError(
          fmt::format("row {}: expected 5 columns, found {}", line_no, cells.size()));
    }
    ReportRow row;
    row.label = std::string(cells[0]);
    if (table.kind == ReportKind::kLayer) {
      try {
        LayerTag::Parse(row.label);
      } catch (const std::invalid_argument&) {
        throw ReportParseError(fmt::format("row {}: bad layer '{}'", line_no, row.label));
      }
    } else {
      ParseCount(cells[0], line_no);
    }
    row.mean = ParseReal(cells[1], line_no);
    row.std = ParseReal(cells[2], line_no);
    row.count = ParseCount(cells[3], line_no);
    row.skipped = ParseCount(cells[4], line_no);
    table.rows.push_back(std::move(row));
  }
  if (table.rows.empty()) throw ReportParseError("no rows");
  return table;
}

std::vector<QueryRow> ParseQueriesCsv(std::string_view text) {
  std::vector<QueryRow> rows;
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    const auto cells = SplitCsv(line);
    if (cells.size() != 4) {
      throw ReportParseError(
          fmt::format("row {}: expected 4 columns, found {}", line_no, cells.size()));
    }
    if (!have_header) {
      if (cells[0] != "query_id" || (cells[1] != "layer" && cells[1] != "head") ||
          cells[2] != "correlation" || cells[3] != "skip_reason") {
        throw ReportParseError(fmt::format("row {}: unrecognized header", line_no));
      }
      have_header = true;
      continue;
    }
    QueryRow row{std::string(cells[0]), std::string(cells[1]), Correlation::Of(0.0)};
    if (cells[2].empty()) {
      if (cells[3] == ToString(SkipReason::kTooShort)) {
        row.value = Correlation::Undefined(SkipReason::kTooShort);
      } else if (cells[3] == ToString(SkipReason::kZeroVariance)) {
        row.value = Correlation::Undefined(SkipReason::kZeroVariance);
      } else {
        throw ReportParseError(
            fmt::format("row {}: bad skip reason '{}'", line_no, cells[3]));
      }
    } else {
      row.value = Correlation::Of(ParseReal(cells[2], line_no));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ReportParseError("no rows");
  return rows;
}

std::string GapsCsv(std::string_view group_column,
                    const std::vector<std::pair<std::string, std::vector<CorrelationGap>>>& gaps,
                    const ConfigEcho& config) {
  std::string out;
  for (const auto& [key, value] : config) out += fmt::format("# {}: {}\n", key, value);
  out += fmt::format("query_id,{},first,second,gap\n", group_column);
  for (const auto& [group, list] : gaps) {
    for (const auto& g : list) {
      out += fmt::format("{},{},{},{},{}\n", g.query_id, group, Number(g.first),
                         Number(g.second), Number(g.gap()));
    }
  }
  return out;
}

}  // namespace idfprobe
