#include "guiseprobe/report.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "guiseprobe/error.hpp"

namespace guiseprobe {

using nlohmann::json;

std::string FormatNumber(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  if (value == 0.0) return "0";  // folds -0
  return fmt::format("{:.10g}", value);
}

void Table::Add(std::vector<std::string> row) {
  if (row.size() != columns.size()) {
    throw PreconditionError("table '" + name + "': row has " +
                            std::to_string(row.size()) + " cells, expected " +
                            std::to_string(columns.size()));
  }
  rows.push_back(std::move(row));
}

namespace {

std::string CsvCell(const std::string& cell) {
  if (cell.find_first_of(",\"\n\r") == std::string::npos) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string CsvLine(const std::vector<std::string>& cells) {
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ',';
    line += CsvCell(cells[i]);
  }
  return line + "\n";
}

std::string MdCell(const std::string& cell) {
  std::string out;
  for (char c : cell) {
    if (c == '|') out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out;
}

std::string KeysText(const std::map<std::string, std::string>& keys) {
  std::string out;
  for (const auto& [k, v] : keys) {
    if (!out.empty()) out += ';';
    out += k + "=" + v;
  }
  return out;
}

void WriteFile(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

}  // namespace

std::string Table::ToCsv() const {
  std::string out = CsvLine(columns);
  for (const auto& row : rows) out += CsvLine(row);
  return out;
}

std::string Table::ToMarkdown() const {
  std::string out = "|";
  std::string rule = "|";
  for (const auto& c : columns) {
    out += " " + MdCell(c) + " |";
    rule += "---|";
  }
  out += "\n" + rule + "\n";
  for (const auto& row : rows) {
    out += "|";
    for (const auto& cell : row) out += " " + MdCell(cell) + " |";
    out += "\n";
  }
  return out;
}

const Table* StudyReport::FindTable(std::string_view name) const {
  for (const auto& table : tables) {
    if (table.name == name) return &table;
  }
  return nullptr;
}

const NamedTest* StudyReport::FindTest(std::string_view name,
                                       const std::map<std::string, std::string>& keys) const {
  for (const auto& test : tests) {
    if (test.name != name) continue;
    bool match = true;
    for (const auto& [k, v] : keys) {
      const auto it = test.keys.find(k);
      if (it == test.keys.end() || it->second != v) match = false;
    }
    if (match) return &test;
  }
  return nullptr;
}

void StudyReport::ApplyHolm() {
  std::vector<double> p;
  for (const auto& test : tests) p.push_back(test.result.p_value);
  const auto corrected = stats::HolmBonferroni(p);
  for (std::size_t i = 0; i < tests.size(); ++i) tests[i].result.corrected_p = corrected[i];
}

Table StudyReport::TestsTable() const {
  Table table("tests", {"test", "keys", "statistic", "df", "df2", "p", "p_holm", "tail",
                        "boundary"});
  for (const auto& test : tests) {
    const auto& r = test.result;
    table.Add({test.name, KeysText(test.keys), FormatNumber(r.statistic), FormatNumber(r.df),
               r.df2 ? FormatNumber(*r.df2) : "", FormatNumber(r.p_value),
               r.corrected_p ? FormatNumber(*r.corrected_p) : "",
               std::string(stats::TailName(r.tail)), r.boundary ? "true" : "false"});
  }
  return table;
}

json TestToJson(const NamedTest& test) {
  const auto& r = test.result;
  json out = {{"name", test.name},
              {"keys", test.keys},
              {"statistic", FormatNumber(r.statistic)},
              {"df", FormatNumber(r.df)},
              {"p", FormatNumber(r.p_value)},
              {"tail", stats::TailName(r.tail)},
              {"boundary", r.boundary}};
  if (r.df2) out["df2"] = FormatNumber(*r.df2);
  if (r.corrected_p) out["p_holm"] = FormatNumber(*r.corrected_p);
  return out;
}

void WriteReport(const StudyReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& table : report.tables) {
    WriteFile(dir / (table.name + ".csv"), table.ToCsv());
  }
  const Table tests = report.TestsTable();
  WriteFile(dir / "tests.csv", tests.ToCsv());

  Table exclusions("exclusions",
                   {"token", "prompt", "backend", "setting", "dropped", "whole_token", "reason"});
  for (const auto& e : report.exclusions) {
    exclusions.Add({e.token, e.prompt, e.backend, e.setting, std::to_string(e.dropped),
                    e.whole_token ? "true" : "false", e.reason});
  }
  WriteFile(dir / "exclusions.csv", exclusions.ToCsv());

  json manifest;
  manifest["study"] = report.study;
  manifest["config_fingerprint"] = report.config_fingerprint;
  manifest["seeds"] = report.seeds;
  json table_names = json::array();
  for (const auto& table : report.tables) table_names.push_back(table.name + ".csv");
  manifest["tables"] = table_names;
  manifest["tests"] = json::array();
  for (const auto& test : report.tests) manifest["tests"].push_back(TestToJson(test));
  manifest["exclusions"] = json::array();
  for (const auto& e : report.exclusions) {
    manifest["exclusions"].push_back({{"token", e.token},
                                      {"prompt", e.prompt},
                                      {"backend", e.backend},
                                      {"setting", e.setting},
                                      {"dropped", e.dropped},
                                      {"whole_token", e.whole_token},
                                      {"reason", e.reason}});
  }
  manifest["notes"] = report.notes;
  WriteFile(dir / "manifest.json", manifest.dump(2) + "\n");

  std::string md = "# " + report.study + "\n\n";
  md += "Config fingerprint: `" + report.config_fingerprint + "`\n\n";
  if (!report.seeds.empty()) {
    md += "Seeds:";
    for (const auto& [name, seed] : report.seeds) md += fmt::format(" {}={}", name, seed);
    md += "\n\n";
  }
  for (const auto& table : report.tables) {
    md += "## " + table.name + "\n\n" + table.ToMarkdown() + "\n";
  }
  if (!report.tests.empty()) md += "## tests\n\n" + tests.ToMarkdown() + "\n";
  if (!report.exclusions.empty()) {
    md += fmt::format("{} token exclusion(s); see exclusions.csv.\n\n",
                      report.exclusions.size());
  }
  if (!report.notes.empty()) {
    md += "## notes\n\n";
    for (const auto& note : report.notes) md += "- " + note + "\n";
  }
  WriteFile(dir / "summary.md", md);
}

}  // namespace guiseprobe
