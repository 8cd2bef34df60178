#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "guiseprobe/association.hpp"
#include "guiseprobe/stats.hpp"

namespace guiseprobe {

// Fixed-format number for report cells ("inf", "-inf", "nan" spelled out).
std::string FormatNumber(double value);

// A named table of pre-formatted cells.
struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  Table() = default;
  Table(std::string name, std::vector<std::string> columns)
      : name(std::move(name)), columns(std::move(columns)) {}

  void Add(std::vector<std::string> row);
  std::string ToCsv() const;
  std::string ToMarkdown() const;
};

struct NamedTest {
  std::string name;
  // Grouping keys, e.g. {"family", "gpt2"}, {"study", "katz1933"}.
  std::map<std::string, std::string> keys;
  stats::TestResult result;
};

struct StudyReport {
  std::string study;
  std::vector<Table> tables;
  std::vector<NamedTest> tests;
  std::vector<Exclusion> exclusions;
  std::vector<std::string> notes;
  std::map<std::string, std::uint64_t> seeds;
  std::string config_fingerprint;

  const Table* FindTable(std::string_view name) const;
  const NamedTest* FindTest(std::string_view name,
                            const std::map<std::string, std::string>& keys = {}) const;
  // Fills corrected_p on every test from one Holm-Bonferroni pass.
  void ApplyHolm();
  // Tests as a table (name, keys, statistic, df, p, corrected p, ...).
  Table TestsTable() const;
};

// Writes <dir>/<table>.csv for every table plus tests.csv, exclusions.csv,
// manifest.json and summary.md. Output depends only on the report.
void WriteReport(const StudyReport& report, const std::filesystem::path& dir);

nlohmann::json TestToJson(const NamedTest& test);

}  // namespace guiseprobe
