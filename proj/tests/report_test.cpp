#include <gtest/gtest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "guiseprobe/error.hpp"
#include "guiseprobe/report.hpp"
#include "test_util.hpp"

namespace guiseprobe {
namespace {

TEST(FormatNumber, SpecialValues) {
  EXPECT_EQ(FormatNumber(0.25), "0.25");
  EXPECT_EQ(FormatNumber(-0.0), "0");
  EXPECT_EQ(FormatNumber(1.0 / 3.0), "0.3333333333");
  EXPECT_EQ(FormatNumber(INFINITY), "inf");
  EXPECT_EQ(FormatNumber(-INFINITY), "-inf");
  EXPECT_EQ(FormatNumber(NAN), "nan");
  EXPECT_EQ(FormatNumber(1e-300), "1e-300");
}

TEST(Table, CsvQuotingAndArity) {
  Table table("t", {"a", "b"});
  table.Add({"x,y", "say \"hi\""});
  EXPECT_THROW(table.Add({"only one"}), PreconditionError);
  EXPECT_EQ(table.ToCsv(), "a,b\n\"x,y\",\"say \"\"hi\"\"\"\n");
}

TEST(Table, Markdown) {
  Table table("t", {"a", "b"});
  table.Add({"1", "p|q"});
  EXPECT_EQ(table.ToMarkdown(), "| a | b |\n|---|---|\n| 1 | p\\|q |\n");
}

StudyReport Sample() {
  StudyReport report;
  report.study = "covert_stereotype";
  report.config_fingerprint = "abc";
  report.seeds["permutation"] = 42;
  Table table("top5", {"family", "rank", "token"});
  table.Add({"gpt2", "1", "lazy"});
  report.tables.push_back(table);
  stats::TestResult r;
  r.statistic = 3.0;
  r.df = 10;
  r.p_value = 0.01;
  report.tests.push_back({"agreement", {{"family", "gpt2"}, {"study", "katz1933"}}, r});
  r.p_value = 0.04;
  report.tests.push_back({"agreement", {{"family", "roberta"}, {"study", "katz1933"}}, r});
  report.exclusions.push_back({"fly", "p0", "gpt2", "matched", 3, false, "probability missing"});
  report.notes.push_back("a note");
  return report;
}

TEST(StudyReport, FindAndHolm) {
  auto report = Sample();
  EXPECT_NE(report.FindTable("top5"), nullptr);
  EXPECT_EQ(report.FindTable("nope"), nullptr);
  EXPECT_EQ(report.FindTest("agreement", {{"family", "roberta"}})->result.p_value, 0.04);
  EXPECT_EQ(report.FindTest("agreement", {{"family", "bert"}}), nullptr);
  report.ApplyHolm();
  EXPECT_DOUBLE_EQ(*report.tests[0].result.corrected_p, 0.02);
  EXPECT_DOUBLE_EQ(*report.tests[1].result.corrected_p, 0.04);
}

TEST(WriteReport, WritesEveryArtifactDeterministically) {
  testing::TempDir dir;
  auto report = Sample();
  report.ApplyHolm();
  WriteReport(report, dir.path() / "a");
  WriteReport(report, dir.path() / "b");
  for (const char* name :
       {"top5.csv", "tests.csv", "exclusions.csv", "manifest.json", "summary.md"}) {
    const auto a = testing::ReadFile(dir.path() / "a" / name);
    EXPECT_FALSE(a.empty()) << name;
    EXPECT_EQ(a, testing::ReadFile(dir.path() / "b" / name)) << name;
  }
  const auto manifest =
      nlohmann::json::parse(testing::ReadFile(dir.path() / "a" / "manifest.json"));
  EXPECT_EQ(manifest["config_fingerprint"], "abc");
  EXPECT_EQ(manifest["seeds"]["permutation"], 42);
  EXPECT_EQ(manifest["tests"].size(), 2u);
  EXPECT_EQ(manifest["tests"][0]["p_holm"], "0.02");
  EXPECT_EQ(manifest["exclusions"][0]["token"], "fly");
  const auto tests = testing::ReadFile(dir.path() / "a" / "tests.csv");
  EXPECT_NE(tests.find("family=gpt2;study=katz1933"), std::string::npos);
  const auto summary = testing::ReadFile(dir.path() / "a" / "summary.md");
  EXPECT_NE(summary.find("- a note"), std::string::npos);
}

}  // namespace
}  // namespace guiseprobe
