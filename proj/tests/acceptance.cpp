// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <unistd.h>
#include <spdlog/spdlog.h>

#include "guiseprobe/association.hpp"
#include "guiseprobe/backend.hpp"
#include "guiseprobe/config.hpp"
#include "guiseprobe/corpus.hpp"
#include "guiseprobe/ranking.hpp"
#include "guiseprobe/runner.hpp"
#include "guiseprobe/stats.hpp"
#include "guiseprobe/studies.hpp"
#include "guiseprobe/synth.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace guiseprobe;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

// Collects failed sub-checks so a FAIL line says which one broke.
struct Checks {
  std::vector<std::string> failures;
  void Expect(bool ok, std::string what) {
    if (!ok) failures.push_back(std::move(what));
  }
  void Near(double got, double want, double tol, const std::string& what) {
    Expect(std::fabs(got - want) <= tol, fmt::format("{}: got {:.12g}, want {:.12g}", what, got, want));
  }
  Outcome Result(std::string detail) const {
    if (failures.empty()) return {true, std::move(detail)};
    return {false, fmt::format("{} failure(s), first: {}", failures.size(), failures.front())};
  }
};

// Probabilities looked up by (prompt, token) through a function.
class FunctionBackend final : public Backend {
 public:
  using Fn = std::function<double(std::string_view, std::string_view)>;
  FunctionBackend(std::string id, Fn fn) : fn_(std::move(fn)) {
    descriptor_.id = std::move(id);
    descriptor_.family = descriptor_.id;
    descriptor_.version = "1";
  }
  const BackendDescriptor& descriptor() const override { return descriptor_; }
  ContinuationScores ScoreContinuations(std::string_view prompt,
                                        std::span<const std::string> candidates) override {
    ContinuationScores out;
    for (const auto& c : candidates) out.probabilities.emplace(c, fn_(prompt, c));
    return out;
  }
  SequenceScore ScoreSequence(std::string_view) override { return {}; }

 private:
  BackendDescriptor descriptor_;
  Fn fn_;
};

std::uint64_t Mix(std::string_view a, std::string_view b) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : a) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
  h = (h ^ 0xff) * 1099511628211ULL;
  for (char c : b) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
  return h;
}

TokenSet Adjectives() {
  return LoadTokenSet(DefaultDataDir() / "adjectives.txt", TokenKind::kAdjectives, "adjectives");
}

// ---------------------------------------------------------------------------

Outcome PermutationNullCriterion() {
  const TokenSet adjectives = Adjectives();
  const auto lists = LoadHumanTopLists(DefaultDataDir() / "princeton_top5.tsv");
  Checks checks;
  std::string detail;
  double slowest = 0.0;
  for (const auto& human : lists) {
    const auto start = Clock::now();
    const auto null = stats::PermutationNull(adjectives.tokens, human, 10000, 1);
    const double seconds = Seconds(start);
    slowest = std::max(slowest, seconds);
    checks.Expect(null.samples.size() == 10000, human.study_id + ": sample count");
    checks.Near(null.mean, 0.162, 0.01, human.study_id + " mean");
    checks.Near(null.sd, 0.106, 0.02, human.study_id + " sd");
    checks.Expect(seconds < 10.0, fmt::format("{}: {:.2f} s", human.study_id, seconds));
    detail += fmt::format("{} m={:.4f} s={:.4f}; ", human.study_id, null.mean, null.sd);
  }
  return checks.Result(detail + fmt::format("slowest {:.3f} s", slowest));
}

Outcome CalibrationInvarianceCriterion() {
  const TokenSet adjectives = Adjectives();
  const PromptTemplate prompt{"covert_trait/0", "The person says: `` {t} '' The person is",
                              Battery::kCovertTrait, ArticleRule::kNone};
  std::vector<std::string> ta, ts;
  for (int i = 0; i < 8; ++i) {
    ta.push_back(fmt::format("she finna go {}", i));
    ts.push_back(fmt::format("she's gonna go {}", i));
  }
  // Base probabilities: a fixed pseudo-random value per (prompt, token).
  auto base = [](std::string_view p, std::string_view token) {
    return 0.001 + static_cast<double>(Mix(p, token) % 100000) / 1e7;
  };
  FunctionBackend reference("ref", base);

  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> log_c(std::log(0.1), std::log(10.0));
  double worst = 0.0;
  for (Setting setting : {Setting::kMatched, Setting::kUnmatched}) {
    const GuiseCorpus corpus{"c", setting, ta, ts};
    const auto expected = Associate(corpus, prompt, adjectives, reference);
    for (int trial = 0; trial < 100; ++trial) {
      std::map<std::string, double, std::less<>> scale;
      for (const auto& token : adjectives.tokens) scale[token] = std::exp(log_c(gen));
      FunctionBackend perturbed("ref", [&](std::string_view p, std::string_view token) {
        return base(p, token) * scale.find(token)->second;
      });
      const auto got = Associate(corpus, prompt, adjectives, perturbed);
      for (std::size_t i = 0; i < got.rows.size(); ++i) {
        worst = std::max(worst, std::fabs(got.rows[i].q - expected.rows[i].q));
      }
    }
  }
  return {worst < 1e-9, fmt::format("200 perturbations, max |dq| = {:.3g}", worst)};
}

Outcome MapBruteForceCriterion() {
  Checks checks;
  std::size_t compared = 0;
  std::size_t perfect = 0;

  const std::vector<std::string> five = {"a", "b", "c", "d", "e"};
  const HumanTopList human5{"h", five};
  std::vector<std::string> perm = five;
  std::sort(perm.begin(), perm.end());
  do {
    Ranking ranking{perm};
    const double got = stats::MeanAveragePrecision(human5, ranking);
    const double want = oracle::MeanAveragePrecision(five, perm);
    checks.Expect(got == want, fmt::format("5-item permutation: {} vs {}", got, want));
    checks.Expect((got == 1.0) == (perm == five), "5-item iff");
    perfect += got == 1.0;
    ++compared;
  } while (std::next_permutation(perm.begin(), perm.end()));

  const TokenSet adjectives = Adjectives();
  std::mt19937_64 gen(37);
  for (int i = 0; i < 1000; ++i) {
    std::vector<std::string> tokens = adjectives.tokens;
    std::shuffle(tokens.begin(), tokens.end(), gen);
    std::vector<std::string> top(tokens.begin(), tokens.begin() + 5);
    std::shuffle(tokens.begin(), tokens.end(), gen);
    // Every tenth ranking puts the human list on top, in order or shuffled.
    if (i % 10 == 0) {
      std::vector<std::string> head = top;
      if (i % 20 == 10) std::shuffle(head.begin(), head.end(), gen);
      std::vector<std::string> rest;
      for (const auto& t : tokens) {
        if (std::find(top.begin(), top.end(), t) == top.end()) rest.push_back(t);
      }
      tokens = head;
      tokens.insert(tokens.end(), rest.begin(), rest.end());
    }
    const HumanTopList human{"h", top};
    const double got = stats::MeanAveragePrecision(human, Ranking{tokens});
    const double want = oracle::MeanAveragePrecision(top, tokens);
    checks.Expect(got == want, fmt::format("37-item ranking {}: {} vs {}", i, got, want));
    const bool ordered_match = std::equal(top.begin(), top.end(), tokens.begin());
    checks.Expect((got == 1.0) == ordered_match, fmt::format("37-item iff at {}", i));
    perfect += got == 1.0;
    ++compared;
  }
  return checks.Result(fmt::format("{} rankings compared exactly, {} with mAP = 1", compared,
                                   perfect));
}

GuiseCorpus MarkerCorpus(std::size_t n) {
  GuiseCorpus corpus;
  corpus.id = "marker";
  for (std::size_t i = 0; i < n; ++i) {
    corpus.treatment_texts.push_back(fmt::format("she finna help them {}", i));
    corpus.control_texts.push_back(fmt::format("she's gonna help them {}", i));
  }
  return corpus;
}

std::vector<PromptTemplate> Prompts(Battery battery) {
  return LoadPromptBattery(DefaultDataDir() / "prompts" / (std::string(BatteryName(battery)) + ".txt"),
                           battery);
}

BackendDescriptor Descriptor(std::string id) {
  BackendDescriptor d;
  d.id = std::move(id);
  d.family = d.id;
  d.version = "1";
  d.parameter_count = 100000000;
  return d;
}

Outcome PlantedBiasCriterion() {
  Checks checks;
  const TokenSet adjectives = Adjectives();
  // Alphabetical, which is also the tie order of equal scores.
  const std::vector<std::string> planted = {"dirty", "ignorant", "lazy", "rude", "stupid"};
  StereotypeInputs inputs;
  inputs.corpora = {MarkerCorpus(20)};
  inputs.prompts = Prompts(Battery::kCovertTrait);
  inputs.adjectives = adjectives;
  inputs.human_lists = {HumanTopList{"planted", planted}};

  PlantedBiasSpec spec;
  MarkerBias bias{"finna", {}};
  for (const auto& t : planted) bias.bias[t] = std::log(2.0);
  spec.plants = {bias};
  inputs.backends = {MakePlantedBiasOracle(Descriptor("planted"), spec)};
  const StudyOptions options{0, 1, 10000};

  const auto assoc = ProbeAssociations(inputs.corpora, inputs.backends, inputs.prompts,
                                       adjectives, 0);
  const auto top = Aggregate(assoc.rows).ranking.Top(5);
  checks.Expect(top == planted, "planted adjectives are not the ordered top 5");

  const StudyReport report = RunCovertStereotypes(inputs, options);
  const Table* overall = report.FindTable("agreement_overall");
  checks.Expect(overall && overall->rows.size() == 1 && overall->rows[0][2] == "1",
                "overall mAP is not 1");
  const NamedTest* test = report.FindTest("agreement", {{"family", "planted"}, {"study", "planted"}});
  double planted_p = 1.0;
  if (!test) {
    checks.Expect(false, "no agreement test");
  } else {
    planted_p = *test->result.corrected_p;
    checks.Expect(planted_p < 0.001, fmt::format("planted Holm p = {}", planted_p));
  }

  // Zero bias: per-prompt noise only. The test should not reject.
  std::size_t rejections = 0;
  std::string rejected_seeds;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    PlantedBiasSpec zero;
    zero.jitter_sd = 0.5;
    zero.jitter_seed = seed;
    inputs.backends = {MakePlantedBiasOracle(Descriptor("planted"), zero)};
    const StudyReport null_report = RunCovertStereotypes(inputs, {0, seed, 10000});
    const NamedTest* t =
        null_report.FindTest("agreement", {{"family", "planted"}, {"study", "planted"}});
    if (!t || *t->result.corrected_p < 0.05) {
      ++rejections;
      rejected_seeds += fmt::format(" {}(p={:.4f})", seed, t ? *t->result.corrected_p : 0.0);
    }
  }
  checks.Expect(rejections == 0,
                fmt::format("zero bias rejected at 0.05 for seed(s):{}", rejected_seeds));
  return checks.Result(fmt::format(
      "top5 = planted, mAP = 1, Holm p = {:.3g}; zero bias: 0/20 seeds rejected", planted_p));
}

Outcome StatisticsCriterion() {
  Checks c;
  const double e = 1e-9;
  const double pe = 1e-6;
  using stats::Tail;

  // t-tests.
  std::vector<double> eq = {2.0, 2.0, 2.0};
  auto r = stats::OneSampleTTest(eq, 2.0, Tail::kGreater);
  c.Near(r.statistic, 0.0, e, "t all equal");
  c.Near(r.p_value, 0.5, pe, "p all equal");
  std::vector<double> x123 = {1.0, 2.0, 3.0};
  r = stats::OneSampleTTest(x123, 0.0, Tail::kTwoSided);
  c.Near(r.statistic, 2.0 * std::sqrt(3.0), e, "t {1,2,3}");
  c.Near(r.df, 2.0, e, "df {1,2,3}");
  c.Near(r.p_value, 2.0 * oracle::StudentTUpper(r.statistic, 2.0), pe, "p {1,2,3}");
  r = stats::TwoSampleTTest(x123, x123, Tail::kTwoSided);
  c.Near(r.statistic, 0.0, e, "t identical groups");
  c.Near(r.p_value, 1.0, pe, "p identical groups");
  {
    // {1,2,3} vs {4,5,6,7}: means 2 and 5.5, pooled variance (2 + 5) / 5.
    std::vector<double> y = {4.0, 5.0, 6.0, 7.0};
    r = stats::TwoSampleTTest(x123, y, Tail::kLess);
    const double t = (2.0 - 5.5) / std::sqrt(7.0 / 5.0 * (1.0 / 3.0 + 1.0 / 4.0));
    c.Near(r.statistic, t, e, "pooled t");
    c.Near(r.df, 5.0, e, "pooled df");
    c.Near(r.p_value, oracle::StudentTUpper(-t, 5.0), pe, "pooled p");
  }
  // Chi-square.
  r = stats::ChiSquare2x2(50, 50, 50, 50);
  c.Near(r.statistic, 0.0, e, "chi2 independence");
  c.Near(r.p_value, 1.0, pe, "chi2 independence p");
  r = stats::ChiSquare2x2(30, 10, 10, 30);
  c.Near(r.statistic, 20.0, e, "chi2 [[30,10],[10,30]]");
  c.Near(r.p_value, oracle::ChiSquareUpper(20.0, 1.0), pe, "chi2 20 p");
  c.Near(stats::ChiSquareSurvival(3.841, 1.0), 0.05, 1e-4, "chi2 critical value");
  // Correlations.
  std::vector<double> xs = {1.0, 2.0, 3.0, 4.0, 5.0};
  std::vector<double> lin, cube;
  for (double v : xs) {
    lin.push_back(2.0 * v + 1.0);
    cube.push_back(v * v * v);
  }
  c.Near(stats::Pearson(xs, lin).statistic, 1.0, e, "pearson linear");
  c.Near(stats::Spearman(xs, cube).statistic, 1.0, e, "spearman monotone");
  c.Expect(stats::Pearson(xs, cube).statistic < 1.0, "pearson monotone < 1");
  std::vector<double> y312 = {3.0, 1.0, 2.0};
  r = stats::Spearman(x123, y312);
  c.Near(r.statistic, -0.5, e, "spearman hand ranks");
  {
    const double t = -0.5 * std::sqrt(1.0) / std::sqrt(1.0 - 0.25);
    c.Near(r.p_value, 2.0 * oracle::StudentTUpper(std::fabs(t), 1.0), pe, "spearman p");
  }
  {
    std::vector<double> a = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
    std::vector<double> b = {2.0, 1.0, 4.0, 3.0, 7.0, 5.0};
    r = stats::Pearson(a, b);
    const double ma = 3.5, mb = 11.0 / 3.0;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      sab += (a[i] - ma) * (b[i] - mb);
      saa += (a[i] - ma) * (a[i] - ma);
      sbb += (b[i] - mb) * (b[i] - mb);
    }
    const double rho = sab / std::sqrt(saa * sbb);
    c.Near(r.statistic, rho, e, "pearson hand");
    const double t = rho * std::sqrt(4.0) / std::sqrt(1.0 - rho * rho);
    c.Near(r.p_value, 2.0 * oracle::StudentTUpper(std::fabs(t), 4.0), pe, "pearson p");
  }
  // OLS.
  std::vector<double> y124 = {1.0, 2.0, 4.0};
  auto ols = stats::OlsSimple(x123, y124);
  c.Near(ols.beta, 1.5, e, "ols beta");
  c.Near(ols.intercept, -2.0 / 3.0, e, "ols intercept");
  c.Near(ols.r_squared, 27.0 / 28.0, e, "ols r2");
  c.Near(ols.f, 27.0, e, "ols F");
  c.Near(ols.p_value, oracle::FUpper(27.0, 1.0, 1.0), pe, "ols p");
  std::vector<double> twice;
  for (double v : xs) twice.push_back(2.0 * v);
  ols = stats::OlsSimple(xs, twice);
  c.Near(ols.beta, 2.0, e, "ols y=2x beta");
  c.Near(ols.r_squared, 1.0, e, "ols y=2x r2");
  std::vector<double> flat(5, 3.0);
  ols = stats::OlsSimple(xs, flat);
  c.Near(ols.beta, 0.0, e, "ols constant beta");
  c.Near(ols.r_squared, 0.0, e, "ols constant r2");
  // Distribution functions against quadrature.
  for (double df : {1.0, 2.0, 5.0, 16.0, 83.0}) {
    for (double t : {-6.0, -2.6, -0.3, 0.0, 0.7, 1.96, 3.4641, 7.9}) {
      c.Near(1.0 - stats::StudentTCdf(t, df), oracle::StudentTUpper(t, df), pe,
             fmt::format("t cdf t={} df={}", t, df));
    }
  }
  for (double df : {1.0, 2.0, 3.0, 10.0}) {
    for (double x : {0.01, 0.5, 1.0, 3.841, 10.0, 20.0, 60.0}) {
      c.Near(stats::ChiSquareSurvival(x, df), oracle::ChiSquareUpper(x, df), pe,
             fmt::format("chi2 sf x={} df={}", x, df));
    }
  }
  for (double d2 : {3.0, 10.0, 63.0}) {
    for (double f : {0.2, 1.0, 4.0, 15.1, 40.0}) {
      c.Near(stats::FSurvival(f, 1.0, d2), oracle::FUpper(f, 1.0, d2), pe,
             fmt::format("F sf f={} d2={}", f, d2));
    }
  }
  // Holm.
  const auto holm2 = stats::HolmBonferroni(std::vector<double>{0.01, 0.04});
  c.Near(holm2[0], 0.02, e, "holm [0.01,0.04][0]");
  c.Near(holm2[1], 0.04, e, "holm [0.01,0.04][1]");
  std::mt19937_64 gen(99);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> len(1, 20);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> p(static_cast<std::size_t>(len(gen)));
    for (auto& v : p) v = unit(gen) < 0.1 ? 1.0 : std::pow(unit(gen), 3.0);
    if (i % 7 == 0 && p.size() > 1) p[1] = p[0];  // ties
    const auto got = stats::HolmBonferroni(p);
    const auto want = oracle::Holm(p);
    for (std::size_t j = 0; j < p.size(); ++j) {
      c.Expect(got[j] == want[j], fmt::format("holm vector {} index {}", i, j));
    }
  }
  return c.Result("t, chi2, F, Pearson, Spearman, OLS, CDFs and 1000 Holm vectors match");
}

Outcome DecisionCriterion() {
  Checks c;
  const OutcomeSpec conviction{Battery::kConviction, {"acquitted", "convicted"}, "convicted"};
  auto d = CalibratedDecision({{"convicted", 0.3}, {"acquitted", 0.6}},
                              {{"convicted", 0.2}, {"acquitted", 0.6}}, conviction);
  c.Expect(d.outcome == "convicted", "hand example outcome");
  c.Near(d.calibrated_scores.at("convicted"), 1.5, 1e-12, "hand example convicted ratio");
  c.Near(d.calibrated_scores.at("acquitted"), 1.0, 1e-12, "hand example acquitted ratio");
  d = CalibratedDecision({{"convicted", 0.4}, {"acquitted", 0.4}},
                         {{"convicted", 0.5}, {"acquitted", 0.5}}, conviction);
  c.Expect(d.outcome == "acquitted" && d.tie, "tie goes to the non-detrimental outcome");

  const auto prompts = Prompts(Battery::kConviction);
  // Guise-independent: probabilities depend on the text number only.
  const std::size_t n = 500;
  GuiseCorpus corpus = MarkerCorpus(n);
  auto by_number = [](std::string_view prompt, std::string_view token) {
    const auto pos = prompt.find_first_of("0123456789");
    const bool odd = pos != std::string_view::npos &&
                     (prompt[prompt.find_first_not_of("0123456789", pos) - 1] - '0') % 2 == 1;
    if (token == "convicted") return odd ? 0.7 : 0.3;
    return odd ? 0.3 : 0.7;
  };
  DecisionInputs inputs{{corpus}, {std::make_shared<FunctionBackend>("indep", by_number)},
                        prompts, conviction};
  auto report = RunDecisions(inputs, {0, 1, 0});
  const NamedTest* test = report.FindTest("chi_square", {{"backend", "indep"}});
  double indep_chi2 = -1.0;
  if (!test) {
    c.Expect(false, "no chi-square for the guise-independent oracle");
  } else {
    indep_chi2 = test->result.statistic;
    c.Expect(indep_chi2 == 0.0, fmt::format("guise-independent chi2 = {}", indep_chi2));
  }

  // +0.1 calibrated ratio on the detrimental outcome for treatment texts.
  PlantedBiasSpec spec;
  spec.plants = {MarkerBias{"finna", {{"convicted", std::log(1.1)}}}};
  spec.jitter_sd = 0.25;
  spec.jitter_seed = 5;
  inputs.backends = {MakePlantedBiasOracle(Descriptor("shift"), spec)};
  report = RunDecisions(inputs, {0, 1, 0});
  test = report.FindTest("chi_square", {{"backend", "shift"}});
  double shift_p = 1.0;
  if (!test) {
    c.Expect(false, "no chi-square for the planted shift");
  } else {
    shift_p = test->result.p_value;
    c.Expect(shift_p < 0.01, fmt::format("planted shift p = {}", shift_p));
  }
  return c.Result(fmt::format(
      "hand examples exact; independent chi2 = {}; +0.1 shift at n = {}: p = {:.3g}", indep_chi2,
      n, shift_p));
}

Outcome PerplexityCriterion() {
  Checks c;
  PlantedBiasSpec uniform;
  uniform.vocab_size = 100;
  const auto backend = MakePlantedBiasOracle(Descriptor("uniform"), uniform);
  const double ppl = backend->ScoreSequence("she finna help them out").Perplexity();
  c.Near(ppl, 100.0, 1e-9, "uniform vocab 100");

  PlantedBiasSpec two;
  two.word_probs = {{"a", 0.5}, {"b", 0.25}};
  const auto worked = MakePlantedBiasOracle(Descriptor("two"), two);
  const auto score = worked->ScoreSequence("a b");
  c.Near(score.total_log_prob, std::log(0.5) + std::log(0.25), 1e-12, "two-token log prob");
  c.Near(score.Perplexity(), 2.0 * std::sqrt(2.0), 1e-9, "two-token perplexity");
  return c.Result(fmt::format("uniform {:.12g}; two-token {:.12g}", ppl, score.Perplexity()));
}

Outcome NoiseCriterion() {
  Checks c;
  const auto lexicon = ReadLines(DefaultDataDir() / "lexicons" / "frequent_words.txt");
  std::mt19937_64 gen(4);
  std::string text;
  for (int i = 0; i < 10000; ++i) {
    if (i) text += ' ';
    text += lexicon[gen() % lexicon.size()];
  }
  const auto result = synth::InjectNoise(text, 0.25, 17, lexicon);
  const double rate = static_cast<double>(result.modified) / static_cast<double>(result.words);
  c.Expect(result.words == 10000, "word count");
  c.Expect(rate >= 0.24 && rate <= 0.26, fmt::format("rate {}", rate));
  const auto again = synth::InjectNoise(text, 0.25, 17, lexicon);
  c.Expect(again.pair.treatment == result.pair.treatment, "same seed, different output");
  const auto other = synth::InjectNoise(text, 0.25, 18, lexicon);
  c.Expect(other.pair.treatment != result.pair.treatment, "different seed, same output");
  return c.Result(fmt::format("rate {:.4f} over {} words; seeded replay byte-exact", rate,
                              result.words));
}

std::string Bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

bool SameTree(const fs::path& a, const fs::path& b, std::string& why) {
  std::vector<fs::path> files_a, files_b;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.is_regular_file()) files_a.push_back(fs::relative(e.path(), a));
  }
  for (const auto& e : fs::recursive_directory_iterator(b)) {
    if (e.is_regular_file()) files_b.push_back(fs::relative(e.path(), b));
  }
  std::sort(files_a.begin(), files_a.end());
  std::sort(files_b.begin(), files_b.end());
  if (files_a != files_b) {
    why = "file lists differ";
    return false;
  }
  for (const auto& rel : files_a) {
    if (Bytes(a / rel) != Bytes(b / rel)) {
      why = rel.string() + " differs";
      return false;
    }
  }
  why = fmt::format("{} files", files_a.size());
  return true;
}

Outcome DeterminismCriterion() {
  const fs::path config = DefaultDataDir().parent_path() / "configs" / "mock_all.toml";
  const fs::path work = fs::temp_directory_path() / fmt::format("guiseprobe_acceptance_{}",
                                                                ::getpid());
  fs::remove_all(work);
  const auto start = Clock::now();
  Overrides first{work / "cold", work / "cache", std::nullopt, std::nullopt};
  const RunSummary cold = RunStudies(LoadRunConfig(config, first));
  Overrides second{work / "warm", work / "cache", std::nullopt, std::nullopt};
  const RunSummary warm = RunStudies(LoadRunConfig(config, second));
  Overrides third{work / "warm2", work / "cache", std::nullopt, std::nullopt};
  const RunSummary warm2 = RunStudies(LoadRunConfig(config, third));
  const double seconds = Seconds(start);

  Checks c;
  c.Expect(cold.ExitCode() == 0 && warm.ExitCode() == 0 && warm2.ExitCode() == 0,
           "a study failed");
  c.Expect(cold.studies.size() == KnownStudies().size(), "not every study ran");
  c.Expect(warm.cache_misses == 0 && warm2.cache_misses == 0, "warm run missed the cache");
  std::string why;
  c.Expect(SameTree(work / "warm", work / "warm2", why), "warm runs: " + why);
  std::string why_cold;
  c.Expect(SameTree(work / "cold", work / "warm", why_cold), "cold vs warm: " + why_cold);
  c.Expect(seconds < 60.0, fmt::format("{:.1f} s", seconds));
  fs::remove_all(work);
  return c.Result(fmt::format("{} studies, {}, byte-identical; {:.2f} s for three runs",
                              cold.studies.size(), why, seconds));
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"permutation_null", PermutationNullCriterion},
      {"calibration_invariance", CalibrationInvarianceCriterion},
      {"map_bruteforce", MapBruteForceCriterion},
      {"planted_bias", PlantedBiasCriterion},
      {"statistics_closed_form", StatisticsCriterion},
      {"decision_pipeline", DecisionCriterion},
      {"perplexity", PerplexityCriterion},
      {"noise_injector", NoiseCriterion},
      {"determinism", DeterminismCriterion},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome outcome;
    try {
      outcome = run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    failed += !outcome.pass;
    std::printf("%s %s: %s\n", outcome.pass ? "PASS" : "FAIL", name.c_str(),
                outcome.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
