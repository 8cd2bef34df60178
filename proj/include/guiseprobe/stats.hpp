#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace guiseprobe {

struct Ranking;
struct HumanTopList;

namespace stats {

// ---- Distribution functions -------------------------------------------

// Regularized incomplete beta I_x(a, b).
double IncompleteBeta(double a, double b, double x);
// Regularized upper incomplete gamma Q(a, x).
double IncompleteGammaQ(double a, double x);

double StudentTCdf(double t, double df);
double ChiSquareSurvival(double x, double df);
double FSurvival(double f, double df1, double df2);

// ---- Tests --------------------------------------------------------------

// Direction of the alternative hypothesis. kGreater/kLess are one-sided.
enum class Tail { kTwoSided, kGreater, kLess };

std::string_view TailName(Tail tail);

struct TestResult {
  double statistic = 0.0;
  double df = 0.0;
  std::optional<double> df2;
  double p_value = 1.0;
  Tail tail = Tail::kTwoSided;
  std::optional<double> corrected_p;
  // Set when the statistic is infinite because of zero variance.
  bool boundary = false;
};

double Mean(std::span<const double> values);
// Sample standard deviation (n - 1 denominator).
double StdDev(std::span<const double> values);

TestResult OneSampleTTest(std::span<const double> data, double mu0, Tail tail);
// Student's t with pooled variance, df = n1 + n2 - 2.
TestResult TwoSampleTTest(std::span<const double> first,
                          std::span<const double> second, Tail tail);

// Pearson chi-square on {{a, b}, {c, d}}, no continuity correction.
TestResult ChiSquare2x2(double a, double b, double c, double d,
                        bool yates = false);

// Holm step-down adjusted p-values, in input order.
std::vector<double> HolmBonferroni(std::span<const double> p_values);

// Correlation coefficient in `statistic`, two-sided p from the t transform.
TestResult Pearson(std::span<const double> x, std::span<const double> y);
TestResult Spearman(std::span<const double> x, std::span<const double> y);
// Average ranks (1-based) with ties sharing the mean rank.
std::vector<double> FractionalRanks(std::span<const double> values);

struct OlsResult {
  double beta = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double f = 0.0;  // +infinity for a perfect fit
  double p_value = 1.0;
  int df1 = 1;
  int df2 = 0;
};

// Least squares y = intercept + beta * x.
OlsResult OlsSimple(std::span<const double> x, std::span<const double> y);

// ---- Ranking agreement --------------------------------------------------

// Mean over relevant items of precision at the item's rank.
double AveragePrecision(std::span<const std::string> relevant,
                        const Ranking& ranking);
// Mean of AP over the prefixes top1..top5 of the human list.
double MeanAveragePrecision(const HumanTopList& human, const Ranking& ranking);
// Same quantity from the 1-based ranks of the human items, in human order.
double MeanAveragePrecisionFromRanks(std::span<const std::size_t> ranks);

struct NullDistribution {
  std::vector<double> samples;
  double mean = 0.0;
  double sd = 0.0;
  std::uint64_t seed = 0;
};

// mAP of `n_perm` uniformly random orderings of a universe of
// `universe_size` tokens against the human items at `human_indices` (human
// order). Permutation i draws from its own substream, so the result does not
// depend on the thread count. parallelism <= 0 uses the OpenMP default.
NullDistribution PermutationNull(std::size_t universe_size,
                                 std::span<const std::size_t> human_indices,
                                 std::size_t n_perm, std::uint64_t seed,
                                 int parallelism = 0);
// Universe = `universe` tokens, human items looked up by name.
NullDistribution PermutationNull(std::span<const std::string> universe,
                                 const HumanTopList& human, std::size_t n_perm,
                                 std::uint64_t seed, int parallelism = 0);

}  // namespace stats
}  // namespace guiseprobe
