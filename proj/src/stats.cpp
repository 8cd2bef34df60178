#include "guiseprobe/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "guiseprobe/corpus.hpp"
#include "guiseprobe/error.hpp"
#include "guiseprobe/kernels.hpp"
#include "guiseprobe/ranking.hpp"

namespace guiseprobe::stats {
namespace {

constexpr double kEps = 1e-16;
constexpr double kTiny = 1e-300;
constexpr int kMaxIterations = 100000;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Continued fraction for the incomplete beta (modified Lentz).
double BetaContinuedFraction(double a, double b, double x) {
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEps) return h;
  }
  throw Error("incomplete beta continued fraction did not converge");
}

double GammaSeries(double a, double x) {
  double sum = 1.0 / a;
  double term = sum;
  double ap = a;
  for (int n = 0; n < kMaxIterations; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * kEps) {
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
  }
  throw Error("incomplete gamma series did not converge");
}

double GammaContinuedFraction(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxIterations; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEps) {
      return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
    }
  }
  throw Error("incomplete gamma continued fraction did not converge");
}

// P(T > t) for Student's t.
double StudentTSurvival(double t, double df) {
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const double x = df / (df + t * t);
  const double tail = 0.5 * IncompleteBeta(0.5 * df, 0.5, x);
  return t >= 0 ? tail : 1.0 - tail;
}

double TailProbability(double t, double df, Tail tail) {
  switch (tail) {
    case Tail::kGreater: return StudentTSurvival(t, df);
    case Tail::kLess: return StudentTSurvival(-t, df);
    case Tail::kTwoSided: {
      if (std::isinf(t)) return 0.0;
      return std::min(1.0, IncompleteBeta(0.5 * df, 0.5, df / (df + t * t)));
    }
  }
  return 1.0;
}

TestResult TFromMoments(double difference, double standard_error, double df,
                        Tail tail) {
  TestResult result;
  result.df = df;
  result.tail = tail;
  if (standard_error == 0.0) {
    if (difference == 0.0) {
      result.statistic = 0.0;
      result.p_value = tail == Tail::kTwoSided ? 1.0 : 0.5;
      return result;
    }
    result.boundary = true;
    result.statistic = difference > 0 ? kInf : -kInf;
  } else {
    result.statistic = difference / standard_error;
  }
  result.p_value = TailProbability(result.statistic, df, tail);
  return result;
}

double SumSquaredDeviations(std::span<const double> values, double mean) {
  double sum = 0.0;
  for (double v : values) sum += (v - mean) * (v - mean);
  return sum;
}

}  // namespace

double IncompleteBeta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw PreconditionError("beta parameters must be > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * BetaContinuedFraction(a, b, x) / a;
  }
  return 1.0 - front * BetaContinuedFraction(b, a, 1.0 - x) / b;
}

double IncompleteGammaQ(double a, double x) {
  if (!(a > 0.0)) throw PreconditionError("gamma parameter must be > 0");
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - GammaSeries(a, x);
  return GammaContinuedFraction(a, x);
}

double StudentTCdf(double t, double df) { return 1.0 - StudentTSurvival(t, df); }

double ChiSquareSurvival(double x, double df) {
  return IncompleteGammaQ(0.5 * df, 0.5 * x);
}

double FSurvival(double f, double df1, double df2) {
  if (f <= 0.0) return 1.0;
  if (std::isinf(f)) return 0.0;
  return IncompleteBeta(0.5 * df2, 0.5 * df1, df2 / (df2 + df1 * f));
}

std::string_view TailName(Tail tail) {
  switch (tail) {
    case Tail::kTwoSided: return "two_sided";
    case Tail::kGreater: return "greater";
    case Tail::kLess: return "less";
  }
  return "unknown";
}

double Mean(std::span<const double> values) {
  if (values.empty()) throw PreconditionError("mean of an empty sample");
  return std::accumulate(values.begin(), values.end(), 0.0) /
         static_cast<double>(values.size());
}

double StdDev(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  return std::sqrt(SumSquaredDeviations(values, Mean(values)) /
                   static_cast<double>(values.size() - 1));
}

TestResult OneSampleTTest(std::span<const double> data, double mu0, Tail tail) {
  if (data.size() < 2) throw PreconditionError("one-sample t-test needs n >= 2");
  const double n = static_cast<double>(data.size());
  const double mean = Mean(data);
  const double sd = StdDev(data);
  return TFromMoments(mean - mu0, sd / std::sqrt(n), n - 1.0, tail);
}

TestResult TwoSampleTTest(std::span<const double> first,
                          std::span<const double> second, Tail tail) {
  if (first.size() < 2 || second.size() < 2) {
    throw PreconditionError("two-sample t-test needs n1, n2 >= 2");
  }
  const double n1 = static_cast<double>(first.size());
  const double n2 = static_cast<double>(second.size());
  const double m1 = Mean(first);
  const double m2 = Mean(second);
  const double df = n1 + n2 - 2.0;
  const double pooled =
      (SumSquaredDeviations(first, m1) + SumSquaredDeviations(second, m2)) / df;
  return TFromMoments(m1 - m2, std::sqrt(pooled * (1.0 / n1 + 1.0 / n2)), df, tail);
}

TestResult ChiSquare2x2(double a, double b, double c, double d, bool yates) {
  for (double cell : {a, b, c, d}) {
    if (!(cell >= 0.0)) throw PreconditionError("contingency counts must be >= 0");
  }
  const double r1 = a + b;
  const double r2 = c + d;
  const double c1 = a + c;
  const double c2 = b + d;
  if (r1 <= 0 || r2 <= 0 || c1 <= 0 || c2 <= 0) {
    throw PreconditionError("chi-square undefined: a table marginal is zero");
  }
  const double n = r1 + r2;
  double diff = std::fabs(a * d - b * c);
  if (yates) diff = std::max(0.0, diff - 0.5 * n);
  TestResult result;
  result.statistic = n * diff * diff / (r1 * r2 * c1 * c2);
  result.df = 1.0;
  result.tail = Tail::kGreater;
  result.p_value = ChiSquareSurvival(result.statistic, 1.0);
  return result;
}

std::vector<double> HolmBonferroni(std::span<const double> p_values) {
  const std::size_t m = p_values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return p_values[x] < p_values[y];
  });
  std::vector<double> adjusted(m);
  double running = 0.0;
  for (std::size_t rank = 0; rank < m; ++rank) {
    const double p = p_values[order[rank]];
    if (!(p >= 0.0 && p <= 1.0)) throw PreconditionError("p-value outside [0, 1]");
    running = std::max(running, std::min(1.0, static_cast<double>(m - rank) * p));
    adjusted[order[rank]] = running;
  }
  return adjusted;
}

TestResult Pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 3) {
    throw PreconditionError("correlation needs equal lengths >= 3");
  }
  const double mx = Mean(x);
  const double my = Mean(y);
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sxy += (x[i] - mx) * (y[i] - my);
  const double sxx = SumSquaredDeviations(x, mx);
  const double syy = SumSquaredDeviations(y, my);
  if (sxx == 0.0 || syy == 0.0) {
    throw PreconditionError("correlation undefined for a constant input");
  }
  TestResult result;
  result.statistic = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  result.df = static_cast<double>(x.size()) - 2.0;
  result.tail = Tail::kTwoSided;
  const double r = result.statistic;
  if (std::fabs(r) == 1.0) {
    result.p_value = 0.0;
  } else {
    const double t = r * std::sqrt(result.df / (1.0 - r * r));
    result.p_value = TailProbability(t, result.df, Tail::kTwoSided);
  }
  return result;
}

std::vector<double> FractionalRanks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double average = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = average;
    i = j + 1;
  }
  return ranks;
}

TestResult Spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 3) {
    throw PreconditionError("correlation needs equal lengths >= 3");
  }
  const auto rx = FractionalRanks(x);
  const auto ry = FractionalRanks(y);
  return Pearson(rx, ry);
}

OlsResult OlsSimple(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 3) {
    throw PreconditionError("regression needs equal lengths >= 3");
  }
  const double mx = Mean(x);
  const double my = Mean(y);
  const double sxx = SumSquaredDeviations(x, mx);
  if (sxx == 0.0) throw PreconditionError("regression undefined for constant x");
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sxy += (x[i] - mx) * (y[i] - my);
  const double syy = SumSquaredDeviations(y, my);

  OlsResult result;
  result.beta = sxy / sxx;
  result.intercept = my - result.beta * mx;
  result.df2 = static_cast<int>(x.size()) - 2;
  result.r_squared = syy == 0.0 ? 0.0 : std::min(1.0, sxy * sxy / (sxx * syy));
  if (result.r_squared >= 1.0) {
    result.f = kInf;
    result.p_value = 0.0;
  } else {
    result.f = result.df2 * result.r_squared / (1.0 - result.r_squared);
    result.p_value = FSurvival(result.f, 1.0, result.df2);
  }
  return result;
}

double AveragePrecision(std::span<const std::string> relevant,
                        const Ranking& ranking) {
  if (relevant.empty()) throw PreconditionError("average precision needs relevant items");
  std::vector<std::size_t> ranks;
  for (const auto& token : relevant) {
    const auto rank = ranking.RankOf(token);
    if (!rank) {
      throw PreconditionError("relevant item '" + token + "' is not in the ranking");
    }
    ranks.push_back(*rank);
  }
  std::sort(ranks.begin(), ranks.end());
  double sum = 0.0;
  for (std::size_t j = 0; j < ranks.size(); ++j) {
    sum += static_cast<double>(j + 1) / static_cast<double>(ranks[j]);
  }
  return sum / static_cast<double>(ranks.size());
}

double MeanAveragePrecisionFromRanks(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw PreconditionError("mAP needs at least one human item");
  double total = 0.0;
  std::vector<std::size_t> prefix;
  prefix.reserve(ranks.size());
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    prefix.insert(std::upper_bound(prefix.begin(), prefix.end(), ranks[i]), ranks[i]);
    double sum = 0.0;
    for (std::size_t j = 0; j < prefix.size(); ++j) {
      sum += static_cast<double>(j + 1) / static_cast<double>(prefix[j]);
    }
    total += sum / static_cast<double>(prefix.size());
  }
  return total / static_cast<double>(ranks.size());
}

double MeanAveragePrecision(const HumanTopList& human, const Ranking& ranking) {
  std::vector<std::size_t> ranks;
  for (const auto& token : human.top5) {
    const auto rank = ranking.RankOf(token);
    if (!rank) {
      throw PreconditionError("human item '" + token + "' is not in the ranking");
    }
    ranks.push_back(*rank);
  }
  return MeanAveragePrecisionFromRanks(ranks);
}

NullDistribution PermutationNull(std::size_t universe_size,
                                 std::span<const std::size_t> human_indices,
                                 std::size_t n_perm, std::uint64_t seed,
                                 int parallelism) {
  if (n_perm < 1) throw PreconditionError("permutation count must be >= 1");
  if (human_indices.empty() || universe_size < human_indices.size()) {
    throw PreconditionError("universe smaller than the human list");
  }
  for (std::size_t h : human_indices) {
    if (h >= universe_size) throw PreconditionError("human index outside universe");
  }
  NullDistribution null;
  null.seed = seed;
  null.samples = kernels::PermutationMapSamples(universe_size, human_indices, n_perm,
                                                seed, parallelism);
  null.mean = Mean(null.samples);
  null.sd = StdDev(null.samples);
  return null;
}

NullDistribution PermutationNull(std::span<const std::string> universe,
                                 const HumanTopList& human, std::size_t n_perm,
                                 std::uint64_t seed, int parallelism) {
  std::vector<std::size_t> indices;
  for (const auto& token : human.top5) {
    const auto it = std::find(universe.begin(), universe.end(), token);
    if (it == universe.end()) {
      throw PreconditionError("human item '" + token + "' is not in the universe");
    }
    indices.push_back(static_cast<std::size_t>(it - universe.begin()));
  }
  return PermutationNull(universe.size(), indices, n_perm, seed, parallelism);
}

}  // namespace guiseprobe::stats
