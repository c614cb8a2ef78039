#include "jitfb/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace jitfb {

namespace {

std::string_view kind_name(StatsErrorKind kind) {
  switch (kind) {
    case StatsErrorKind::LengthMismatch: return "LengthMismatch";
    case StatsErrorKind::DegenerateDistribution: return "DegenerateDistribution";
    case StatsErrorKind::TooFewPoints: return "TooFewPoints";
  }
  return "StatsError";
}

// Continued fraction for I_x(a, b), valid when x < (a + 1) / (a + b + 2).
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
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
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

StatsError::StatsError(StatsErrorKind kind, const std::string& detail)
    : Error(std::string(kind_name(kind)) + ": " + detail), kind_(kind) {}

double mean(std::span<const double> xs) {
  if (xs.empty()) throw StatsError(StatsErrorKind::TooFewPoints, "mean of an empty sample");
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

double central_moment(std::span<const double> xs, int k) {
  const double mu = mean(xs);
  double sum = 0.0;
  for (double x : xs) sum += std::pow(x - mu, k);
  return sum / static_cast<double>(xs.size());
}

double population_stddev(std::span<const double> xs) { return std::sqrt(central_moment(xs, 2)); }

double fisher_pearson_skewness(std::span<const double> xs) {
  if (xs.size() < 2) throw StatsError(StatsErrorKind::TooFewPoints, "skewness needs at least 2 points");
  const double mu = mean(xs);
  double m2 = 0.0;
  double m3 = 0.0;
  for (double x : xs) {
    const double d = x - mu;
    m2 += d * d;
    m3 += d * d * d;
  }
  const auto n = static_cast<double>(xs.size());
  m2 /= n;
  m3 /= n;
  if (!(m2 > 0.0)) throw StatsError(StatsErrorKind::DegenerateDistribution, "zero variance");
  return m3 / std::pow(m2, 1.5);
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw Error("incomplete beta needs a, b > 0");
  if (std::isnan(x)) return x;
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw Error("t distribution needs df > 0");
  if (std::isnan(t)) return t;
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
  return t > 0 ? 1.0 - tail : tail;
}

CorrelationResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw StatsError(StatsErrorKind::LengthMismatch,
                     std::to_string(x.size()) + " vs " + std::to_string(y.size()) + " values");
  }
  if (x.size() < 3) throw StatsError(StatsErrorKind::TooFewPoints, "correlation needs at least 3 pairs");
  const double mx = mean(x);
  const double my = mean(y);
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) {
    throw StatsError(StatsErrorKind::DegenerateDistribution, "a variable has zero variance");
  }
  CorrelationResult out;
  out.n = static_cast<int>(x.size());
  out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = out.n - 2.0;
  const double one_minus = 1.0 - out.r * out.r;
  if (one_minus <= 0.0) {
    out.p_two_sided = 0.0;
  } else {
    // two-sided p = I_{df/(df+t^2)}(df/2, 1/2), and df/(df+t^2) = 1 - r^2
    out.p_two_sided = std::clamp(regularized_incomplete_beta(df / 2.0, 0.5, one_minus), 0.0, 1.0);
  }
  return out;
}

}  // namespace jitfb
