#pragma once

#include <span>
#include <string>

#include "jitfb/error.hpp"

namespace jitfb {

enum class StatsErrorKind { LengthMismatch, DegenerateDistribution, TooFewPoints };

class StatsError : public Error {
 public:
  StatsError(StatsErrorKind kind, const std::string& detail);
  StatsErrorKind kind() const noexcept { return kind_; }

 private:
  StatsErrorKind kind_;
};

double mean(std::span<const double> xs);

/// Population (1/n) central moment of order k.
double central_moment(std::span<const double> xs, int k);

/// Population standard deviation.
double population_stddev(std::span<const double> xs);

/// g1 = m3 / m2^(3/2). Needs at least two points and nonzero variance.
double fisher_pearson_skewness(std::span<const double> xs);

struct CorrelationResult {
  double r = 0.0;
  double p_two_sided = 1.0;
  int n = 0;
};

/// Pearson r with a two-sided p from Student t on n-2 degrees of freedom.
CorrelationResult pearson(std::span<const double> x, std::span<const double> y);

/// Regularized incomplete beta I_x(a, b), continued fraction (modified Lentz).
double regularized_incomplete_beta(double a, double b, double x);

/// P(T <= t) for Student t with df degrees of freedom.
double student_t_cdf(double t, double df);

}  // namespace jitfb
