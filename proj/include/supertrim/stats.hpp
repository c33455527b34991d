#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "supertrim/model.hpp"

namespace supertrim {

struct Estimate {
  double mean = 0.0;
  /// Standard error of the mean; 0 when n < 2.
  double se = 0.0;
  std::size_t n = 0;
};

struct TestResult {
  std::string name;
  double statistic = 0.0;
  double p_value = 1.0;
  double level = 0.01;
  bool passed = true;
};

/// Sample mean and standard error. Throws DomainError on an empty sample.
Estimate estimate_mean(std::span<const double> samples);

/// Mean of exp(-<X, f>) over measure samples.
Estimate laplace_estimate(const std::vector<Measure>& samples, const Field& f);

/// Mean of prod_atoms (1 - f(x)) = (1 - f)^X over point-measure samples.
Estimate generating_estimate(const std::vector<PointMeasure>& samples, const Field& f);

/// Sample covariance of paired data with a delta-method standard error.
Estimate covariance_estimate(std::span<const double> x, std::span<const double> y);

/// Upper tail probabilities.
double chi_square_sf(double statistic, double df);
double normal_two_sided_p(double z);

/// Two-sided z test of estimate.mean against a reference; passes iff p >= level.
TestResult z_test(const std::string& name, const Estimate& estimate, double reference, double level = 0.01);

/// |estimate - reference| <= k * se. The reported statistic is the distance in SE units.
TestResult band_check(const std::string& name, const Estimate& estimate, double reference, double k);

/// Goodness of fit of integer counts to Poisson(mean): a dispersion z test
/// (sample variance against the Poisson variance) and a binned chi-square
/// test against the Poisson pmf (bins merged to expected >= 5), combined by
/// Bonferroni. A mean of 0 passes iff every count is 0.
TestResult poisson_gof(std::span<const std::int64_t> counts, double mean, double level = 0.01);

/// Chi-square homogeneity test of two integer samples; the pooled value range
/// is binned and adjacent bins are merged until every expected cell is >= 5.
/// A single surviving bin gives statistic 0 and p-value 1.
TestResult two_sample_histogram(const std::string& name, std::span<const std::int64_t> a,
                                std::span<const std::int64_t> b, double level = 0.01);

/// Per-state count histograms of A and B compared by two_sample_histogram,
/// Bonferroni-combined across states. Throws DomainError if both samples are
/// empty or their state spaces differ.
TestResult two_sample_counts(const std::vector<PointMeasure>& a, const std::vector<PointMeasure>& b,
                             double level = 0.01);

/// Two-proportion z test of P[event] in two samples of 0/1 outcomes.
TestResult two_proportion_test(const std::string& name, std::size_t hits_a, std::size_t n_a, std::size_t hits_b,
                               std::size_t n_b, double level = 0.01);

/// Correlation z test for independence of paired samples: z = r sqrt(n).
TestResult independence_test(const std::string& name, std::span<const double> x, std::span<const double> y,
                             double level = 0.01);

/// Bonferroni combination: p = min(1, k min p_i); passes iff p >= level.
TestResult bonferroni(const std::string& name, const std::vector<TestResult>& parts, double level = 0.01);

}  // namespace supertrim
