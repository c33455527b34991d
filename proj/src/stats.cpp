#include "supertrim/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/poisson.hpp>

#include "supertrim/error.hpp"

namespace supertrim {

namespace {

TestResult make_result(std::string name, double statistic, double p, double level) {
  p = std::clamp(std::isfinite(p) ? p : 0.0, 0.0, 1.0);
  return {std::move(name), statistic, p, level, p >= level};
}

struct ChiSquare {
  double statistic = 0.0;
  int df = 0;
};

// Pearson statistic of observed against expected cells, merging adjacent cells
// left to right until each merged expected count is >= 5 (the remainder is
// folded into the last merged cell).
ChiSquare merged_goodness_of_fit(const std::vector<double>& observed, const std::vector<double>& expected) {
  std::vector<double> o, e;
  double acc_o = 0.0, acc_e = 0.0;
  for (std::size_t k = 0; k < observed.size(); ++k) {
    acc_o += observed[k];
    acc_e += expected[k];
    if (acc_e >= 5.0) {
      o.push_back(acc_o);
      e.push_back(acc_e);
      acc_o = acc_e = 0.0;
    }
  }
  if (acc_e > 0.0 || acc_o > 0.0) {
    if (e.empty()) {
      o.push_back(acc_o);
      e.push_back(acc_e);
    } else {
      o.back() += acc_o;
      e.back() += acc_e;
    }
  }
  ChiSquare r;
  if (e.size() < 2) return r;
  for (std::size_t k = 0; k < e.size(); ++k) r.statistic += (o[k] - e[k]) * (o[k] - e[k]) / e[k];
  r.df = static_cast<int>(e.size()) - 1;
  return r;
}

}  // namespace

Estimate estimate_mean(std::span<const double> samples) {
  if (samples.empty()) throw DomainError("estimate of an empty sample");
  const auto n = samples.size();
  double mean = 0.0;
  for (double x : samples) mean += x;
  mean /= double(n);
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  const double se = n > 1 ? std::sqrt(ss / double(n - 1) / double(n)) : 0.0;
  return {mean, se, n};
}

Estimate laplace_estimate(const std::vector<Measure>& samples, const Field& f) {
  std::vector<double> v;
  v.reserve(samples.size());
  for (const auto& x : samples) v.push_back(std::exp(-x.integrate(f)));
  return estimate_mean(v);
}

Estimate generating_estimate(const std::vector<PointMeasure>& samples, const Field& f) {
  if (!f.within(0.0, 1.0)) throw DomainError("generating_estimate requires f in [0, 1]");
  std::vector<double> v;
  v.reserve(samples.size());
  for (const auto& nu : samples) {
    require_same_size(f.size(), nu.num_states(), "generating_estimate");
    const auto counts = nu.counts();
    double prod = 1.0;
    for (std::size_t x = 0; x < counts.size(); ++x) {
      if (counts[x] > 0) prod *= std::pow(1.0 - f[x], double(counts[x]));
    }
    v.push_back(prod);
  }
  return estimate_mean(v);
}

Estimate covariance_estimate(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("covariance_estimate: samples of different length");
  if (x.size() < 2) throw DomainError("covariance_estimate needs at least two pairs");
  const auto n = x.size();
  const double mx = estimate_mean(x).mean;
  const double my = estimate_mean(y).mean;
  std::vector<double> products(n);
  for (std::size_t i = 0; i < n; ++i) products[i] = (x[i] - mx) * (y[i] - my);
  const auto p = estimate_mean(products);
  // Unbiased covariance; the SE of the product mean is the leading delta-method term.
  return {p.mean * double(n) / double(n - 1), p.se, n};
}

double chi_square_sf(double statistic, double df) {
  if (df <= 0.0) return 1.0;
  if (statistic <= 0.0) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(df), statistic));
}

double normal_two_sided_p(double z) {
  if (!std::isfinite(z)) return 0.0;
  return 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal_distribution<double>(), std::abs(z)));
}

TestResult z_test(const std::string& name, const Estimate& estimate, double reference, double level) {
  const double d = estimate.mean - reference;
  double z;
  if (estimate.se > 0.0) {
    z = d / estimate.se;
  } else {
    z = d == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), d);
  }
  return make_result(name, z, normal_two_sided_p(z), level);
}

TestResult band_check(const std::string& name, const Estimate& estimate, double reference, double k) {
  const double d = std::abs(estimate.mean - reference);
  const double z = estimate.se > 0.0 ? d / estimate.se : (d == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
  TestResult r{name, z, normal_two_sided_p(z), normal_two_sided_p(k), z <= k};
  return r;
}

TestResult poisson_gof(std::span<const std::int64_t> counts, double mean, double level) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) throw DomainError("poisson_gof: mean must be finite and >= 0");
  if (counts.empty()) throw DomainError("poisson_gof: empty sample");
  const auto n = counts.size();
  if (mean == 0.0) {
    const bool all_zero = std::all_of(counts.begin(), counts.end(), [](std::int64_t c) { return c == 0; });
    return make_result("poisson_gof", all_zero ? 0.0 : std::numeric_limits<double>::infinity(), all_zero ? 1.0 : 0.0,
                       level);
  }

  std::vector<double> as_double(counts.begin(), counts.end());
  const auto est = estimate_mean(as_double);
  double ss = 0.0;
  for (double c : as_double) ss += (c - est.mean) * (c - est.mean);
  const double variance = n > 1 ? ss / double(n - 1) : 0.0;
  const double z = (variance - mean) / std::sqrt((mean + 2.0 * mean * mean) / double(n));
  const double p_dispersion = normal_two_sided_p(z);

  std::int64_t top = 0;
  for (auto c : counts) {
    if (c < 0) throw DomainError("poisson_gof: negative count");
    top = std::max(top, c);
  }
  const boost::math::poisson_distribution<double> law(mean);
  const auto upper = static_cast<std::size_t>(
      std::max<double>(double(top), boost::math::quantile(boost::math::complement(law, 1e-12))));
  std::vector<double> observed(upper + 2, 0.0), expected(upper + 2, 0.0);
  for (auto c : counts) observed[static_cast<std::size_t>(c)] += 1.0;
  double cumulative = 0.0;
  for (std::size_t k = 0; k <= upper; ++k) {
    expected[k] = double(n) * boost::math::pdf(law, double(k));
    cumulative += expected[k];
  }
  expected[upper + 1] = std::max(0.0, double(n) - cumulative);
  const auto chi = merged_goodness_of_fit(observed, expected);
  const double p_bins = chi_square_sf(chi.statistic, chi.df);

  const double p = std::min(1.0, 2.0 * std::min(p_dispersion, p_bins));
  return make_result("poisson_gof", std::max(std::abs(z), chi.statistic), p, level);
}

TestResult two_sample_histogram(const std::string& name, std::span<const std::int64_t> a,
                                std::span<const std::int64_t> b, double level) {
  if (a.empty() || b.empty()) throw DomainError("two_sample_histogram: both samples must be nonempty");
  std::int64_t top = 0;
  for (auto c : a) top = std::max(top, c);
  for (auto c : b) top = std::max(top, c);
  for (auto c : a) {
    if (c < 0) throw DomainError("two_sample_histogram: negative value");
  }
  for (auto c : b) {
    if (c < 0) throw DomainError("two_sample_histogram: negative value");
  }
  const auto bins = static_cast<std::size_t>(top) + 1;
  std::vector<double> ha(bins, 0.0), hb(bins, 0.0);
  for (auto c : a) ha[static_cast<std::size_t>(c)] += 1.0;
  for (auto c : b) hb[static_cast<std::size_t>(c)] += 1.0;

  const double na = double(a.size()), nb = double(b.size()), total = na + nb;
  // Merge adjacent bins until both expected cells are >= 5.
  std::vector<double> ma, mb;
  double acc_a = 0.0, acc_b = 0.0;
  for (std::size_t k = 0; k < bins; ++k) {
    acc_a += ha[k];
    acc_b += hb[k];
    const double pooled = acc_a + acc_b;
    if (pooled * na / total >= 5.0 && pooled * nb / total >= 5.0) {
      ma.push_back(acc_a);
      mb.push_back(acc_b);
      acc_a = acc_b = 0.0;
    }
  }
  if (acc_a + acc_b > 0.0) {
    if (ma.empty()) {
      ma.push_back(acc_a);
      mb.push_back(acc_b);
    } else {
      ma.back() += acc_a;
      mb.back() += acc_b;
    }
  }
  if (ma.size() < 2) return make_result(name, 0.0, 1.0, level);
  double stat = 0.0;
  for (std::size_t k = 0; k < ma.size(); ++k) {
    const double pooled = ma[k] + mb[k];
    const double ea = pooled * na / total, eb = pooled * nb / total;
    stat += (ma[k] - ea) * (ma[k] - ea) / ea + (mb[k] - eb) * (mb[k] - eb) / eb;
  }
  return make_result(name, stat, chi_square_sf(stat, double(ma.size() - 1)), level);
}

TestResult two_sample_counts(const std::vector<PointMeasure>& a, const std::vector<PointMeasure>& b, double level) {
  if (a.empty() || b.empty()) throw DomainError("two_sample_counts: both samples must be nonempty");
  const auto n_states = a.front().num_states();
  std::vector<std::vector<std::int64_t>> ca(n_states), cb(n_states);
  bool any = false;
  auto collect = [&](const std::vector<PointMeasure>& sample, std::vector<std::vector<std::int64_t>>& out) {
    for (const auto& nu : sample) {
      if (nu.num_states() != n_states) throw DomainError("two_sample_counts: state spaces differ");
      const auto c = nu.counts();
      for (std::size_t x = 0; x < n_states; ++x) {
        out[x].push_back(c[x]);
        any = any || c[x] > 0;
      }
    }
  };
  collect(a, ca);
  collect(b, cb);
  if (!any) throw DomainError("two_sample_counts: all samples are empty");
  std::vector<TestResult> parts;
  for (std::size_t x = 0; x < n_states; ++x) {
    parts.push_back(two_sample_histogram("state " + std::to_string(x), ca[x], cb[x], level));
  }
  return bonferroni("two_sample_counts", parts, level);
}

TestResult two_proportion_test(const std::string& name, std::size_t hits_a, std::size_t n_a, std::size_t hits_b,
                               std::size_t n_b, double level) {
  if (n_a == 0 || n_b == 0) throw DomainError("two_proportion_test: empty sample");
  const double pa = double(hits_a) / double(n_a), pb = double(hits_b) / double(n_b);
  const double pooled = double(hits_a + hits_b) / double(n_a + n_b);
  const double var = pooled * (1.0 - pooled) * (1.0 / double(n_a) + 1.0 / double(n_b));
  if (var <= 0.0) return make_result(name, 0.0, 1.0, level);  // both samples constant and equal
  const double z = (pa - pb) / std::sqrt(var);
  return make_result(name, z, normal_two_sided_p(z), level);
}

TestResult independence_test(const std::string& name, std::span<const double> x, std::span<const double> y,
                             double level) {
  if (x.size() != y.size() || x.size() < 3) throw DomainError("independence_test needs >= 3 pairs of equal length");
  const auto n = x.size();
  const double mx = estimate_mean(x).mean, my = estimate_mean(y).mean;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return make_result(name, 0.0, 1.0, level);  // a constant is independent of anything
  const double r = sxy / std::sqrt(sxx * syy);
  const double z = r * std::sqrt(double(n));
  return make_result(name, z, normal_two_sided_p(z), level);
}

TestResult bonferroni(const std::string& name, const std::vector<TestResult>& parts, double level) {
  if (parts.empty()) return make_result(name, 0.0, 1.0, level);
  double min_p = 1.0, worst_stat = 0.0;
  for (const auto& p : parts) {
    if (p.p_value < min_p) {
      min_p = p.p_value;
      worst_stat = p.statistic;
    }
  }
  return make_result(name, worst_stat, std::min(1.0, double(parts.size()) * min_p), level);
}

}  // namespace supertrim
