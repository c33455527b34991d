#include "supertrim/ode.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "supertrim/error.hpp"

namespace supertrim::ode {

namespace {

// Dormand-Prince tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// b - b* (fifth minus fourth order weights).
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

double scaled_norm(const Eigen::VectorXd& err, const Eigen::VectorXd& y0, const Eigen::VectorXd& y1,
                   const Options& o) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double scale = o.atol + o.rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    worst = std::max(worst, std::abs(err[i]) / scale);
  }
  return worst;
}

}  // namespace

Stats integrate(const Rhs& rhs, Eigen::VectorXd& y, double t0, double t1, const Options& options,
                const Projection& project) {
  Stats stats;
  if (t1 <= t0) return stats;
  const Eigen::Index n = y.size();
  Eigen::VectorXd k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), y_new(n), err(n);

  rhs(y, k1);
  ++stats.evaluations;

  // Initial step (Hairer, Norsett & Wanner, II.4).
  double h;
  {
    double d0 = 0.0, d1 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double sc = options.atol + options.rtol * std::abs(y[i]);
      d0 = std::max(d0, std::abs(y[i]) / sc);
      d1 = std::max(d1, std::abs(k1[i]) / sc);
    }
    h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h = std::min({h, t1 - t0, options.max_step});
  }

  double t = t0;
  while (t < t1) {
    if (stats.accepted + stats.rejected >= options.max_steps) {
      std::ostringstream os;
      os << "ODE step budget (" << options.max_steps << ") exhausted at t=" << t << " of " << t1;
      throw SolverError(os.str());
    }
    const bool last = t + h >= t1;
    if (last) h = t1 - t;
    if (h <= std::abs(t) * 1e-15 || h <= 0.0) throw SolverError("ODE step size underflow");

    tmp = y + h * a21 * k1;
    rhs(tmp, k2);
    tmp = y + h * (a31 * k1 + a32 * k2);
    rhs(tmp, k3);
    tmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    rhs(tmp, k4);
    tmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    rhs(tmp, k5);
    tmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    rhs(tmp, k6);
    y_new = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    rhs(y_new, k7);
    stats.evaluations += 6;

    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const double e = scaled_norm(err, y, y_new, options);
    if (!std::isfinite(e)) {
      ++stats.rejected;
      h *= 0.1;
      continue;
    }
    if (e <= 1.0) {
      ++stats.accepted;
      t = last ? t1 : t + h;
      y = y_new;
      if (project) {
        project(y);
        rhs(y, k1);
        ++stats.evaluations;
      } else {
        k1 = k7;  // first-same-as-last
      }
      const double factor = e == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(e, -0.2), 0.2, 5.0);
      h = std::min(h * factor, options.max_step);
    } else {
      ++stats.rejected;
      h *= std::max(0.2, 0.9 * std::pow(e, -0.2));
    }
  }
  return stats;
}

}  // namespace supertrim::ode
