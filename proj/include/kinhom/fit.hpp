#pragma once

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "kinhom/errors.hpp"

namespace kinhom {

struct SlopeFit {
  double slope = 0;
  double intercept = 0;
  double ci_low = 0;   // 95% interval on the slope
  double ci_high = 0;
  int points = 0;
};

/// Least-squares fit of log(y) = slope * log(x) + intercept.
inline SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error("fit_loglog: size mismatch");
  std::vector<double> lx, ly;
  for (size_t i = 0; i < x.size(); ++i)
    if (x[i] > 0 && y[i] > 0) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  const int n = static_cast<int>(lx.size());
  SlopeFit f;
  f.points = n;
  if (n < 2) {
    f.slope = f.ci_low = f.ci_high = std::numeric_limits<double>::quiet_NaN();
    return f;
  }
  double mx = 0, my = 0;
  for (int i = 0; i < n; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (n > 2) {
    double sse = 0;
    for (int i = 0; i < n; ++i) {
      const double r = ly[i] - (f.intercept + f.slope * lx[i]);
      sse += r * r;
    }
    const double se = std::sqrt(sse / (n - 2) / sxx);
    boost::math::students_t dist(n - 2);
    const double t = boost::math::quantile(boost::math::complement(dist, 0.025));
    f.ci_low = f.slope - t * se;
    f.ci_high = f.slope + t * se;
  } else {
    f.ci_low = f.ci_high = f.slope;
  }
  return f;
}

/// A claimed order p is met when the fitted slope reaches p - margin.
inline bool order_met(const SlopeFit& f, double p, double margin = 0.3) { return f.slope >= p - margin; }

}  // namespace kinhom
