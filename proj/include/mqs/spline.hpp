#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "core.hpp"

namespace mqs {

namespace detail {

// derivative at xe of the Lagrange interpolant through (xs[i], ys[i])
inline double lagrange_derivative(const double* xs, const double* ys, int n, double xe) {
  double d = 0.0;
  for (int j = 0; j < n; ++j) {
    double denom = 1.0, num = 0.0;
    for (int m = 0; m < n; ++m)
      if (m != j) denom *= xs[j] - xs[m];
    for (int k = 0; k < n; ++k) {
      if (k == j) continue;
      double prod = 1.0;
      for (int m = 0; m < n; ++m)
        if (m != j && m != k) prod *= xe - xs[m];
      num += prod;
    }
    d += ys[j] * num / denom;
  }
  return d;
}

}  // namespace detail

// Monotone piecewise-cubic Hermite interpolant of nondecreasing data.
// Knot slopes come from local cubic fits (third-order accurate) and are then
// limited to the Fritsch-Carlson monotonicity region, so the interpolant is
// nondecreasing whenever the data is. Outside the knot range the interpolant
// continues linearly with the boundary slope.
class MonotoneCubic {
 public:
  MonotoneCubic() = default;

  static MonotoneCubic fit(const std::vector<double>& x, const std::vector<double>& y) {
    const int n = static_cast<int>(x.size());
    if (n < 2 || y.size() != x.size())
      throw InvalidParams("spline fit needs at least two samples of matching size");
    for (int i = 0; i + 1 < n; ++i) {
      if (!(x[i + 1] > x[i]))
        throw InvalidParams("spline abscissae must be strictly increasing");
      if (y[i + 1] < y[i])
        throw MonotonicityViolation("spline data decreases on interval " + std::to_string(i));
    }

    MonotoneCubic s;
    s.x_ = x;
    s.y_ = y;
    s.m_.resize(n);
    const int win = std::min(n, 4);  // local fit window
    for (int i = 0; i < n; ++i) {
      const int w = std::clamp(i - 1, 0, n - win);
      s.m_[i] = detail::lagrange_derivative(&x[w], &y[w], win, x[i]);
    }

    // Fritsch-Carlson limiting: clamp negative slopes, flatten across flat
    // intervals, and scale (alpha, beta) back to the circle of radius 3
    for (int i = 0; i + 1 < n; ++i) {
      const double h = x[i + 1] - x[i];
      const double delta = (y[i + 1] - y[i]) / h;
      if (delta == 0.0) {
        s.m_[i] = 0.0;
        s.m_[i + 1] = 0.0;
        continue;
      }
      s.m_[i] = std::max(s.m_[i], 0.0);
      s.m_[i + 1] = std::max(s.m_[i + 1], 0.0);
      const double a = s.m_[i] / delta, b = s.m_[i + 1] / delta;
      const double r2 = a * a + b * b;
      if (r2 > 9.0) {
        const double t = 3.0 / std::sqrt(r2);
        s.m_[i] = t * a * delta;
        s.m_[i + 1] = t * b * delta;
      }
    }

    s.cum_.assign(n, 0.0);
    for (int i = 0; i + 1 < n; ++i) {
      const double h = x[i + 1] - x[i];
      s.cum_[i + 1] =
          s.cum_[i] + h * (0.5 * (y[i] + y[i + 1]) + h * (s.m_[i] - s.m_[i + 1]) / 12.0);
    }
    return s;
  }

  int num_knots() const { return static_cast<int>(x_.size()); }
  double knot(int i) const { return x_[i]; }
  double knot_value(int i) const { return y_[i]; }
  double knot_slope(int i) const { return m_[i]; }
  double x_min() const { return x_.front(); }
  double x_max() const { return x_.back(); }

  double value(double x) const {
    if (x <= x_.front()) return y_.front() + m_.front() * (x - x_.front());
    if (x >= x_.back()) return y_.back() + m_.back() * (x - x_.back());
    const auto [i, t, h] = locate(x);
    const double t2 = t * t, t3 = t2 * t;
    return y_[i] * (2 * t3 - 3 * t2 + 1) + h * m_[i] * (t3 - 2 * t2 + t) +
           y_[i + 1] * (-2 * t3 + 3 * t2) + h * m_[i + 1] * (t3 - t2);
  }

  double derivative(double x) const {
    if (x <= x_.front()) return m_.front();
    if (x >= x_.back()) return m_.back();
    const auto [i, t, h] = locate(x);
    const double t2 = t * t;
    return (y_[i] * (6 * t2 - 6 * t) + h * m_[i] * (3 * t2 - 4 * t + 1) +
            y_[i + 1] * (-6 * t2 + 6 * t) + h * m_[i + 1] * (3 * t2 - 2 * t)) /
           h;
  }

  double second_derivative(double x) const {
    if (x < x_.front() || x > x_.back()) return 0.0;
    const auto [i, t, h] = locate(x);
    return (y_[i] * (12 * t - 6) + h * m_[i] * (6 * t - 4) + y_[i + 1] * (-12 * t + 6) +
            h * m_[i + 1] * (6 * t - 2)) /
           (h * h);
  }

  // integral of the interpolant from the first knot to x
  double integral(double x) const {
    if (x <= x_.front()) {
      const double d = x - x_.front();
      return y_.front() * d + 0.5 * m_.front() * d * d;
    }
    if (x >= x_.back()) {
      const double d = x - x_.back();
      return cum_.back() + y_.back() * d + 0.5 * m_.back() * d * d;
    }
    const auto [i, t, h] = locate(x);
    const double t2 = t * t, t3 = t2 * t, t4 = t3 * t;
    const double part = y_[i] * (0.5 * t4 - t3 + t) + h * m_[i] * (0.25 * t4 - 2.0 * t3 / 3.0 + 0.5 * t2) +
                        y_[i + 1] * (-0.5 * t4 + t3) + h * m_[i + 1] * (0.25 * t4 - t3 / 3.0);
    return cum_[i] + h * part;
  }

 private:
  std::vector<double> x_, y_, m_, cum_;

  struct Loc {
    int i;
    double t, h;
  };
  Loc locate(double x) const {
    const int i = static_cast<int>(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin()) - 1;
    const int j = std::clamp(i, 0, num_knots() - 2);
    const double h = x_[j + 1] - x_[j];
    return {j, (x - x_[j]) / h, h};
  }
};

}  // namespace mqs
