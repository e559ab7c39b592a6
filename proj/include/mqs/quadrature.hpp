#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "core.hpp"

namespace mqs {

// Quadrature on the reference triangle with vertices (0,0), (1,0), (0,1).
// Points are stored in barycentric coordinates (l1,l2,l3); the weights are
// positive and sum to one, so that
//   int_T f dx  =  |T| * sum_i w_i f(p_i)
// holds exactly for polynomials up to `degree`. All tabulated rules are
// symmetric (invariant under vertex permutations) and have interior points.
struct QuadRule {
  int degree = 0;
  std::vector<std::array<double, 3>> points;  // barycentric
  std::vector<double> weights;                // sum to one

  int size() const { return static_cast<int>(weights.size()); }
  // reference coordinates of point i: x = l2, y = l3
  Vec2 point_xy(int i) const { return Vec2(points[i][1], points[i][2]); }
};

// Gauss-Legendre rule on [0,1]; weights sum to one, exact through `degree`.
struct EdgeRule {
  int degree = 0;
  std::vector<double> points;
  std::vector<double> weights;

  int size() const { return static_cast<int>(weights.size()); }
};

namespace detail {

inline void append_orbit3(QuadRule& r, double a, double w) {
  const double b = 1.0 - 2.0 * a;
  r.points.push_back({b, a, a});
  r.points.push_back({a, b, a});
  r.points.push_back({a, a, b});
  for (int i = 0; i < 3; ++i) r.weights.push_back(w);
}

inline void append_orbit6(QuadRule& r, double b1, double b2, double w) {
  const double b0 = 1.0 - b1 - b2;
  r.points.push_back({b0, b1, b2});
  r.points.push_back({b0, b2, b1});
  r.points.push_back({b1, b0, b2});
  r.points.push_back({b1, b2, b0});
  r.points.push_back({b2, b0, b1});
  r.points.push_back({b2, b1, b0});
  for (int i = 0; i < 6; ++i) r.weights.push_back(w);
}

// int_T x^p y^q over the reference triangle = p! q! / (p+q+2)!
inline double reference_monomial_integral(int p, int q) {
  // p!q!/(p+q+2)! = [prod_{i=1..q} i/(p+i)] / ((p+q+1)(p+q+2))
  double v = 1.0;
  for (int i = 1; i <= q; ++i) v *= static_cast<double>(i) / (p + i);
  v /= static_cast<double>(p + q + 1) * (p + q + 2);
  return v;
}

inline void validate_rule(const QuadRule& r) {
  double wsum = 0.0;
  for (int i = 0; i < r.size(); ++i) {
    if (!(r.weights[i] > 0.0))
      throw UnsupportedDegree("quadrature rule has a non-positive weight");
    for (double l : r.points[i])
      if (l < -1e-15 || l > 1.0 + 1e-15)
        throw UnsupportedDegree("quadrature point outside the reference triangle");
    wsum += r.weights[i];
  }
  if (std::abs(wsum - 1.0) > 1e-14)
    throw UnsupportedDegree("quadrature weights do not sum to one");
  for (int p = 0; p <= r.degree; ++p) {
    for (int q = 0; p + q <= r.degree; ++q) {
      double approx = 0.0;
      for (int i = 0; i < r.size(); ++i) {
        const Vec2 xy = r.point_xy(i);
        approx += r.weights[i] * std::pow(xy.x(), p) * std::pow(xy.y(), q);
      }
      approx *= 0.5;
      if (std::abs(approx - reference_monomial_integral(p, q)) > 1e-14)
        throw UnsupportedDegree("quadrature rule fails monomial validation");
    }
  }
}

inline std::vector<QuadRule> build_triangle_rules() {
  std::vector<QuadRule> rules;

  QuadRule r1;  // 1-point centroid rule
  r1.degree = 1;
  r1.points.push_back({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
  r1.weights.push_back(1.0);
  rules.push_back(r1);

  QuadRule r2;  // 3-point, degree 2
  r2.degree = 2;
  append_orbit3(r2, 1.0 / 6.0, 1.0 / 3.0);
  rules.push_back(r2);

  QuadRule r4;  // 6-point, degree 4 (also served for degree 3: the classical
  r4.degree = 4;  // 4-point degree-3 rule has a negative weight and is excluded)
  append_orbit3(r4, 0.44594849091596489, 0.22338158967801147);
  append_orbit3(r4, 0.091576213509770743, 0.10995174365532187);
  rules.push_back(r4);

  QuadRule r5;  // 7-point, degree 5 (closed form)
  r5.degree = 5;
  r5.points.push_back({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
  r5.weights.push_back(9.0 / 40.0);
  const double s15 = std::sqrt(15.0);
  append_orbit3(r5, (6.0 + s15) / 21.0, (155.0 + s15) / 1200.0);
  append_orbit3(r5, (6.0 - s15) / 21.0, (155.0 - s15) / 1200.0);
  rules.push_back(r5);

  QuadRule r6;  // 12-point, degree 6
  r6.degree = 6;
  append_orbit3(r6, 0.24928674517091042, 0.11678627572637937);
  append_orbit3(r6, 0.063089014491502228, 0.050844906370206817);
  append_orbit6(r6, 0.31035245103378441, 0.053145049844816947, 0.082851075618373575);
  rules.push_back(r6);

  for (const QuadRule& r : rules) validate_rule(r);
  return rules;
}

inline void validate_edge_rule(const EdgeRule& r) {
  for (int p = 0; p <= r.degree; ++p) {
    double approx = 0.0;
    for (int i = 0; i < r.size(); ++i) approx += r.weights[i] * std::pow(r.points[i], p);
    if (std::abs(approx - 1.0 / (p + 1)) > 1e-14)
      throw UnsupportedDegree("edge quadrature rule fails monomial validation");
  }
}

inline std::vector<EdgeRule> build_edge_rules() {
  std::vector<EdgeRule> rules(4);
  rules[0] = {1, {0.5}, {1.0}};
  const double g2 = 0.5 / std::sqrt(3.0);
  rules[1] = {3, {0.5 - g2, 0.5 + g2}, {0.5, 0.5}};
  const double g3 = 0.5 * std::sqrt(0.6);
  rules[2] = {5, {0.5 - g3, 0.5, 0.5 + g3}, {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0}};
  rules[3] = {7,
              {0.5 - 0.43056815579702629, 0.5 - 0.16999052179242813,
               0.5 + 0.16999052179242813, 0.5 + 0.43056815579702629},
              {0.17392742256872693, 0.32607257743127307, 0.32607257743127307,
               0.17392742256872693}};
  for (const EdgeRule& r : rules) validate_edge_rule(r);
  return rules;
}

}  // namespace detail

// Smallest tabulated rule exact for polynomials of total degree `degree`.
// Supported degrees: 1..6; degree 3 is served by the 6-point degree-4 rule.
inline const QuadRule& rule_for_degree(int degree) {
  static const std::vector<QuadRule> rules = detail::build_triangle_rules();
  switch (degree) {
    case 1: return rules[0];
    case 2: return rules[1];
    case 3:
    case 4: return rules[2];
    case 5: return rules[3];
    case 6: return rules[4];
    default:
      throw UnsupportedDegree("no triangle quadrature rule for degree " +
                              std::to_string(degree) + " (supported: 1..6)");
  }
}

// n-point Gauss rule on [0,1], n in 1..4 (exact through degree 2n-1).
inline const EdgeRule& edge_rule(int npoints) {
  static const std::vector<EdgeRule> rules = detail::build_edge_rules();
  if (npoints < 1 || npoints > 4)
    throw UnsupportedDegree("edge quadrature supports 1..4 points");
  return rules[npoints - 1];
}

// Integrate fn over the (non-degenerate) triangle (v0,v1,v2).
template <class F>
double integrate_on_element(F&& fn, const Vec2& v0, const Vec2& v1, const Vec2& v2,
                            const QuadRule& rule) {
  const double area2 = cross2(v1 - v0, v2 - v0);
  double sum = 0.0;
  for (int i = 0; i < rule.size(); ++i) {
    const auto& l = rule.points[i];
    const Vec2 x = l[0] * v0 + l[1] * v1 + l[2] * v2;
    sum += rule.weights[i] * fn(x);
  }
  return 0.5 * std::abs(area2) * sum;
}

}  // namespace mqs
