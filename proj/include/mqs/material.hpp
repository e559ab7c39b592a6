#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "core.hpp"
#include "spline.hpp"

namespace mqs {

// ---------------------------------------------------------------------------
// Constitutive laws b = g'(h). All laws are expressed through the coenergy
// density g (a function of h) and, dually, the energy density f (a function
// of b), with f' and g' inverse maps. Isotropic nonlinear laws act radially:
// g'(h) = gt'(|h|) h/|h| with gt the scalar profile.
// ---------------------------------------------------------------------------

struct LinearLaw {
  double mu = 1.0;  // b = mu h
};

struct MagnetLaw {
  double mu = 1.0;
  Vec2 m = Vec2::Zero();  // b = mu (h + m)
};

// nu(b) = k1 exp(k2 b^2) + k3, the classical Brauer reluctivity fit
struct BrauerParams {
  double k1 = 0.0, k2 = 0.0, k3 = 1.0;
};

inline double brauer_reluctivity(double b, const BrauerParams& p) {
  if (!(p.k1 >= 0.0) || !(p.k2 >= 0.0) || !(p.k3 > 0.0))
    throw InvalidParams("Brauer reluctivity requires k1 >= 0, k2 >= 0, k3 > 0");
  return p.k1 * std::exp(p.k2 * b * b) + p.k3;
}

// Fit the scalar energy-density derivative ft'(b) = nu(b) b through the given
// knots (which must start at 0, so ft'(0) = 0). Convexity of the fit is
// certified by sampling ft'' on every interval.
inline MonotoneCubic fit_energy_spline(const BrauerParams& p, const std::vector<double>& knots) {
  if (knots.empty() || knots.front() != 0.0)
    throw InvalidParams("energy spline knots must start at b = 0");
  std::vector<double> phi(knots.size());
  for (size_t i = 0; i < knots.size(); ++i) phi[i] = brauer_reluctivity(knots[i], p) * knots[i];
  MonotoneCubic s = MonotoneCubic::fit(knots, phi);
  for (int i = 0; i + 1 < s.num_knots(); ++i)
    for (int g = 0; g < 10; ++g) {
      const double x = s.knot(i) + (g + 0.5) / 10.0 * (s.knot(i + 1) - s.knot(i));
      if (!(s.derivative(x) > 0.0))
        throw MonotonicityViolation("energy spline is not strictly convex on interval " +
                                    std::to_string(i));
    }
  return s;
}

// Dual profile gt'(h) as the numerical inverse of ft'. Exact inverse pairs
// (ft'(b), b) are tabulated on the knot grid and the grid is refined until
// the roundtrip gt'(ft'(b)) = b holds to 1e-8 relative.
inline MonotoneCubic dualize(const MonotoneCubic& fprime) {
  std::vector<double> b(fprime.num_knots());
  for (int i = 0; i < fprime.num_knots(); ++i) b[i] = fprime.knot(i);

  MonotoneCubic gprime;
  double worst = 0.0;
  for (int round = 0; round < 8; ++round) {
    std::vector<double> h(b.size());
    for (size_t i = 0; i < b.size(); ++i) h[i] = fprime.value(b[i]);
    for (size_t i = 0; i + 1 < h.size(); ++i)
      if (!(h[i + 1] > h[i]))
        throw NotStrictlyIncreasing("ft' samples are not strictly increasing near b = " +
                                    std::to_string(b[i]));
    gprime = MonotoneCubic::fit(h, b);

    worst = 0.0;
    const double b0 = b.front(), b1 = b.back();
    for (int s = 1; s <= 100; ++s) {
      const double bs = b0 + s / 100.0 * (b1 - b0);
      worst = std::max(worst, std::abs(gprime.value(fprime.value(bs)) - bs) / bs);
    }
    if (worst <= 1e-8) return gprime;

    std::vector<double> refined;  // halve the b-grid and retabulate exactly
    refined.reserve(2 * b.size());
    for (size_t i = 0; i + 1 < b.size(); ++i) {
      refined.push_back(b[i]);
      refined.push_back(0.5 * (b[i] + b[i + 1]));
    }
    refined.push_back(b.back());
    b.swap(refined);
  }
  throw Error("dualize: duality roundtrip stalled at " + std::to_string(worst));
}

// Isotropic nonlinear law holding both scalar profiles. Beyond the fitted
// range both profiles continue linearly, so the law stays monotone globally.
class IsotropicSplineLaw {
 public:
  IsotropicSplineLaw(MonotoneCubic fprime, MonotoneCubic gprime)
      : fprime_(std::move(fprime)), gprime_(std::move(gprime)) {}

  static IsotropicSplineLaw from_brauer(const BrauerParams& p, const std::vector<double>& knots) {
    MonotoneCubic f = fit_energy_spline(p, knots);
    MonotoneCubic g = dualize(f);
    return IsotropicSplineLaw(std::move(f), std::move(g));
  }

  // two-column b/h curve; a missing (0,0) sample is prepended
  static IsotropicSplineLaw from_bh_table(std::vector<double> b, std::vector<double> h) {
    if (b.size() != h.size() || b.empty())
      throw InvalidParams("b/h table needs matching non-empty columns");
    if (b.front() > 0.0 && h.front() > 0.0) {
      b.insert(b.begin(), 0.0);
      h.insert(h.begin(), 0.0);
    }
    if (b.front() != 0.0 || h.front() != 0.0)
      throw InvalidParams("b/h table must start at the origin");
    for (size_t i = 0; i + 1 < h.size(); ++i)
      if (!(h[i + 1] > h[i]))
        throw NotStrictlyIncreasing("h column must be strictly increasing (row " +
                                    std::to_string(i + 1) + ")");
    MonotoneCubic f = MonotoneCubic::fit(b, h);
    MonotoneCubic g = dualize(f);
    return IsotropicSplineLaw(std::move(f), std::move(g));
  }

  const MonotoneCubic& fprime() const { return fprime_; }
  const MonotoneCubic& gprime() const { return gprime_; }
  double b_max() const { return fprime_.x_max(); }
  double h_max() const { return gprime_.x_max(); }

 private:
  MonotoneCubic fprime_, gprime_;
};

using MaterialLaw = std::variant<LinearLaw, MagnetLaw, IsotropicSplineLaw>;

namespace detail {

// Jacobian of an isotropic radial map r -> profile(r) u: on the radial
// direction it acts by profile'(r), orthogonally by profile(r)/r
inline Mat2 radial_hessian(const MonotoneCubic& profile, const Vec2& v) {
  const double r = v.norm();
  if (r < 1e-12) return profile.derivative(0.0) * Mat2::Identity();
  const Vec2 u = v / r;
  const Mat2 uu = u * u.transpose();
  return profile.derivative(r) * uu + (profile.value(r) / r) * (Mat2::Identity() - uu);
}

}  // namespace detail

inline Vec2 g_grad(const MaterialLaw& law, const Vec2& h) {
  return std::visit(
      [&](const auto& l) -> Vec2 {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, LinearLaw>) return l.mu * h;
        else if constexpr (std::is_same_v<T, MagnetLaw>) return l.mu * (h + l.m);
        else {
          const double r = h.norm();
          if (r < 1e-12) return l.gprime().derivative(0.0) * h;
          return l.gprime().value(r) / r * h;
        }
      },
      law);
}

inline Mat2 g_hess(const MaterialLaw& law, const Vec2& h) {
  return std::visit(
      [&](const auto& l) -> Mat2 {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, LinearLaw>) return l.mu * Mat2::Identity();
        else if constexpr (std::is_same_v<T, MagnetLaw>) return l.mu * Mat2::Identity();
        else return detail::radial_hessian(l.gprime(), h);
      },
      law);
}

inline Vec2 f_grad(const MaterialLaw& law, const Vec2& b) {
  return std::visit(
      [&](const auto& l) -> Vec2 {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, LinearLaw>) return b / l.mu;
        else if constexpr (std::is_same_v<T, MagnetLaw>) return Vec2(b / l.mu - l.m);
        else {
          const double r = b.norm();
          if (r < 1e-12) return l.fprime().derivative(0.0) * b;
          return l.fprime().value(r) / r * b;
        }
      },
      law);
}

inline Mat2 f_hess(const MaterialLaw& law, const Vec2& b) {
  return std::visit(
      [&](const auto& l) -> Mat2 {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, LinearLaw>) return Mat2(Mat2::Identity() / l.mu);
        else if constexpr (std::is_same_v<T, MagnetLaw>) return Mat2(Mat2::Identity() / l.mu);
        else return detail::radial_hessian(l.fprime(), b);
      },
      law);
}

// ---------------------------------------------------------------------------
// Monotonicity / Lipschitz certificate (the discrete analogue of strong
// monotonicity alpha and Lipschitz modulus C_a of g' on |h| <= h_max),
// estimated from random difference quotients.
// ---------------------------------------------------------------------------
struct Lemma1Certificate {
  double alpha = 0.0;
  double c_a = 0.0;
  double h_max = 0.0;
  int samples = 0;
};

template <class G>
Lemma1Certificate certify_lemma1_fn(G&& grad, double h_max, int n_samples = 200,
                                    unsigned seed = 0) {
  if (!(h_max > 0.0)) throw InvalidParams("certificate radius must be positive");
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto sample_disk = [&]() {
    const double r = h_max * std::sqrt(unif(rng));
    const double th = 2.0 * M_PI * unif(rng);
    return Vec2(r * std::cos(th), r * std::sin(th));
  };

  Lemma1Certificate cert;
  cert.h_max = h_max;
  cert.alpha = std::numeric_limits<double>::max();
  for (int i = 0; i < n_samples; ++i) {
    const Vec2 h1 = sample_disk(), h2 = sample_disk();
    const Vec2 d = h1 - h2;
    const double dn2 = d.squaredNorm();
    if (dn2 < 1e-24 * h_max * h_max) continue;
    const Vec2 dg = grad(h1) - grad(h2);
    cert.alpha = std::min(cert.alpha, dg.dot(d) / dn2);
    cert.c_a = std::max(cert.c_a, dg.norm() / std::sqrt(dn2));
    ++cert.samples;
  }
  if (!(cert.alpha > 0.0))
    throw MonotonicityFailure("sampled monotonicity constant is not positive (alpha = " +
                              std::to_string(cert.alpha) + ")");
  return cert;
}

inline Lemma1Certificate certify_lemma1(const MaterialLaw& law, double h_max,
                                        int n_samples = 200, unsigned seed = 0) {
  return certify_lemma1_fn([&](const Vec2& h) { return g_grad(law, h); }, h_max, n_samples,
                           seed);
}

// ---------------------------------------------------------------------------
// Region-tagged material assignment. Tag 0 is the fallback for regions
// without an explicit entry. Conductivities are nonnegative; the impressed
// current density may be a per-region constant or a global function of x.
// ---------------------------------------------------------------------------
struct MaterialMap {
  std::map<int, MaterialLaw> laws;
  std::map<int, double> sigma;
  std::map<int, double> j_region;
  std::function<double(const Vec2&)> j_fn;
  std::map<int, Lemma1Certificate> certificates;
  bool certified = false;

  const MaterialLaw& law_for(int tag) const {
    auto it = laws.find(tag);
    if (it == laws.end()) it = laws.find(0);
    if (it == laws.end())
      throw InvalidParams("no material law for region tag " + std::to_string(tag) +
                          " and no default (tag 0)");
    return it->second;
  }

  double sigma_for(int tag) const {
    auto it = sigma.find(tag);
    if (it == sigma.end()) it = sigma.find(0);
    const double s = (it == sigma.end()) ? 0.0 : it->second;
    if (s < 0.0) throw InvalidParams("conductivity must be nonnegative");
    return s;
  }

  double source(int tag, const Vec2& x) const {
    if (j_fn) return j_fn(x);
    auto it = j_region.find(tag);
    if (it == j_region.end()) it = j_region.find(0);
    return (it == j_region.end()) ? 0.0 : it->second;
  }

  // certify every region law on |h| <= h_max; throws MonotonicityFailure on
  // a non-monotone law, leaving the map uncertified
  void certify(double h_max, int n_samples = 200, unsigned seed = 0) {
    certified = false;
    certificates.clear();
    for (const auto& [tag, law] : laws)
      certificates[tag] = certify_lemma1(law, h_max, n_samples, seed);
    certified = true;
  }

  void require_certified() const {
    if (!certified)
      throw UncertifiedMaterial("material map must be certified before assembly");
  }
};

}  // namespace mqs
