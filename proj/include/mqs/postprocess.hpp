#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "assembly.hpp"
#include "core.hpp"
#include "elements.hpp"
#include "mesh.hpp"
#include "quadrature.hpp"

namespace mqs {

// ---------------------------------------------------------------------------
// Flux density fields. Both formulations produce an elementwise polynomial
// representation of B: the primal Curl of the potential (exact, one degree
// below the space) and the elementwise L2 projection of g'(H) for the mixed
// field. Components are stored in the nodal DG basis of the same degree.
// ---------------------------------------------------------------------------

struct FluxField {
  const Mesh* mesh = nullptr;
  int order = 0;               // per-element polynomial degree
  std::vector<MatrixXd> coef;  // per element: ndof x 2

  Vec2 eval(int t, const Vec2& xhat) const {
    VectorXd vals;
    MatrixXd grads;
    DGRef::get(order).eval(xhat, vals, grads);
    return coef[t].transpose() * vals;
  }
};

// B = Curl a evaluated at the DG nodes; exact since Curl a has degree p - 1
inline FluxField post_B(const PrimalSpaces& sp, const VectorXd& a) {
  if (a.size() != sp.U.ndofs) throw InvalidParams("post_B: state size mismatch");
  FluxField f;
  f.mesh = sp.mesh;
  f.order = sp.order - 1;
  const std::vector<Vec2> nodes =
      (f.order == 0) ? std::vector<Vec2>{Vec2(1.0 / 3, 1.0 / 3)}
                     : std::vector<Vec2>{Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)};
  f.coef.resize(sp.mesh->num_triangles());
  for (int t = 0; t < sp.mesh->num_triangles(); ++t) {
    f.coef[t].resize(static_cast<int>(nodes.size()), 2);
    for (size_t n = 0; n < nodes.size(); ++n)
      f.coef[t].row(static_cast<int>(n)) =
          eval_lagrange_vcurl(*sp.mesh, sp.U, a, t, nodes[n]).transpose();
  }
  return f;
}

// elementwise L2 projection of g'(H) onto DG P_k, using the assembly rule
inline FluxField post_B(const MixedSpaces& sp, const MaterialMap& materials,
                        const VectorXd& H) {
  materials.require_certified();
  if (H.size() != sp.Vc.ndofs) throw InvalidParams("post_B: state size mismatch");
  const Mesh& mesh = *sp.mesh;
  FluxField f;
  f.mesh = sp.mesh;
  f.order = sp.k;
  f.coef.resize(mesh.num_triangles());
  const int nq = sp.nq();
  MatrixXd vals;
  VectorXd curls;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto geo = detail::elem_geom(mesh, t);
    const MaterialLaw& law = materials.law_for(mesh.tri_region[t]);
    VectorXd hloc(sp.nv());
    for (int i = 0; i < sp.nv(); ++i) hloc[i] = H[sp.Vc.elem_dof(t, i)];
    MatrixXd M = MatrixXd::Zero(nq, nq);
    MatrixXd rhs = MatrixXd::Zero(nq, 2);
    for (int g = 0; g < sp.rule->size(); ++g) {
      detail::signed_basis(sp, t, g, geo, vals, curls);
      const double w = sp.rule->weights[g];  // the area factor cancels
      const Vec2 b = g_grad(law, vals.transpose() * hloc);
      M.noalias() += w * sp.dg_vals.col(g) * sp.dg_vals.col(g).transpose();
      rhs.noalias() += w * sp.dg_vals.col(g) * b.transpose();
    }
    f.coef[t] = M.ldlt().solve(rhs);
  }
  return f;
}

// ---------------------------------------------------------------------------
// Point location by a uniform background grid over the mesh bounding box.
// Queries on edges or vertices resolve to the lowest incident triangle id,
// so lookups are deterministic.
// ---------------------------------------------------------------------------

class PointLocator {
 public:
  explicit PointLocator(const Mesh& mesh) : mesh_(&mesh) {
    lo_ = hi_ = mesh.nodes[0];
    for (const Vec2& p : mesh.nodes) {
      lo_ = lo_.cwiseMin(p);
      hi_ = hi_.cwiseMax(p);
    }
    scale_ = std::max({hi_.x() - lo_.x(), hi_.y() - lo_.y(), 1e-300});
    n_ = std::max(1, static_cast<int>(std::sqrt(mesh.num_triangles())));
    cells_.assign(static_cast<size_t>(n_) * n_, {});
    for (int t = 0; t < mesh.num_triangles(); ++t) {
      Vec2 tlo = mesh.vertex(t, 0), thi = tlo;
      for (int i = 1; i < 3; ++i) {
        tlo = tlo.cwiseMin(mesh.vertex(t, i));
        thi = thi.cwiseMax(mesh.vertex(t, i));
      }
      const auto [i0, j0] = cell_of(tlo);
      const auto [i1, j1] = cell_of(thi);
      for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i) cells_[j * n_ + i].push_back(t);
    }
  }

  // reference coordinates of x within element t
  Vec2 reference_coords(int t, const Vec2& x) const {
    return mesh_->jacobian(t).inverse() * (x - mesh_->vertex(t, 0));
  }

  // containing triangle (lowest id on ties), or -1 if x lies outside the mesh
  int locate(const Vec2& x) const {
    const auto [i, j] = cell_of(x);
    int best = -1;
    for (int t : cells_[j * n_ + i]) {
      const Vec2 r = reference_coords(t, x);
      const double m = std::min({r.x(), r.y(), 1.0 - r.x() - r.y()});
      if (m >= -1e-10 && (best < 0 || t < best)) best = t;
    }
    return best;
  }

 private:
  const Mesh* mesh_;
  Vec2 lo_, hi_;
  double scale_ = 1.0;
  int n_ = 1;
  std::vector<std::vector<int>> cells_;

  std::pair<int, int> cell_of(const Vec2& p) const {
    const auto clampi = [&](double v) {
      return std::clamp(static_cast<int>(v * n_), 0, n_ - 1);
    };
    return {clampi((p.x() - lo_.x()) / scale_), clampi((p.y() - lo_.y()) / scale_)};
  }
};

// ---------------------------------------------------------------------------
// L2 errors of flux fields, against a closed-form field or against a
// reference field on a (finer) mesh; the cross-mesh variant integrates over
// the reference mesh and locates the coarse element for each point.
// ---------------------------------------------------------------------------

inline double l2_error(const FluxField& f, const std::function<Vec2(const Vec2&)>& exact,
                       const QuadRule& rule = rule_for_degree(6)) {
  double acc = 0.0;
  for (int t = 0; t < f.mesh->num_triangles(); ++t) {
    const double area = f.mesh->area(t);
    for (int g = 0; g < rule.size(); ++g) {
      const Vec2 xhat = rule.point_xy(g);
      const Vec2 d = f.eval(t, xhat) - exact(f.mesh->map_from_reference(t, xhat));
      acc += rule.weights[g] * area * d.squaredNorm();
    }
  }
  return std::sqrt(acc);
}

inline double l2_error(const FluxField& f, const FluxField& reference,
                       const QuadRule& rule = rule_for_degree(6)) {
  const Mesh& rm = *reference.mesh;
  const PointLocator loc(*f.mesh);
  double acc = 0.0;
  for (int t = 0; t < rm.num_triangles(); ++t) {
    const double area = rm.area(t);
    for (int g = 0; g < rule.size(); ++g) {
      const Vec2 x = rm.map_from_reference(t, rule.point_xy(g));
      const int tc = loc.locate(x);
      if (tc < 0) throw IndexOutOfRange("l2_error: reference point outside the mesh");
      const Vec2 d = f.eval(tc, loc.reference_coords(tc, x)) -
                     reference.eval(t, rule.point_xy(g));
      acc += rule.weights[g] * area * d.squaredNorm();
    }
  }
  return std::sqrt(acc);
}

inline double l2_norm(const FluxField& f, const QuadRule& rule = rule_for_degree(6)) {
  return l2_error(f, [](const Vec2&) { return Vec2::Zero().eval(); }, rule);
}

// observed convergence orders: eoc[i] = log(e_i / e_{i+1}) / log(h_i / h_{i+1})
inline std::vector<double> observed_orders(const std::vector<double>& h,
                                           const std::vector<double>& err) {
  if (h.size() != err.size() || h.size() < 2)
    throw InvalidParams("observed_orders needs matching sequences of length >= 2");
  std::vector<double> eoc(h.size() - 1);
  for (size_t i = 0; i + 1 < h.size(); ++i)
    eoc[i] = std::log(err[i] / err[i + 1]) / std::log(h[i] / h[i + 1]);
  return eoc;
}

// ---------------------------------------------------------------------------
// Closed-form reference problem on the unit square: the potential
// a = sin(pi x) sin(pi y) with a linear law b = mu h and conductivity sigma
// requires the source j = (2 pi^2 / mu + sigma) sin(pi x) sin(pi y).
// ---------------------------------------------------------------------------

struct ManufacturedCase {
  double mu = 1.0;
  double sigma = 0.0;
  std::function<double(const Vec2&)> a;
  std::function<Vec2(const Vec2&)> B;  // Curl a
  std::function<Vec2(const Vec2&)> H;  // B / mu
  std::function<double(const Vec2&)> j;
};

inline ManufacturedCase manufactured_case_linear(double mu, double sigma) {
  if (!(mu > 0.0)) throw InvalidParams("manufactured case needs mu > 0");
  ManufacturedCase c;
  c.mu = mu;
  c.sigma = sigma;
  c.a = [](const Vec2& x) { return std::sin(M_PI * x.x()) * std::sin(M_PI * x.y()); };
  c.B = [](const Vec2& x) {
    return Vec2(M_PI * std::sin(M_PI * x.x()) * std::cos(M_PI * x.y()),
                -M_PI * std::cos(M_PI * x.x()) * std::sin(M_PI * x.y()));
  };
  c.H = [mu](const Vec2& x) {
    return Vec2(M_PI * std::sin(M_PI * x.x()) * std::cos(M_PI * x.y()) / mu,
                -M_PI * std::cos(M_PI * x.x()) * std::sin(M_PI * x.y()) / mu);
  };
  c.j = [mu, sigma](const Vec2& x) {
    return (2.0 * M_PI * M_PI / mu + sigma) * std::sin(M_PI * x.x()) *
           std::sin(M_PI * x.y());
  };
  return c;
}

}  // namespace mqs
