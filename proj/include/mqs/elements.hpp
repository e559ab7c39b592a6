#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "core.hpp"
#include "mesh.hpp"
#include "quadrature.hpp"

namespace mqs {

enum class Family { Lagrange, Nedelec, DiscontinuousP, EdgeTrace };
enum class Continuity { Conforming, Broken };

namespace detail {

// dim P_d in two variables
inline int nmono(int d) { return (d + 1) * (d + 2) / 2; }

// graded ordering: degree g block starts at g(g+1)/2; within a block the
// monomial x^p y^q with p+q = g sits at offset q
inline int mono_index(int p, int q) {
  const int g = p + q;
  return g * (g + 1) / 2 + q;
}

inline VectorXd eval_monomials(int d, const Vec2& pt) {
  VectorXd m(nmono(d));
  for (int g = 0; g <= d; ++g)
    for (int q = 0; q <= g; ++q)
      m[mono_index(g - q, q)] = std::pow(pt.x(), g - q) * std::pow(pt.y(), q);
  return m;
}

// coefficients of the x- (resp. y-) derivative, P_d -> P_{d-1}
inline VectorXd mono_dx(const VectorXd& c, int d) {
  VectorXd r = VectorXd::Zero(nmono(d - 1));
  for (int g = 0; g <= d; ++g)
    for (int q = 0; q <= g; ++q) {
      const int p = g - q;
      if (p > 0) r[mono_index(p - 1, q)] += p * c[mono_index(p, q)];
    }
  return r;
}

inline VectorXd mono_dy(const VectorXd& c, int d) {
  VectorXd r = VectorXd::Zero(nmono(d - 1));
  for (int g = 0; g <= d; ++g)
    for (int q = 0; q <= g; ++q) {
      const int p = g - q;
      if (q > 0) r[mono_index(p, q - 1)] += q * c[mono_index(p, q)];
    }
  return r;
}

// shifted Legendre polynomials on [0,1]: L0 = 1, L1 = 2s - 1
inline double legendre01(int q, double s) {
  switch (q) {
    case 0: return 1.0;
    case 1: return 2.0 * s - 1.0;
    default: throw UnsupportedSpace("edge moments implemented for q in {0,1}");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Nedelec elements of the first kind on the reference triangle,
//   N_k(T) = P_k(T)^2 + x_perp * homogeneous P_k,   x_perp = (-y, x),
// for k in {0,1}. Degrees of freedom are tangential moments against Legendre
// polynomials on each edge (k+1 per edge, in the edge's own low-to-high
// parametrization on the reference element) plus, for k = 1, the two moments
// against the constant fields e_x, e_y. The basis is recovered numerically by
// inverting the functional matrix of a spanning set; unisolvence is certified
// by the conditioning of that inversion.
// ---------------------------------------------------------------------------
class NedelecRef {
 public:
  int order;
  int ndof;
  int n_edge_moments;  // per edge: k+1
  int n_interior;      // 0 (k=0) or 2 (k=1)

  static const NedelecRef& get(int k) {
    static const NedelecRef n0(0), n1(1);
    if (k == 0) return n0;
    if (k == 1) return n1;
    throw UnsupportedSpace("Nedelec spaces implemented for k in {0,1}");
  }

  explicit NedelecRef(int k) : order(k) {
    if (k != 0 && k != 1)
      throw UnsupportedSpace("Nedelec spaces implemented for k in {0,1}");
    n_edge_moments = k + 1;
    n_interior = (k == 1) ? 2 : 0;
    ndof = 3 * n_edge_moments + n_interior;
    mdeg_ = k + 1;
    const int nm = detail::nmono(mdeg_);

    // spanning set: P_k^2 plus x_perp * (homogeneous degree-k monomials)
    MatrixXd sx = MatrixXd::Zero(ndof, nm), sy = MatrixXd::Zero(ndof, nm);
    int row = 0;
    for (int g = 0; g <= k; ++g)
      for (int q = 0; q <= g; ++q) {
        sx(row++, detail::mono_index(g - q, q)) = 1.0;  // (m, 0)
        sy(row++, detail::mono_index(g - q, q)) = 1.0;  // (0, m)
      }
    for (int q = 0; q <= k; ++q) {
      // x_perp * x^{k-q} y^q = (-x^{k-q} y^{q+1}, x^{k-q+1} y^q)
      sx(row, detail::mono_index(k - q, q + 1)) = -1.0;
      sy(row, detail::mono_index(k - q + 1, q)) = 1.0;
      ++row;
    }

    // functional matrix A_ij = N_i(span_j), then basis = span * A^{-1}
    MatrixXd A(ndof, ndof);
    for (int j = 0; j < ndof; ++j) {
      auto field = [&](const Vec2& p) -> Vec2 {
        const VectorXd m = detail::eval_monomials(mdeg_, p);
        return Vec2(sx.row(j).dot(m), sy.row(j).dot(m));
      };
      A.col(j) = apply_functionals(field);
    }
    Eigen::FullPivLU<MatrixXd> lu(A);
    if (!lu.isInvertible())
      throw UnsupportedSpace("Nedelec dof functionals are not unisolvent");
    const MatrixXd X = lu.inverse();
    cx_ = X.transpose() * sx;
    cy_ = X.transpose() * sy;

    ccurl_.resize(ndof, detail::nmono(mdeg_ - 1));
    for (int j = 0; j < ndof; ++j)
      ccurl_.row(j) = (detail::mono_dx(cy_.row(j), mdeg_) -
                       detail::mono_dy(cx_.row(j), mdeg_))
                          .transpose();
  }

  // reference vertices; edge e runs from vertex (e+1)%3 to (e+2)%3
  static Vec2 ref_vertex(int i) {
    static const Vec2 v[3] = {Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)};
    return v[i];
  }

  // values: ndof x 2 (row i = basis field i), curls: ndof
  void eval(const Vec2& p, MatrixXd& values, VectorXd& curls) const {
    const VectorXd m = detail::eval_monomials(mdeg_, p);
    const VectorXd mc = detail::eval_monomials(mdeg_ - 1, p);
    values.resize(ndof, 2);
    values.col(0) = cx_ * m;
    values.col(1) = cy_ * m;
    curls = ccurl_ * mc;
  }

  // canonical dof functionals applied to an arbitrary reference field
  VectorXd dofs_of(const std::function<Vec2(const Vec2&)>& v) const {
    return apply_functionals(v);
  }

  // functionals applied to the element's own basis; identity iff unisolvent
  MatrixXd dof_matrix() const {
    MatrixXd D(ndof, ndof);
    for (int j = 0; j < ndof; ++j) {
      auto field = [&](const Vec2& p) -> Vec2 {
        const VectorXd m = detail::eval_monomials(mdeg_, p);
        return Vec2(cx_.row(j).dot(m), cy_.row(j).dot(m));
      };
      D.col(j) = apply_functionals(field);
    }
    return D;
  }

 private:
  int mdeg_;
  MatrixXd cx_, cy_, ccurl_;

  template <class V>
  VectorXd apply_functionals(V&& v) const {
    VectorXd N(ndof);
    const EdgeRule& er = edge_rule(3);  // exact for the polynomial traces used here
    int i = 0;
    for (int e = 0; e < 3; ++e) {
      const Vec2 a = ref_vertex((e + 1) % 3), b = ref_vertex((e + 2) % 3);
      const Vec2 d = b - a;
      for (int q = 0; q < n_edge_moments; ++q, ++i) {
        double s = 0.0;
        for (int g = 0; g < er.size(); ++g) {
          const Vec2 p = a + er.points[g] * d;
          s += er.weights[g] * v(p).dot(d) * detail::legendre01(q, er.points[g]);
        }
        N[i] = s;
      }
    }
    if (n_interior > 0) {
      const QuadRule& r = rule_for_degree(4);
      Vec2 s = Vec2::Zero();
      for (int g = 0; g < r.size(); ++g) s += 0.5 * r.weights[g] * v(r.point_xy(g));
      N[i++] = s.x();
      N[i++] = s.y();
    }
    return N;
  }
};

// ---------------------------------------------------------------------------
// Nodal Lagrange elements of order k in {1,2}; nodes are the vertices and,
// for k = 2, the edge midpoints (midpoint of edge e at slot 3 + e).
// ---------------------------------------------------------------------------
class LagrangeRef {
 public:
  int order;
  int ndof;
  std::vector<Vec2> nodes;

  static const LagrangeRef& get(int k) {
    static const LagrangeRef p1(1), p2(2);
    if (k == 1) return p1;
    if (k == 2) return p2;
    throw UnsupportedSpace("Lagrange spaces implemented for k in {1,2}");
  }

  explicit LagrangeRef(int k) : order(k) {
    if (k != 1 && k != 2)
      throw UnsupportedSpace("Lagrange spaces implemented for k in {1,2}");
    ndof = detail::nmono(k);
    for (int i = 0; i < 3; ++i) nodes.push_back(NedelecRef::ref_vertex(i));
    if (k == 2)
      for (int e = 0; e < 3; ++e)
        nodes.push_back(0.5 * (NedelecRef::ref_vertex((e + 1) % 3) +
                               NedelecRef::ref_vertex((e + 2) % 3)));

    MatrixXd V(ndof, ndof);
    for (int i = 0; i < ndof; ++i)
      V.row(i) = detail::eval_monomials(k, nodes[i]).transpose();
    c_ = V.inverse().transpose();
  }

  void eval(const Vec2& p, VectorXd& values, MatrixXd& grads) const {
    values = c_ * detail::eval_monomials(order, p);
    grads.resize(ndof, 2);
    for (int j = 0; j < ndof; ++j) {
      grads(j, 0) = detail::mono_dx(c_.row(j), order)
                        .dot(detail::eval_monomials(order - 1, p));
      grads(j, 1) = detail::mono_dy(c_.row(j), order)
                        .dot(detail::eval_monomials(order - 1, p));
    }
  }

  MatrixXd dof_matrix() const {
    MatrixXd D(ndof, ndof);
    VectorXd vals;
    MatrixXd grads;
    for (int i = 0; i < ndof; ++i) {
      eval(nodes[i], vals, grads);
      D.row(i) = vals.transpose();
    }
    return D;
  }

 private:
  MatrixXd c_;
};

// ---------------------------------------------------------------------------
// Discontinuous P_k, k in {0,1}. The P_1 basis is nodal at the reference
// vertices (barycentric coordinates); P_0 is the constant 1.
// ---------------------------------------------------------------------------
class DGRef {
 public:
  int order;
  int ndof;

  static const DGRef& get(int k) {
    static const DGRef q0(0), q1(1);
    if (k == 0) return q0;
    if (k == 1) return q1;
    throw UnsupportedSpace("discontinuous spaces implemented for k in {0,1}");
  }

  explicit DGRef(int k) : order(k), ndof(k == 0 ? 1 : 3) {
    if (k != 0 && k != 1)
      throw UnsupportedSpace("discontinuous spaces implemented for k in {0,1}");
  }

  void eval(const Vec2& p, VectorXd& values, MatrixXd& grads) const {
    if (order == 0) {
      values = VectorXd::Ones(1);
      grads = MatrixXd::Zero(1, 2);
      return;
    }
    values.resize(3);
    values << 1.0 - p.x() - p.y(), p.x(), p.y();
    grads.resize(3, 2);
    grads << -1, -1, 1, 0, 0, 1;
  }

  MatrixXd dof_matrix() const {
    MatrixXd D(ndof, ndof);
    VectorXd vals;
    MatrixXd grads;
    for (int i = 0; i < ndof; ++i) {
      const Vec2 p = (order == 0) ? Vec2(1.0 / 3.0, 1.0 / 3.0) : NedelecRef::ref_vertex(i);
      eval(p, vals, grads);
      D.row(i) = vals.transpose();
    }
    return D;
  }
};

// ---------------------------------------------------------------------------
// Polynomial traces of degree <= k on an edge, in the edge's canonical
// low-to-high arc-length parametrization s in [0,1]. Basis: shifted Legendre.
// ---------------------------------------------------------------------------
class TraceRef {
 public:
  int order;
  int ndof;

  static const TraceRef& get(int k) {
    static const TraceRef t0(0), t1(1);
    if (k == 0) return t0;
    if (k == 1) return t1;
    throw UnsupportedSpace("edge trace spaces implemented for k in {0,1}");
  }

  explicit TraceRef(int k) : order(k), ndof(k + 1) {
    if (k != 0 && k != 1)
      throw UnsupportedSpace("edge trace spaces implemented for k in {0,1}");
  }

  void eval(double s, VectorXd& values) const {
    values.resize(ndof);
    for (int q = 0; q < ndof; ++q) values[q] = detail::legendre01(q, s);
  }

  // moments against the basis, scaled to be dual: int L_q L_r (2r+1) = delta
  MatrixXd dof_matrix() const {
    const EdgeRule& er = edge_rule(3);
    MatrixXd D = MatrixXd::Zero(ndof, ndof);
    VectorXd vals;
    for (int g = 0; g < er.size(); ++g) {
      eval(er.points[g], vals);
      for (int r = 0; r < ndof; ++r)
        D.row(r) += er.weights[g] * (2 * r + 1) * detail::legendre01(r, er.points[g]) *
                    vals.transpose();
    }
    return D;
  }
};

// ---------------------------------------------------------------------------
// Covariant (tangential-trace preserving) push-forward: reference field
// values v_hat become J^{-T} v_hat and scalar curls scale by 1/det J, so that
// circulations along mapped curves are preserved. `ref_values` holds one
// basis field per row.
// ---------------------------------------------------------------------------
inline void map_covariant(const MatrixXd& ref_values, const VectorXd& ref_curls,
                          const Mat2& J, MatrixXd& values, VectorXd& curls) {
  const double det = J.determinant();
  if (std::abs(det) <= 1e-14 * std::max(J.squaredNorm(), 1e-300))
    throw SingularJacobian("covariant map: |det J| vanishes relative to |J|^2");
  values = ref_values * J.inverse();  // rows v_hat^T J^{-1} = (J^{-T} v_hat)^T
  curls = ref_curls / det;
}

// ---------------------------------------------------------------------------
// Global dof numbering. Element-attached dofs are listed per element in the
// reference order of the family; `elem_signs` carries the orientation factor
// relating the global (canonical, low-to-high edge) dof to the local one.
// Coefficients of broken spaces use the same signed local bases, so
// conforming coefficients inject into broken ones by plain copying.
// ---------------------------------------------------------------------------
struct DofMap {
  Family family = Family::Nedelec;
  int order = 0;
  Continuity continuity = Continuity::Conforming;
  int ndofs = 0;
  int ndof_elem = 0;
  std::vector<int> elem_dofs;
  std::vector<signed char> elem_signs;
  std::vector<char> is_constrained;

  int elem_dof(int t, int m) const { return elem_dofs[t * ndof_elem + m]; }
  double elem_sign(int t, int m) const { return elem_signs[t * ndof_elem + m]; }

  int num_free() const {
    int n = 0;
    for (char c : is_constrained) n += c ? 0 : 1;
    return n;
  }

  // global dof -> index among free dofs, -1 for constrained dofs
  std::vector<int> free_index() const {
    std::vector<int> idx(ndofs, -1);
    int n = 0;
    for (int i = 0; i < ndofs; ++i)
      if (!is_constrained[i]) idx[i] = n++;
    return idx;
  }
};

inline DofMap build_dofmap(const Mesh& mesh, Family family, int order,
                           Continuity continuity = Continuity::Conforming) {
  DofMap d;
  d.family = family;
  d.order = order;
  d.continuity = continuity;
  const int nt = mesh.num_triangles(), ne = mesh.num_edges(), nv = mesh.num_nodes();

  switch (family) {
    case Family::Nedelec: {
      const NedelecRef& ref = NedelecRef::get(order);
      const int nem = ref.n_edge_moments;
      d.ndof_elem = ref.ndof;
      d.elem_dofs.resize(nt * ref.ndof);
      d.elem_signs.resize(nt * ref.ndof);
      const bool broken = (continuity == Continuity::Broken);
      d.ndofs = broken ? nt * ref.ndof : nem * ne + ref.n_interior * nt;
      for (int t = 0; t < nt; ++t) {
        int m = 0;
        for (int le = 0; le < 3; ++le) {
          const bool aligned = mesh.edge_aligned(t, le);
          for (int q = 0; q < nem; ++q, ++m) {
            d.elem_dofs[t * ref.ndof + m] =
                broken ? t * ref.ndof + m : nem * mesh.tri_edges[t][le] + q;
            // a flipped edge negates even moments; odd Legendre moments are
            // invariant under s -> 1-s combined with the tangent flip
            d.elem_signs[t * ref.ndof + m] = (aligned || q % 2 == 1) ? 1 : -1;
          }
        }
        for (int i = 0; i < ref.n_interior; ++i, ++m) {
          d.elem_dofs[t * ref.ndof + m] =
              broken ? t * ref.ndof + m : nem * ne + ref.n_interior * t + i;
          d.elem_signs[t * ref.ndof + m] = 1;
        }
      }
      d.is_constrained.assign(d.ndofs, 0);
      break;
    }
    case Family::Lagrange: {
      const LagrangeRef& ref = LagrangeRef::get(order);
      if (continuity == Continuity::Broken)
        throw UnsupportedSpace("broken Lagrange spaces are not provided");
      d.ndof_elem = ref.ndof;
      d.ndofs = (order == 1) ? nv : nv + ne;
      d.elem_dofs.resize(nt * ref.ndof);
      d.elem_signs.assign(nt * ref.ndof, 1);
      for (int t = 0; t < nt; ++t) {
        for (int i = 0; i < 3; ++i) d.elem_dofs[t * ref.ndof + i] = mesh.tri_nodes[t][i];
        if (order == 2)
          for (int le = 0; le < 3; ++le)
            d.elem_dofs[t * ref.ndof + 3 + le] = nv + mesh.tri_edges[t][le];
      }
      d.is_constrained.assign(d.ndofs, 0);
      for (int v = 0; v < nv; ++v) d.is_constrained[v] = mesh.node_on_boundary[v];
      if (order == 2)
        for (int e = 0; e < ne; ++e)
          d.is_constrained[nv + e] = mesh.edges[e].on_boundary() ? 1 : 0;
      break;
    }
    case Family::DiscontinuousP: {
      const DGRef& ref = DGRef::get(order);
      d.continuity = Continuity::Broken;
      d.ndof_elem = ref.ndof;
      d.ndofs = nt * ref.ndof;
      d.elem_dofs.resize(nt * ref.ndof);
      d.elem_signs.assign(nt * ref.ndof, 1);
      for (int t = 0; t < nt; ++t)
        for (int m = 0; m < ref.ndof; ++m) d.elem_dofs[t * ref.ndof + m] = t * ref.ndof + m;
      d.is_constrained.assign(d.ndofs, 0);
      break;
    }
    case Family::EdgeTrace: {
      const TraceRef& ref = TraceRef::get(order);
      d.ndof_elem = 3 * ref.ndof;
      d.ndofs = ne * ref.ndof;
      d.elem_dofs.resize(nt * d.ndof_elem);
      d.elem_signs.assign(nt * d.ndof_elem, 1);
      for (int t = 0; t < nt; ++t)
        for (int le = 0; le < 3; ++le)
          for (int q = 0; q < ref.ndof; ++q)
            d.elem_dofs[t * d.ndof_elem + le * ref.ndof + q] =
                ref.ndof * mesh.tri_edges[t][le] + q;
      d.is_constrained.assign(d.ndofs, 0);
      for (int e = 0; e < ne; ++e)
        if (mesh.edges[e].on_boundary())
          for (int q = 0; q < ref.ndof; ++q) d.is_constrained[ref.ndof * e + q] = 1;
      break;
    }
  }
  return d;
}

// spec'd one-call tabulation: values plus the natural derivative block
// (scalar curls for Nedelec, gradients for scalar families)
struct BasisValues {
  MatrixXd values;
  MatrixXd derivs;
};

inline BasisValues eval_basis(Family family, int order, const Vec2& point) {
  BasisValues b;
  switch (family) {
    case Family::Nedelec: {
      VectorXd curls;
      NedelecRef::get(order).eval(point, b.values, curls);
      b.derivs = curls;
      break;
    }
    case Family::Lagrange: {
      VectorXd vals;
      LagrangeRef::get(order).eval(point, vals, b.derivs);
      b.values = vals;
      break;
    }
    case Family::DiscontinuousP: {
      VectorXd vals;
      DGRef::get(order).eval(point, vals, b.derivs);
      b.values = vals;
      break;
    }
    case Family::EdgeTrace: {
      VectorXd vals;
      TraceRef::get(order).eval(point.x(), vals);
      b.values = vals;
      b.derivs.resize(0, 0);
      break;
    }
  }
  return b;
}

// ---------------------------------------------------------------------------
// Field evaluation and transfer
// ---------------------------------------------------------------------------

// evaluate a Nedelec coefficient field at a reference point of element t
inline Vec2 eval_nedelec_field(const Mesh& mesh, const DofMap& map, const VectorXd& x,
                               int t, const Vec2& xhat) {
  const NedelecRef& ref = NedelecRef::get(map.order);
  MatrixXd vals;
  VectorXd curls;
  ref.eval(xhat, vals, curls);
  MatrixXd pv;
  VectorXd pc;
  map_covariant(vals, curls, mesh.jacobian(t), pv, pc);
  Vec2 v = Vec2::Zero();
  for (int m = 0; m < ref.ndof; ++m)
    v += x[map.elem_dof(t, m)] * map.elem_sign(t, m) * pv.row(m).transpose();
  return v;
}

inline double eval_nedelec_curl(const Mesh& mesh, const DofMap& map, const VectorXd& x,
                                int t, const Vec2& xhat) {
  const NedelecRef& ref = NedelecRef::get(map.order);
  MatrixXd vals;
  VectorXd curls;
  ref.eval(xhat, vals, curls);
  MatrixXd pv;
  VectorXd pc;
  map_covariant(vals, curls, mesh.jacobian(t), pv, pc);
  double c = 0.0;
  for (int m = 0; m < ref.ndof; ++m)
    c += x[map.elem_dof(t, m)] * map.elem_sign(t, m) * pc[m];
  return c;
}

inline double eval_dg_field(const DofMap& map, const VectorXd& x, int t, const Vec2& xhat) {
  const DGRef& ref = DGRef::get(map.order);
  VectorXd vals;
  MatrixXd grads;
  ref.eval(xhat, vals, grads);
  double v = 0.0;
  for (int m = 0; m < ref.ndof; ++m) v += x[map.elem_dof(t, m)] * vals[m];
  return v;
}

inline double eval_lagrange_field(const DofMap& map, const VectorXd& x, int t,
                                  const Vec2& xhat) {
  const LagrangeRef& ref = LagrangeRef::get(map.order);
  VectorXd vals;
  MatrixXd grads;
  ref.eval(xhat, vals, grads);
  double v = 0.0;
  for (int m = 0; m < ref.ndof; ++m) v += x[map.elem_dof(t, m)] * vals[m];
  return v;
}

// physical gradient of a Lagrange field: grad = J^{-T} grad_hat
inline Vec2 eval_lagrange_grad(const Mesh& mesh, const DofMap& map, const VectorXd& x,
                               int t, const Vec2& xhat) {
  const LagrangeRef& ref = LagrangeRef::get(map.order);
  VectorXd vals;
  MatrixXd grads;
  ref.eval(xhat, vals, grads);
  Vec2 g = Vec2::Zero();
  for (int m = 0; m < ref.ndof; ++m) g += x[map.elem_dof(t, m)] * grads.row(m).transpose();
  return mesh.jacobian(t).inverse().transpose() * g;
}

// vector curl of a scalar field: Curl a = (dy a, -dx a)
inline Vec2 eval_lagrange_vcurl(const Mesh& mesh, const DofMap& map, const VectorXd& x,
                                int t, const Vec2& xhat) {
  return -perp(eval_lagrange_grad(mesh, map, x, t, xhat));
}

// inject conforming Nedelec coefficients into the broken space (copy), and
// reassemble broken coefficients into conforming ones (average over the
// elements sharing each dof). Both rely on the shared signed-basis layout.
inline VectorXd broken_from_conforming(const Mesh& mesh, const DofMap& conf,
                                       const DofMap& broken, const VectorXd& x) {
  VectorXd xb(broken.ndofs);
  for (int t = 0; t < mesh.num_triangles(); ++t)
    for (int m = 0; m < conf.ndof_elem; ++m)
      xb[broken.elem_dof(t, m)] = x[conf.elem_dof(t, m)];
  return xb;
}

inline VectorXd conforming_from_broken(const Mesh& mesh, const DofMap& conf,
                                       const DofMap& broken, const VectorXd& xb) {
  VectorXd x = VectorXd::Zero(conf.ndofs);
  VectorXd count = VectorXd::Zero(conf.ndofs);
  for (int t = 0; t < mesh.num_triangles(); ++t)
    for (int m = 0; m < conf.ndof_elem; ++m) {
      x[conf.elem_dof(t, m)] += xb[broken.elem_dof(t, m)];
      count[conf.elem_dof(t, m)] += 1.0;
    }
  return x.cwiseQuotient(count);
}

// canonical interpolation onto the conforming Nedelec space: edge circulation
// moments in the canonical edge parametrization plus pulled-back interior
// moments (the pull-back of v under the covariant map is J^T v)
inline VectorXd interpolate_nedelec(const Mesh& mesh, const DofMap& map,
                                    const std::function<Vec2(const Vec2&)>& v) {
  const NedelecRef& ref = NedelecRef::get(map.order);
  const int nem = ref.n_edge_moments;
  VectorXd x(map.ndofs);
  const EdgeRule& er = edge_rule(4);
  for (int e = 0; e < mesh.num_edges(); ++e) {
    const Vec2 a = mesh.nodes[mesh.edges[e].node[0]];
    const Vec2 b = mesh.nodes[mesh.edges[e].node[1]];
    for (int q = 0; q < nem; ++q) {
      double s = 0.0;
      for (int g = 0; g < er.size(); ++g)
        s += er.weights[g] * v(a + er.points[g] * (b - a)).dot(b - a) *
             detail::legendre01(q, er.points[g]);
      x[nem * e + q] = s;
    }
  }
  if (ref.n_interior > 0) {
    const QuadRule& r = rule_for_degree(6);
    for (int t = 0; t < mesh.num_triangles(); ++t) {
      const Mat2 J = mesh.jacobian(t);
      Vec2 s = Vec2::Zero();
      for (int g = 0; g < r.size(); ++g)
        s += 0.5 * r.weights[g] * (J.transpose() * v(mesh.map_from_reference(t, r.point_xy(g))));
      x[nem * mesh.num_edges() + 2 * t] = s.x();
      x[nem * mesh.num_edges() + 2 * t + 1] = s.y();
    }
  }
  return x;
}

inline VectorXd interpolate_lagrange(const Mesh& mesh, const DofMap& map,
                                     const std::function<double(const Vec2&)>& f) {
  VectorXd x(map.ndofs);
  for (int v = 0; v < mesh.num_nodes(); ++v) x[v] = f(mesh.nodes[v]);
  if (map.order == 2)
    for (int e = 0; e < mesh.num_edges(); ++e)
      x[mesh.num_nodes() + e] = f(0.5 * (mesh.nodes[mesh.edges[e].node[0]] +
                                         mesh.nodes[mesh.edges[e].node[1]]));
  return x;
}

// elementwise L2 projection onto the DG space
inline VectorXd project_dg(const Mesh& mesh, const DofMap& map,
                           const std::function<double(const Vec2&)>& f,
                           const QuadRule& rule) {
  const DGRef& ref = DGRef::get(map.order);
  VectorXd x(map.ndofs);
  VectorXd vals;
  MatrixXd grads;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    MatrixXd M = MatrixXd::Zero(ref.ndof, ref.ndof);
    VectorXd rhs = VectorXd::Zero(ref.ndof);
    for (int g = 0; g < rule.size(); ++g) {
      ref.eval(rule.point_xy(g), vals, grads);
      const double w = rule.weights[g];  // elementwise constant factors cancel
      M += w * vals * vals.transpose();
      rhs += w * f(mesh.map_from_reference(t, rule.point_xy(g))) * vals;
    }
    const VectorXd c = M.ldlt().solve(rhs);
    for (int m = 0; m < ref.ndof; ++m) x[map.elem_dof(t, m)] = c[m];
  }
  return x;
}

}  // namespace mqs
