#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <array>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "elements.hpp"
#include "linalg.hpp"
#include "material.hpp"
#include "mesh.hpp"
#include "quadrature.hpp"

namespace mqs {

// ---------------------------------------------------------------------------
// Mixed (hybridized) discretization of the quasistatic system
//
//   (g'(H), v) - (a, rot v) = 0            for all v in the edge space
//   (rot H, q) + (sigma a, q) = (j, q)     for all q in the DG space
//
// The field H lives in the broken edge space, tangential continuity being
// imposed weakly by edge-trace multipliers; the Newton iterate itself is kept
// conforming. Element blocks of the linearized saddle system
//
//   [ M  -B^T  -L^T ] [dH ]   [r]     M = (g''(H) . , .)    B = (rot . , .)
//   [ B   C     0   ] [da ] = [w]     C = (sigma . , .)     L = edge moments
//   [ L   0     0   ] [dhat]   [0]                              of n x (.)
//
// are condensed onto the multiplier: with D = C + B M^{-1} B^T and
// G = L M^{-1} B^T, each element contributes
//
//   S_T   = L M^{-1} L^T - G D^{-1} G^T
//   rhs_T = -L M^{-1} r - G D^{-1} (w - B M^{-1} r)
//
// and the local solves are recovered from the multiplier by
// p = r + L^T dhat, da = D^{-1}(w - B M^{-1} p), dH = M^{-1}(p + B^T da).
// ---------------------------------------------------------------------------

struct MixedSpaces {
  const Mesh* mesh = nullptr;
  int k = 0;
  DofMap Vc;  // conforming edge space (carries the Newton iterate)
  DofMap Vb;  // broken edge space (element-local field unknown)
  DofMap Q;   // discontinuous P_k
  DofMap Tr;  // edge-trace multipliers, k+1 Legendre moments per edge
  const QuadRule* rule = nullptr;
  const EdgeRule* erule = nullptr;

  // reference tabulations at the volume quadrature points
  std::vector<MatrixXd> ref_vals;  // per point: ndof_v x 2
  MatrixXd ref_curls;              // ndof_v x n_points
  MatrixXd dg_vals;                // ndof_q x n_points

  // edge-space reference values at the edge quadrature points, per local edge
  // and traversal (0 = canonical low-to-high, 1 = reversed)
  std::array<std::array<std::vector<MatrixXd>, 2>, 3> edge_vals;
  MatrixXd trace_vals;  // (k+1) x n_edge_points, Legendre at canonical s

  int nv() const { return Vb.ndof_elem; }
  int nq() const { return Q.ndof_elem; }
  int ntr() const { return Tr.ndof_elem; }
};

// The default rule has degree 2k+2, enough for the curl pairing and the mass
// blocks of piecewise-smooth laws; anything weaker is refused.
inline MixedSpaces make_mixed_spaces(const Mesh& mesh, int k,
                                     const QuadRule* rule = nullptr) {
  MixedSpaces sp;
  sp.mesh = &mesh;
  sp.k = k;
  sp.Vc = build_dofmap(mesh, Family::Nedelec, k, Continuity::Conforming);
  sp.Vb = build_dofmap(mesh, Family::Nedelec, k, Continuity::Broken);
  sp.Q = build_dofmap(mesh, Family::DiscontinuousP, k);
  sp.Tr = build_dofmap(mesh, Family::EdgeTrace, k);
  sp.rule = rule ? rule : &rule_for_degree(2 * k + 2);
  if (sp.rule->degree < 2 * k + 2)
    throw QuadratureTooWeak("mixed assembly at order " + std::to_string(k) +
                            " needs a rule of degree >= " + std::to_string(2 * k + 2) +
                            ", got " + std::to_string(sp.rule->degree));
  sp.erule = &edge_rule(2);  // degree 3, exact for trace moments up to k = 1

  const NedelecRef& vref = NedelecRef::get(k);
  const DGRef& qref = DGRef::get(k);
  const int ng = sp.rule->size();
  sp.ref_vals.resize(ng);
  sp.ref_curls.resize(vref.ndof, ng);
  sp.dg_vals.resize(qref.ndof, ng);
  for (int g = 0; g < ng; ++g) {
    VectorXd curls;
    vref.eval(sp.rule->point_xy(g), sp.ref_vals[g], curls);
    sp.ref_curls.col(g) = curls;
    VectorXd qv;
    MatrixXd qg;
    qref.eval(sp.rule->point_xy(g), qv, qg);
    sp.dg_vals.col(g) = qv;
  }

  const int neg = sp.erule->size();
  sp.trace_vals.resize(k + 1, neg);
  for (int le = 0; le < 3; ++le) {
    const Vec2 a = NedelecRef::ref_vertex((le + 1) % 3);
    const Vec2 b = NedelecRef::ref_vertex((le + 2) % 3);
    for (int flip = 0; flip < 2; ++flip) {
      sp.edge_vals[le][flip].resize(neg);
      for (int g = 0; g < neg; ++g) {
        const double s = flip ? 1.0 - sp.erule->points[g] : sp.erule->points[g];
        VectorXd curls;
        vref.eval(a + s * (b - a), sp.edge_vals[le][flip][g], curls);
      }
    }
  }
  for (int q = 0; q <= k; ++q)
    for (int g = 0; g < neg; ++g)
      sp.trace_vals(q, g) = detail::legendre01(q, sp.erule->points[g]);
  return sp;
}

struct LocalBlocks {
  MatrixXd M;  // nv x nv, (g''(H) . , .)
  MatrixXd B;  // nq x nv, (rot . , .)
  MatrixXd C;  // nq x nq, (sigma . , .)
  MatrixXd L;  // ntr x nv, multiplier coupling with the outward normal sign
  VectorXd r;  // nv, -(g'(H), v) + (a, rot v)
  VectorXd w;  // nq, (j - rot H - sigma a, q)
};

namespace detail {

struct ElemGeom {
  Mat2 J, Jinv;
  double det, area;
};

inline ElemGeom elem_geom(const Mesh& mesh, int t) {
  ElemGeom g;
  g.J = mesh.jacobian(t);
  g.det = g.J.determinant();
  g.Jinv = g.J.inverse();
  g.area = 0.5 * g.det;  // build_mesh orients counterclockwise
  return g;
}

// signed physical edge-space basis at one volume quadrature point
inline void signed_basis(const MixedSpaces& sp, int t, int g, const ElemGeom& geo,
                         MatrixXd& vals, VectorXd& curls) {
  vals = sp.ref_vals[g] * geo.Jinv;
  curls = sp.ref_curls.col(g) / geo.det;
  for (int i = 0; i < sp.nv(); ++i) {
    const double s = sp.Vb.elem_sign(t, i);
    vals.row(i) *= s;
    curls[i] *= s;
  }
}

}  // namespace detail

// Element blocks and Newton right-hand sides at the state (H, a); H holds
// conforming edge coefficients, a DG coefficients.
inline std::vector<LocalBlocks> assemble_local_blocks(const MixedSpaces& sp,
                                                      const MaterialMap& materials,
                                                      const VectorXd& H,
                                                      const VectorXd& a) {
  materials.require_certified();
  if (H.size() != sp.Vc.ndofs || a.size() != sp.Q.ndofs)
    throw InvalidParams("assemble_local_blocks: state size mismatch");
  const Mesh& mesh = *sp.mesh;
  const int nv = sp.nv(), nq = sp.nq(), ntr = sp.ntr(), nem = sp.k + 1;
  std::vector<LocalBlocks> blocks(mesh.num_triangles());
  MatrixXd vals;
  VectorXd curls;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto geo = detail::elem_geom(mesh, t);
    const int tag = mesh.tri_region[t];
    const MaterialLaw& law = materials.law_for(tag);
    const double sigma = materials.sigma_for(tag);

    LocalBlocks& b = blocks[t];
    b.M = MatrixXd::Zero(nv, nv);
    b.B = MatrixXd::Zero(nq, nv);
    b.C = MatrixXd::Zero(nq, nq);
    b.L = MatrixXd::Zero(ntr, nv);
    b.r = VectorXd::Zero(nv);
    b.w = VectorXd::Zero(nq);

    VectorXd hloc(nv), aloc(nq);
    for (int i = 0; i < nv; ++i) hloc[i] = H[sp.Vc.elem_dof(t, i)];
    for (int i = 0; i < nq; ++i) aloc[i] = a[sp.Q.elem_dof(t, i)];

    for (int g = 0; g < sp.rule->size(); ++g) {
      detail::signed_basis(sp, t, g, geo, vals, curls);
      const double wq = sp.rule->weights[g] * geo.area;
      const Vec2 hval = vals.transpose() * hloc;
      const double curl_h = curls.dot(hloc);
      const double aval = sp.dg_vals.col(g).dot(aloc);
      const Vec2 x = mesh.map_from_reference(t, sp.rule->point_xy(g));

      b.M.noalias() += wq * vals * g_hess(law, hval) * vals.transpose();
      b.B.noalias() += wq * sp.dg_vals.col(g) * curls.transpose();
      if (sigma != 0.0)
        b.C.noalias() += (sigma * wq) * sp.dg_vals.col(g) * sp.dg_vals.col(g).transpose();
      b.r.noalias() += wq * (aval * curls - vals * g_grad(law, hval));
      b.w.noalias() +=
          (wq * (materials.source(tag, x) - curl_h - sigma * aval)) * sp.dg_vals.col(g);
    }

    // multiplier coupling: on edge E of T, n_T x v ds = sigma_TE v.(hi - lo) ds
    // in the canonical edge parameter, sigma_TE = +1 iff the counterclockwise
    // traversal of T runs the edge low-to-high
    for (int le = 0; le < 3; ++le) {
      const bool aligned = mesh.edge_aligned(t, le);
      const double sg_edge = aligned ? 1.0 : -1.0;
      const Edge& e = mesh.edges[mesh.tri_edges[t][le]];
      const Vec2 d = mesh.nodes[e.node[1]] - mesh.nodes[e.node[0]];
      for (int g = 0; g < sp.erule->size(); ++g) {
        const MatrixXd phys = sp.edge_vals[le][aligned ? 0 : 1][g] * geo.Jinv;
        const double we = sp.erule->weights[g];
        for (int i = 0; i < nv; ++i) {
          const double tang = sp.Vb.elem_sign(t, i) * phys.row(i).dot(d);
          for (int q = 0; q < nem; ++q)
            b.L(le * nem + q, i) += sg_edge * we * sp.trace_vals(q, g) * tang;
        }
      }
    }
  }
  return blocks;
}

// Newton residual restricted to the conforming spaces: the stacked vector
// [r_c; w]. Jump terms cancel on conforming test fields, so this vanishes
// exactly at the discrete solution.
inline VectorXd mixed_residual(const MixedSpaces& sp, const MaterialMap& materials,
                               const VectorXd& H, const VectorXd& a) {
  materials.require_certified();
  if (H.size() != sp.Vc.ndofs || a.size() != sp.Q.ndofs)
    throw InvalidParams("mixed_residual: state size mismatch");
  const Mesh& mesh = *sp.mesh;
  const int nv = sp.nv(), nq = sp.nq();
  VectorXd res = VectorXd::Zero(sp.Vc.ndofs + sp.Q.ndofs);
  MatrixXd vals;
  VectorXd curls;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto geo = detail::elem_geom(mesh, t);
    const int tag = mesh.tri_region[t];
    const MaterialLaw& law = materials.law_for(tag);
    const double sigma = materials.sigma_for(tag);
    VectorXd hloc(nv), aloc(nq);
    for (int i = 0; i < nv; ++i) hloc[i] = H[sp.Vc.elem_dof(t, i)];
    for (int i = 0; i < nq; ++i) aloc[i] = a[sp.Q.elem_dof(t, i)];
    VectorXd rloc = VectorXd::Zero(nv), wloc = VectorXd::Zero(nq);
    for (int g = 0; g < sp.rule->size(); ++g) {
      detail::signed_basis(sp, t, g, geo, vals, curls);
      const double wq = sp.rule->weights[g] * geo.area;
      const Vec2 hval = vals.transpose() * hloc;
      const double curl_h = curls.dot(hloc);
      const double aval = sp.dg_vals.col(g).dot(aloc);
      const Vec2 x = mesh.map_from_reference(t, sp.rule->point_xy(g));
      rloc.noalias() += wq * (aval * curls - vals * g_grad(law, hval));
      wloc.noalias() +=
          (wq * (materials.source(tag, x) - curl_h - sigma * aval)) * sp.dg_vals.col(g);
    }
    for (int i = 0; i < nv; ++i) res[sp.Vc.elem_dof(t, i)] += rloc[i];
    for (int i = 0; i < nq; ++i) res[sp.Vc.ndofs + sp.Q.elem_dof(t, i)] += wloc[i];
  }
  return res;
}

// Static condensation onto the free (interior-edge) multiplier dofs. The
// element factors are kept for the recovery pass.
struct CondensedSystem {
  SparseSymmetric S;
  VectorXd rhs;
  std::vector<Eigen::LLT<MatrixXd>> Mf;  // per-element factor of M
  std::vector<Eigen::LLT<MatrixXd>> Df;  // per-element factor of C + B M^{-1} B^T
  std::vector<int> free;                 // trace dof -> free index, -1 on boundary
};

inline CondensedSystem condense(const MixedSpaces& sp,
                                const std::vector<LocalBlocks>& blocks) {
  const Mesh& mesh = *sp.mesh;
  const int nfree = sp.Tr.num_free();
  CondensedSystem cs;
  cs.free = sp.Tr.free_index();
  cs.rhs = VectorXd::Zero(nfree);
  cs.Mf.resize(mesh.num_triangles());
  cs.Df.resize(mesh.num_triangles());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(mesh.num_triangles()) * sp.ntr() * sp.ntr());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const LocalBlocks& b = blocks[t];
    cs.Mf[t].compute(b.M);
    if (cs.Mf[t].info() != Eigen::Success)
      throw LocalSolveFailure("element " + std::to_string(t) +
                              ": field block is not positive definite");
    const MatrixXd MB = cs.Mf[t].solve(b.B.transpose());
    const MatrixXd ML = cs.Mf[t].solve(b.L.transpose());
    const VectorXd Mr = cs.Mf[t].solve(b.r);
    cs.Df[t].compute(b.C + b.B * MB);
    if (cs.Df[t].info() != Eigen::Success)
      throw LocalSolveFailure("element " + std::to_string(t) +
                              ": condensed potential block is not positive definite");
    const MatrixXd G = b.L * MB;  // ntr x nq
    MatrixXd S = b.L * ML - G * cs.Df[t].solve(G.transpose());
    S = 0.5 * (S + S.transpose()).eval();
    const VectorXd rhs = -b.L * Mr - G * cs.Df[t].solve(b.w - b.B * Mr);
    for (int m = 0; m < sp.ntr(); ++m) {
      const int fm = cs.free[sp.Tr.elem_dof(t, m)];
      if (fm < 0) continue;
      cs.rhs[fm] += rhs[m];
      for (int n = 0; n < sp.ntr(); ++n) {
        const int fn = cs.free[sp.Tr.elem_dof(t, n)];
        if (fn >= 0) trip.emplace_back(fm, fn, S(m, n));
      }
    }
  }
  cs.S = SparseSymmetric(nfree, trip);
  return cs;
}

// element-by-element back substitution from the multiplier solution
struct MixedUpdate {
  VectorXd dH_broken;  // broken edge coefficients
  VectorXd da;         // DG coefficients
  VectorXd a_hat;      // full multiplier vector (zero on boundary edges)
};

inline MixedUpdate recover(const MixedSpaces& sp, const std::vector<LocalBlocks>& blocks,
                           const CondensedSystem& cs, const VectorXd& dhat_free) {
  const Mesh& mesh = *sp.mesh;
  MixedUpdate u;
  u.a_hat = VectorXd::Zero(sp.Tr.ndofs);
  for (int i = 0; i < sp.Tr.ndofs; ++i)
    if (cs.free[i] >= 0) u.a_hat[i] = dhat_free[cs.free[i]];
  u.dH_broken.resize(sp.Vb.ndofs);
  u.da.resize(sp.Q.ndofs);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const LocalBlocks& b = blocks[t];
    VectorXd lhat(sp.ntr());
    for (int m = 0; m < sp.ntr(); ++m) lhat[m] = u.a_hat[sp.Tr.elem_dof(t, m)];
    const VectorXd p = b.r + b.L.transpose() * lhat;
    const VectorXd da = cs.Df[t].solve(b.w - b.B * cs.Mf[t].solve(p));
    const VectorXd dh = cs.Mf[t].solve(p + b.B.transpose() * da);
    for (int m = 0; m < sp.nv(); ++m) u.dH_broken[sp.Vb.elem_dof(t, m)] = dh[m];
    for (int m = 0; m < sp.nq(); ++m) u.da[sp.Q.elem_dof(t, m)] = da[m];
  }
  return u;
}

// ---------------------------------------------------------------------------
// Monolithic form of the same linearized system, unknowns ordered
// [H_broken; a; multiplier restricted to interior edges]. The field must stay
// in the broken space here: on conforming fields the multiplier rows vanish
// identically and the saddle system degenerates. Assembled from the same
// element blocks, so agreement with the condensed path is exact up to
// linear-solver roundoff.
// ---------------------------------------------------------------------------

struct MonolithicSystem {
  Eigen::SparseMatrix<double> A;
  VectorXd rhs;
  int nv = 0, nq = 0, ntr = 0;
  std::vector<int> free;  // trace dof -> free index
};

inline MonolithicSystem assemble_monolithic(const MixedSpaces& sp,
                                            const std::vector<LocalBlocks>& blocks) {
  const Mesh& mesh = *sp.mesh;
  MonolithicSystem ms;
  ms.nv = sp.Vb.ndofs;
  ms.nq = sp.Q.ndofs;
  ms.free = sp.Tr.free_index();
  ms.ntr = sp.Tr.num_free();
  const int n = ms.nv + ms.nq + ms.ntr;
  ms.rhs = VectorXd::Zero(n);
  std::vector<Eigen::Triplet<double>> trip;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const LocalBlocks& b = blocks[t];
    std::vector<int> vi(sp.nv()), qi(sp.nq()), ti(sp.ntr());
    for (int m = 0; m < sp.nv(); ++m) vi[m] = sp.Vb.elem_dof(t, m);
    for (int m = 0; m < sp.nq(); ++m) qi[m] = ms.nv + sp.Q.elem_dof(t, m);
    for (int m = 0; m < sp.ntr(); ++m) {
      const int f = ms.free[sp.Tr.elem_dof(t, m)];
      ti[m] = (f >= 0) ? ms.nv + ms.nq + f : -1;
    }
    for (int i = 0; i < sp.nv(); ++i) {
      for (int j = 0; j < sp.nv(); ++j) trip.emplace_back(vi[i], vi[j], b.M(i, j));
      for (int q = 0; q < sp.nq(); ++q) {
        trip.emplace_back(vi[i], qi[q], -b.B(q, i));
        trip.emplace_back(qi[q], vi[i], b.B(q, i));
      }
      for (int m = 0; m < sp.ntr(); ++m) {
        if (ti[m] < 0) continue;
        trip.emplace_back(vi[i], ti[m], -b.L(m, i));
        trip.emplace_back(ti[m], vi[i], b.L(m, i));
      }
      ms.rhs[vi[i]] += b.r[i];
    }
    for (int q1 = 0; q1 < sp.nq(); ++q1) {
      for (int q2 = 0; q2 < sp.nq(); ++q2) trip.emplace_back(qi[q1], qi[q2], b.C(q1, q2));
      ms.rhs[qi[q1]] += b.w[q1];
    }
  }
  ms.A.resize(n, n);
  ms.A.setFromTriplets(trip.begin(), trip.end());
  ms.A.makeCompressed();
  return ms;
}

inline VectorXd solve_monolithic(const MonolithicSystem& ms) {
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(ms.A);
  if (lu.info() != Eigen::Success)
    throw Error("monolithic saddle system is singular");
  return lu.solve(ms.rhs);
}

// largest L2 norm of the tangential jump of a broken edge-space field across
// the interior edges
inline double max_tangential_jump(const MixedSpaces& sp, const VectorXd& broken) {
  const Mesh& mesh = *sp.mesh;
  const EdgeRule& er = edge_rule(4);
  double worst = 0.0;
  for (int e = 0; e < mesh.num_edges(); ++e) {
    const Edge& ed = mesh.edges[e];
    if (ed.on_boundary()) continue;
    const Vec2 lo = mesh.nodes[ed.node[0]], hi = mesh.nodes[ed.node[1]];
    const Vec2 d = hi - lo;
    const double len = d.norm();
    double acc = 0.0;
    for (int g = 0; g < er.size(); ++g) {
      const Vec2 x = lo + er.points[g] * d;
      double trace[2];
      for (int side = 0; side < 2; ++side) {
        const int t = ed.tri[side];
        int le = 0;
        while (mesh.tri_edges[t][le] != e) ++le;
        const bool aligned = mesh.edge_aligned(t, le);
        const double s = aligned ? er.points[g] : 1.0 - er.points[g];
        const Vec2 a = NedelecRef::ref_vertex((le + 1) % 3);
        const Vec2 b = NedelecRef::ref_vertex((le + 2) % 3);
        const Vec2 v = eval_nedelec_field(mesh, sp.Vb, broken, t, a + s * (b - a));
        trace[side] = v.dot(d) / len;
      }
      acc += er.weights[g] * (trace[0] - trace[1]) * (trace[0] - trace[1]);
    }
    worst = std::max(worst, std::sqrt(len * acc));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Primal formulation: the potential a in the Lagrange space with homogeneous
// Dirichlet data, Curl a = (dy a, -dx a),
//
//   (sigma a, phi) + (f'(Curl a), Curl phi) = (j, phi).
//
// Constrained coefficients stay at zero; systems are posed on the free dofs.
// ---------------------------------------------------------------------------

struct PrimalSpaces {
  const Mesh* mesh = nullptr;
  int order = 1;
  DofMap U;
  const QuadRule* rule = nullptr;
  std::vector<int> free;  // dof -> free index, -1 on the boundary
  MatrixXd ref_vals;      // ndof x n_points
  std::vector<MatrixXd> ref_grads;

  VectorXd expand(const VectorXd& xfree) const {
    VectorXd x = VectorXd::Zero(U.ndofs);
    for (int i = 0; i < U.ndofs; ++i)
      if (free[i] >= 0) x[i] = xfree[free[i]];
    return x;
  }

  VectorXd restrict_free(const VectorXd& x) const {
    VectorXd xf(U.num_free());
    for (int i = 0; i < U.ndofs; ++i)
      if (free[i] >= 0) xf[free[i]] = x[i];
    return xf;
  }
};

inline PrimalSpaces make_primal_spaces(const Mesh& mesh, int order,
                                       const QuadRule* rule = nullptr) {
  PrimalSpaces sp;
  sp.mesh = &mesh;
  sp.order = order;
  sp.U = build_dofmap(mesh, Family::Lagrange, order);
  sp.free = sp.U.free_index();
  sp.rule = rule ? rule : &rule_for_degree(2 * order);
  if (sp.rule->degree < 2 * order)
    throw QuadratureTooWeak("primal assembly at order " + std::to_string(order) +
                            " needs a rule of degree >= " + std::to_string(2 * order) +
                            ", got " + std::to_string(sp.rule->degree));
  const LagrangeRef& ref = LagrangeRef::get(order);
  const int ng = sp.rule->size();
  sp.ref_vals.resize(ref.ndof, ng);
  sp.ref_grads.resize(ng);
  for (int g = 0; g < ng; ++g) {
    VectorXd vals;
    ref.eval(sp.rule->point_xy(g), vals, sp.ref_grads[g]);
    sp.ref_vals.col(g) = vals;
  }
  return sp;
}

struct PrimalSystem {
  SparseSymmetric K;
  VectorXd rhs;
};

// Jacobian (sigma phi, phi) + (f''(Curl a) Curl phi, Curl phi) and residual
// (j, phi) - (sigma a, phi) - (f'(Curl a), Curl phi), both on free dofs; the
// full coefficient vector `a` carries zeros at constrained entries.
inline PrimalSystem assemble_primal(const PrimalSpaces& sp, const MaterialMap& materials,
                                    const VectorXd& a) {
  materials.require_certified();
  if (a.size() != sp.U.ndofs) throw InvalidParams("assemble_primal: state size mismatch");
  const Mesh& mesh = *sp.mesh;
  const int nl = sp.U.ndof_elem;
  const int nfree = sp.U.num_free();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(mesh.num_triangles()) * nl * nl);
  VectorXd rhs = VectorXd::Zero(nfree);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto geo = detail::elem_geom(mesh, t);
    const Mat2 JinvT = geo.Jinv.transpose();
    const int tag = mesh.tri_region[t];
    const MaterialLaw& law = materials.law_for(tag);
    const double sigma = materials.sigma_for(tag);
    VectorXd aloc(nl);
    for (int i = 0; i < nl; ++i) aloc[i] = a[sp.U.elem_dof(t, i)];
    MatrixXd K = MatrixXd::Zero(nl, nl);
    VectorXd res = VectorXd::Zero(nl);
    for (int g = 0; g < sp.rule->size(); ++g) {
      const double wq = sp.rule->weights[g] * geo.area;
      const VectorXd& phi = sp.ref_vals.col(g);
      MatrixXd curls(nl, 2);  // Curl phi_i = -perp(J^{-T} grad_hat phi_i)
      for (int i = 0; i < nl; ++i)
        curls.row(i) = -perp(JinvT * sp.ref_grads[g].row(i).transpose()).transpose();
      const double aval = phi.dot(aloc);
      const Vec2 bval = curls.transpose() * aloc;
      const Vec2 x = mesh.map_from_reference(t, sp.rule->point_xy(g));
      K.noalias() += wq * curls * f_hess(law, bval) * curls.transpose();
      if (sigma != 0.0) K.noalias() += (sigma * wq) * phi * phi.transpose();
      res.noalias() += wq * ((materials.source(tag, x) - sigma * aval) * phi -
                             curls * f_grad(law, bval));
    }
    for (int i = 0; i < nl; ++i) {
      const int fi = sp.free[sp.U.elem_dof(t, i)];
      if (fi < 0) continue;
      rhs[fi] += res[i];
      for (int j = 0; j < nl; ++j) {
        const int fj = sp.free[sp.U.elem_dof(t, j)];
        if (fj >= 0) trip.emplace_back(fi, fj, K(i, j));
      }
    }
  }
  PrimalSystem ps;
  ps.K = SparseSymmetric(nfree, trip);
  ps.rhs = std::move(rhs);
  return ps;
}

inline VectorXd primal_residual(const PrimalSpaces& sp, const MaterialMap& materials,
                                const VectorXd& a) {
  materials.require_certified();
  if (a.size() != sp.U.ndofs) throw InvalidParams("primal_residual: state size mismatch");
  const Mesh& mesh = *sp.mesh;
  const int nl = sp.U.ndof_elem;
  VectorXd rhs = VectorXd::Zero(sp.U.num_free());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto geo = detail::elem_geom(mesh, t);
    const Mat2 JinvT = geo.Jinv.transpose();
    const int tag = mesh.tri_region[t];
    const MaterialLaw& law = materials.law_for(tag);
    const double sigma = materials.sigma_for(tag);
    VectorXd aloc(nl);
    for (int i = 0; i < nl; ++i) aloc[i] = a[sp.U.elem_dof(t, i)];
    VectorXd res = VectorXd::Zero(nl);
    for (int g = 0; g < sp.rule->size(); ++g) {
      const double wq = sp.rule->weights[g] * geo.area;
      const VectorXd& phi = sp.ref_vals.col(g);
      MatrixXd curls(nl, 2);
      for (int i = 0; i < nl; ++i)
        curls.row(i) = -perp(JinvT * sp.ref_grads[g].row(i).transpose()).transpose();
      const double aval = phi.dot(aloc);
      const Vec2 bval = curls.transpose() * aloc;
      const Vec2 x = mesh.map_from_reference(t, sp.rule->point_xy(g));
      res.noalias() += wq * ((materials.source(tag, x) - sigma * aval) * phi -
                             curls * f_grad(law, bval));
    }
    for (int i = 0; i < nl; ++i) {
      const int fi = sp.free[sp.U.elem_dof(t, i)];
      if (fi >= 0) rhs[fi] += res[i];
    }
  }
  return rhs;
}

}  // namespace mqs
