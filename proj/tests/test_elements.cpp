#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <mqs/elements.hpp>
#include <random>

using namespace mqs;

namespace {

Mesh two_triangle_square() {
  return build_mesh({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {{{0, 1, 2}}, {{0, 2, 3}}});
}

// structured 2x2 mesh with the interior node displaced, so that edge
// orientations and Jacobians are not all alike
Mesh perturbed_square() {
  Mesh s = structured_square_mesh(2);
  std::vector<Vec2> nodes = s.nodes;
  nodes[4] = Vec2(0.57, 0.41);  // the single interior node
  return build_mesh(nodes, s.tri_nodes);
}

// reference coordinates of physical point x in triangle t
Vec2 pullback(const Mesh& m, int t, const Vec2& x) {
  return m.jacobian(t).inverse() * (x - m.vertex(t, 0));
}

}  // namespace

TEST_CASE("all reference elements are unisolvent", "[elements]") {
  REQUIRE((NedelecRef::get(0).dof_matrix() - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((NedelecRef::get(1).dof_matrix() - MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((LagrangeRef::get(1).dof_matrix() - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((LagrangeRef::get(2).dof_matrix() - MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((DGRef::get(0).dof_matrix() - MatrixXd::Identity(1, 1)).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((DGRef::get(1).dof_matrix() - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((TraceRef::get(0).dof_matrix() - MatrixXd::Identity(1, 1)).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((TraceRef::get(1).dof_matrix() - MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("unsupported family/order combinations are rejected", "[elements]") {
  REQUIRE_THROWS_AS(NedelecRef::get(2), UnsupportedSpace);
  REQUIRE_THROWS_AS(LagrangeRef::get(0), UnsupportedSpace);
  REQUIRE_THROWS_AS(LagrangeRef::get(3), UnsupportedSpace);
  REQUIRE_THROWS_AS(DGRef::get(2), UnsupportedSpace);
  REQUIRE_THROWS_AS(TraceRef::get(2), UnsupportedSpace);
  Mesh m = two_triangle_square();
  REQUIRE_THROWS_AS(build_dofmap(m, Family::Lagrange, 1, Continuity::Broken),
                    UnsupportedSpace);
}

TEST_CASE("lowest-order Nedelec basis has constant curl 2 on the reference element",
          "[elements]") {
  // each basis field is the Whitney field of its edge; its curl is
  // 2 grad(l_a) x grad(l_b) = 2 on the unit reference triangle
  MatrixXd vals;
  VectorXd curls;
  NedelecRef::get(0).eval(Vec2(0.3, 0.2), vals, curls);
  for (int i = 0; i < 3; ++i) REQUIRE(curls[i] == Catch::Approx(2.0).margin(1e-12));
}

TEST_CASE("Lagrange partition of unity", "[elements]") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.0, 0.49);
  for (int k : {1, 2}) {
    const LagrangeRef& ref = LagrangeRef::get(k);
    for (int trial = 0; trial < 20; ++trial) {
      const Vec2 p(u(rng), u(rng));
      VectorXd vals;
      MatrixXd grads;
      ref.eval(p, vals, grads);
      REQUIRE(vals.sum() == Catch::Approx(1.0).margin(1e-13));
      REQUIRE(grads.colwise().sum().cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("covariant map: values, curls, and singular rejection", "[elements]") {
  MatrixXd vals;
  VectorXd curls;
  NedelecRef::get(1).eval(Vec2(0.25, 0.3), vals, curls);

  // identity map leaves everything unchanged
  MatrixXd pv;
  VectorXd pc;
  map_covariant(vals, curls, Mat2::Identity(), pv, pc);
  REQUIRE((pv - vals).cwiseAbs().maxCoeff() < 1e-15);
  REQUIRE((pc - curls).cwiseAbs().maxCoeff() < 1e-15);

  // uniform scaling by s: values scale by 1/s, curls by 1/s^2
  const double s = 3.5;
  map_covariant(vals, curls, s * Mat2::Identity(), pv, pc);
  REQUIRE((pv * s - vals).cwiseAbs().maxCoeff() < 1e-13);
  REQUIRE((pc * s * s - curls).cwiseAbs().maxCoeff() < 1e-13);

  Mat2 singular;
  singular << 1, 0, 2, 0;
  REQUIRE_THROWS_AS(map_covariant(vals, curls, singular, pv, pc), SingularJacobian);
}

TEST_CASE("covariant map preserves edge circulations", "[elements]") {
  // circulation of the mapped field along the mapped edge equals the
  // reference circulation, for every basis field and every reference edge
  Mat2 J;
  J << 1.3, 0.4, -0.2, 0.9;
  const NedelecRef& ref = NedelecRef::get(1);
  const EdgeRule& er = edge_rule(4);
  for (int e = 0; e < 3; ++e) {
    const Vec2 a = NedelecRef::ref_vertex((e + 1) % 3);
    const Vec2 b = NedelecRef::ref_vertex((e + 2) % 3);
    VectorXd circ_ref = VectorXd::Zero(ref.ndof), circ_phys = VectorXd::Zero(ref.ndof);
    for (int g = 0; g < er.size(); ++g) {
      const Vec2 p = a + er.points[g] * (b - a);
      MatrixXd vals, pv;
      VectorXd curls, pc;
      ref.eval(p, vals, curls);
      map_covariant(vals, curls, J, pv, pc);
      circ_ref += er.weights[g] * (vals * (b - a));
      circ_phys += er.weights[g] * (pv * (J * (b - a)));  // mapped tangent
    }
    REQUIRE((circ_ref - circ_phys).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("vector curl of a mapped scalar transforms contravariantly", "[elements]") {
  // Curl_x(a o F^{-1}) = (1/det J) J Curl_hat(a_hat): checked against central
  // finite differences of the physical field
  Mesh m = perturbed_square();
  DofMap map = build_dofmap(m, Family::Lagrange, 2);
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  VectorXd x(map.ndofs);
  for (int i = 0; i < map.ndofs; ++i) x[i] = u(rng);

  for (int t = 0; t < m.num_triangles(); ++t) {
    const Vec2 xhat(0.31, 0.27);
    const Vec2 xp = m.map_from_reference(t, xhat);
    const Vec2 curl = eval_lagrange_vcurl(m, map, x, t, xhat);

    const double h = 1e-6;
    auto a_at = [&](const Vec2& p) { return eval_lagrange_field(map, x, t, pullback(m, t, p)); };
    const Vec2 fd_curl((a_at(xp + Vec2(0, h)) - a_at(xp - Vec2(0, h))) / (2 * h),
                       -(a_at(xp + Vec2(h, 0)) - a_at(xp - Vec2(h, 0))) / (2 * h));
    REQUIRE((curl - fd_curl).norm() < 1e-7);

    // the closed-form transformation rule
    const Mat2 J = m.jacobian(t);
    VectorXd vals;
    MatrixXd ghat;
    LagrangeRef::get(2).eval(xhat, vals, ghat);
    Vec2 gref = Vec2::Zero();
    for (int i = 0; i < map.ndof_elem; ++i)
      gref += x[map.elem_dof(t, i)] * ghat.row(i).transpose();
    const Vec2 expected = (J * (-perp(gref))) / J.determinant();
    REQUIRE((curl - expected).norm() < 1e-12);
  }
}

TEST_CASE("dof counts on the two-triangle square", "[elements]") {
  Mesh m = two_triangle_square();
  REQUIRE(build_dofmap(m, Family::Nedelec, 0).ndofs == 5);
  REQUIRE(build_dofmap(m, Family::Nedelec, 0, Continuity::Broken).ndofs == 6);
  REQUIRE(build_dofmap(m, Family::Nedelec, 1).ndofs == 2 * 5 + 2 * 2);
  REQUIRE(build_dofmap(m, Family::Nedelec, 1, Continuity::Broken).ndofs == 16);
  REQUIRE(build_dofmap(m, Family::DiscontinuousP, 0).ndofs == 2);
  REQUIRE(build_dofmap(m, Family::DiscontinuousP, 1).ndofs == 6);

  DofMap tr0 = build_dofmap(m, Family::EdgeTrace, 0);
  REQUIRE(tr0.ndofs == 5);
  REQUIRE(tr0.num_free() == 1);  // only the diagonal is interior
  DofMap tr1 = build_dofmap(m, Family::EdgeTrace, 1);
  REQUIRE(tr1.ndofs == 10);
  REQUIRE(tr1.num_free() == 2);

  DofMap p1 = build_dofmap(m, Family::Lagrange, 1);
  REQUIRE(p1.ndofs == 4);
  REQUIRE(p1.num_free() == 0);  // every node touches the boundary
  DofMap p2 = build_dofmap(m, Family::Lagrange, 2);
  REQUIRE(p2.ndofs == 9);
  REQUIRE(p2.num_free() == 1);  // the diagonal midpoint
}

TEST_CASE("edge trace dofs are shared by exactly the adjacent elements", "[elements]") {
  Mesh m = perturbed_square();
  DofMap tr = build_dofmap(m, Family::EdgeTrace, 1);
  std::vector<int> touch(tr.ndofs, 0);
  for (int t = 0; t < m.num_triangles(); ++t)
    for (int i = 0; i < tr.ndof_elem; ++i) touch[tr.elem_dof(t, i)]++;
  for (int e = 0; e < m.num_edges(); ++e)
    for (int q = 0; q < 2; ++q)
      REQUIRE(touch[2 * e + q] == (m.edges[e].on_boundary() ? 1 : 2));
}

TEST_CASE("conforming Nedelec fields have continuous tangential traces", "[elements]") {
  Mesh m = perturbed_square();
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k : {0, 1}) {
    DofMap map = build_dofmap(m, Family::Nedelec, k);
    VectorXd x(map.ndofs);
    for (int i = 0; i < map.ndofs; ++i) x[i] = u(rng);
    for (int e = 0; e < m.num_edges(); ++e) {
      const Edge& ed = m.edges[e];
      if (ed.on_boundary()) continue;
      const Vec2 a = m.nodes[ed.node[0]], b = m.nodes[ed.node[1]];
      const Vec2 tang = (b - a).normalized();
      for (double s : {0.11, 0.5, 0.83, 0.97}) {
        const Vec2 p = a + s * (b - a);
        const double t0 =
            eval_nedelec_field(m, map, x, ed.tri[0], pullback(m, ed.tri[0], p)).dot(tang);
        const double t1 =
            eval_nedelec_field(m, map, x, ed.tri[1], pullback(m, ed.tri[1], p)).dot(tang);
        INFO("k = " << k << ", edge " << e << ", s = " << s);
        REQUIRE(std::abs(t0 - t1) < 1e-11);
      }
    }
  }
}

TEST_CASE("canonical interpolation reproduces fields of the space", "[elements]") {
  Mesh m = perturbed_square();
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> u(0.05, 0.3);

  SECTION("k = 0: constants plus c x_perp") {
    auto f = [](const Vec2& p) { return Vec2(0.7 - 1.3 * p.y(), -0.2 + 1.3 * p.x()); };
    DofMap map = build_dofmap(m, Family::Nedelec, 0);
    VectorXd x = interpolate_nedelec(m, map, f);
    for (int t = 0; t < m.num_triangles(); ++t)
      for (int trial = 0; trial < 5; ++trial) {
        const Vec2 xhat(u(rng), u(rng));
        const Vec2 v = eval_nedelec_field(m, map, x, t, xhat);
        REQUIRE((v - f(m.map_from_reference(t, xhat))).norm() < 1e-12);
      }
  }

  SECTION("k = 1: full P1^2 plus x_perp P1_hom") {
    auto f = [](const Vec2& p) {
      const double w = 3.0 * p.x() + 1.0 * p.y();
      return Vec2(1.0 + 2.0 * p.x() - p.y() - w * p.y(), -2.0 + p.x() + 0.5 * p.y() + w * p.x());
    };
    DofMap map = build_dofmap(m, Family::Nedelec, 1);
    VectorXd x = interpolate_nedelec(m, map, f);
    for (int t = 0; t < m.num_triangles(); ++t)
      for (int trial = 0; trial < 5; ++trial) {
        const Vec2 xhat(u(rng), u(rng));
        const Vec2 v = eval_nedelec_field(m, map, x, t, xhat);
        REQUIRE((v - f(m.map_from_reference(t, xhat))).norm() < 1e-11);
      }
  }
}

TEST_CASE("broken/conforming round trip", "[elements]") {
  Mesh m = perturbed_square();
  for (int k : {0, 1}) {
    DofMap conf = build_dofmap(m, Family::Nedelec, k);
    DofMap broken = build_dofmap(m, Family::Nedelec, k, Continuity::Broken);
    std::mt19937 rng(23 + k);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    VectorXd x(conf.ndofs);
    for (int i = 0; i < conf.ndofs; ++i) x[i] = u(rng);
    VectorXd xb = broken_from_conforming(m, conf, broken, x);
    VectorXd back = conforming_from_broken(m, conf, broken, xb);
    REQUIRE((back - x).cwiseAbs().maxCoeff() < 1e-14);

    // the broken field agrees pointwise with the conforming one
    for (int t = 0; t < m.num_triangles(); ++t) {
      const Vec2 xhat(0.21, 0.37);
      REQUIRE((eval_nedelec_field(m, conf, x, t, xhat) -
               eval_nedelec_field(m, broken, xb, t, xhat))
                  .norm() < 1e-13);
    }
  }
}

TEST_CASE("discrete sequence: curl maps the conforming space onto DG", "[elements]") {
  // on a simply connected mesh, rank(curl) = dim P_k = (k=0: T, k=1: 3T)
  Mesh m = perturbed_square();
  for (int k : {0, 1}) {
    DofMap v = build_dofmap(m, Family::Nedelec, k);
    DofMap q = build_dofmap(m, Family::DiscontinuousP, k);
    const DGRef& dg = DGRef::get(k);
    MatrixXd R = MatrixXd::Zero(q.ndofs, v.ndofs);
    for (int t = 0; t < m.num_triangles(); ++t) {
      for (int mloc = 0; mloc < dg.ndof; ++mloc) {
        // DG dofs are nodal: curl phi_j evaluated at the node represents the
        // DG coefficient of curl phi_j on this element
        const Vec2 node = (k == 0) ? Vec2(1.0 / 3.0, 1.0 / 3.0) : NedelecRef::ref_vertex(mloc);
        MatrixXd vals, pv;
        VectorXd curls, pc;
        NedelecRef::get(k).eval(node, vals, curls);
        map_covariant(vals, curls, m.jacobian(t), pv, pc);
        for (int j = 0; j < v.ndof_elem; ++j)
          R(q.elem_dof(t, mloc), v.elem_dof(t, j)) = v.elem_sign(t, j) * pc[j];
      }
    }
    Eigen::FullPivLU<MatrixXd> lu(R);
    lu.setThreshold(1e-10);
    REQUIRE(lu.rank() == q.ndofs);
  }
}

TEST_CASE("eval_basis dispatch returns the documented shapes", "[elements]") {
  BasisValues n = eval_basis(Family::Nedelec, 1, Vec2(0.2, 0.2));
  REQUIRE(n.values.rows() == 8);
  REQUIRE(n.values.cols() == 2);
  REQUIRE(n.derivs.rows() == 8);

  BasisValues l = eval_basis(Family::Lagrange, 2, Vec2(0.2, 0.2));
  REQUIRE(l.values.rows() == 6);
  REQUIRE(l.derivs.cols() == 2);

  BasisValues tr = eval_basis(Family::EdgeTrace, 1, Vec2(0.75, 0));
  REQUIRE(tr.values.rows() == 2);
  REQUIRE(tr.values(1, 0) == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("DG projection reproduces piecewise polynomials", "[elements]") {
  Mesh m = perturbed_square();
  DofMap q = build_dofmap(m, Family::DiscontinuousP, 1);
  auto f = [](const Vec2& p) { return 2.0 - 0.7 * p.x() + 0.4 * p.y(); };
  VectorXd x = project_dg(m, q, f, rule_for_degree(4));
  for (int t = 0; t < m.num_triangles(); ++t) {
    const Vec2 xhat(0.3, 0.5);
    REQUIRE(eval_dg_field(q, x, t, xhat) ==
            Catch::Approx(f(m.map_from_reference(t, xhat))).margin(1e-12));
  }
}
