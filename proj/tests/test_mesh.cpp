#include <algorithm>
#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <mqs/mesh.hpp>
#include <numeric>
#include <random>

using namespace mqs;

namespace {

// unit square split along the main diagonal
Mesh two_triangle_square() {
  return build_mesh({{0, 0}, {1, 0}, {1, 1}, {0, 1}},
                    {{{0, 1, 2}}, {{0, 2, 3}}});
}

double total_area(const Mesh& m) {
  double a = 0.0;
  for (int t = 0; t < m.num_triangles(); ++t) a += m.area(t);
  return a;
}

}  // namespace

TEST_CASE("two-triangle square: counts and topology", "[mesh]") {
  Mesh m = two_triangle_square();
  REQUIRE(m.num_nodes() == 4);
  REQUIRE(m.num_edges() == 5);
  REQUIRE(m.num_triangles() == 2);
  REQUIRE(m.num_boundary_edges() == 4);
  REQUIRE(m.simply_connected);
  // the diagonal is the unique interior edge and sees both triangles
  int interior = -1;
  for (int e = 0; e < m.num_edges(); ++e)
    if (!m.edges[e].on_boundary()) {
      REQUIRE(interior == -1);
      interior = e;
    }
  REQUIRE(interior >= 0);
  REQUIRE(m.edges[interior].node[0] == 0);
  REQUIRE(m.edges[interior].node[1] == 2);
  for (int v = 0; v < 4; ++v) REQUIRE(m.node_on_boundary[v] == 1);
}

TEST_CASE("orientation is normalized to CCW regardless of input order", "[mesh]") {
  // same square, one triangle given clockwise
  Mesh m = build_mesh({{0, 0}, {1, 0}, {1, 1}, {0, 1}},
                      {{{0, 2, 1}}, {{0, 2, 3}}});
  for (int t = 0; t < m.num_triangles(); ++t) REQUIRE(m.area(t) > 0.0);
  REQUIRE(total_area(m) == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("canonical result is stable under node relabeling", "[mesh]") {
  // permute vertex rotations of each triangle; geometry-derived quantities agree
  Mesh ref = two_triangle_square();
  std::mt19937 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::array<int, 3>> tris = {{{0, 1, 2}}, {{0, 2, 3}}};
    for (auto& t : tris) {
      int r = static_cast<int>(rng() % 3);
      std::rotate(t.begin(), t.begin() + r, t.end());
      if (rng() % 2) std::swap(t[1], t[2]);  // may flip orientation; must be fixed
    }
    Mesh m = build_mesh({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, tris);
    REQUIRE(m.num_edges() == ref.num_edges());
    for (int t = 0; t < 2; ++t) REQUIRE(m.area(t) > 0.0);
    for (int e = 0; e < m.num_edges(); ++e)
      REQUIRE(m.edges[e].node[0] < m.edges[e].node[1]);
  }
}

TEST_CASE("degenerate triangles are rejected", "[mesh]") {
  REQUIRE_THROWS_AS(build_mesh({{0, 0}, {1, 0}, {2, 0}}, {{{0, 1, 2}}}),
                    DegenerateTriangle);
  // nearly collinear: area ~ 1e-16 of edge scale
  REQUIRE_THROWS_AS(build_mesh({{0, 0}, {1, 0}, {0.5, 1e-16}}, {{{0, 1, 2}}}),
                    DegenerateTriangle);
}

TEST_CASE("invalid node indices are rejected", "[mesh]") {
  REQUIRE_THROWS_AS(build_mesh({{0, 0}, {1, 0}, {0, 1}}, {{{0, 1, 3}}}),
                    IndexOutOfRange);
  REQUIRE_THROWS_AS(build_mesh({{0, 0}, {1, 0}, {0, 1}}, {{{0, 1, -1}}}),
                    IndexOutOfRange);
}

TEST_CASE("an edge shared by three triangles is rejected", "[mesh]") {
  REQUIRE_THROWS_AS(
      build_mesh({{0, 0}, {1, 0}, {0, 1}, {1, 1}, {-1, 1}},
                 {{{0, 1, 2}}, {{0, 1, 3}}, {{0, 1, 4}}}),
      NonConforming);
}

TEST_CASE("hanging nodes are detected", "[mesh]") {
  // node 4 sits on the interior of the diagonal edge (0,2) of triangle 0,
  // splitting only the upper-left half into two triangles
  REQUIRE_THROWS_AS(
      build_mesh({{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}},
                 {{{0, 1, 2}}, {{0, 4, 3}}, {{4, 2, 3}}}),
      NonConforming);
}

TEST_CASE("multiply connected meshes are flagged, not rejected", "[mesh]") {
  // ring of 8 triangles around a square hole
  std::vector<Vec2> nodes = {{0, 0}, {3, 0}, {3, 3}, {0, 3},
                             {1, 1}, {2, 1}, {2, 2}, {1, 2}};
  std::vector<std::array<int, 3>> tris = {{{0, 1, 5}}, {{0, 5, 4}}, {{1, 2, 6}},
                                          {{1, 6, 5}}, {{2, 3, 7}}, {{2, 7, 6}},
                                          {{3, 0, 4}}, {{3, 4, 7}}};
  Mesh m = build_mesh(nodes, tris);
  REQUIRE_FALSE(m.simply_connected);
  REQUIRE(m.num_nodes() - m.num_edges() + m.num_triangles() == 0);
}

TEST_CASE("uniform refinement multiplies triangles by four and preserves area", "[mesh]") {
  Mesh m = two_triangle_square();
  Mesh r1 = refine_uniform(m);
  Mesh r2 = refine_uniform(r1);
  REQUIRE(r1.num_triangles() == 8);
  REQUIRE(r2.num_triangles() == 32);  // refine twice: 16x
  REQUIRE(total_area(r1) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(total_area(r2) == Catch::Approx(1.0).margin(1e-12));
  // V' = V + E, E' = 2E + 3T
  REQUIRE(r1.num_nodes() == m.num_nodes() + m.num_edges());
  REQUIRE(r1.num_edges() == 2 * m.num_edges() + 3 * m.num_triangles());
  REQUIRE(r1.simply_connected);
  // children occupy slots 4t..4t+3 and inherit the parent region
  Mesh tagged = two_triangle_square();
  tagged.tri_region = {3, 5};
  Mesh rt = refine_uniform(tagged);
  for (int c = 0; c < 4; ++c) {
    REQUIRE(rt.tri_region[c] == 3);
    REQUIRE(rt.tri_region[4 + c] == 5);
  }
}

TEST_CASE("boundary markers survive refinement", "[mesh]") {
  Mesh m = build_mesh({{0, 0}, {1, 0}, {1, 1}, {0, 1}},
                      {{{0, 1, 2}}, {{0, 2, 3}}}, {0, 0},
                      {{{0, 1, 9}}, {{1, 2, 9}}, {{2, 3, 9}}, {{3, 0, 9}}});
  Mesh r = refine_uniform(m);
  int marked = 0;
  for (int e = 0; e < r.num_edges(); ++e) {
    if (r.edge_marker[e] == 9) {
      ++marked;
      REQUIRE(r.edges[e].on_boundary());
    }
  }
  REQUIRE(marked == 8);
}

TEST_CASE("edge-to-vertex ratio approaches three under refinement", "[mesh]") {
  Mesh m = two_triangle_square();
  for (int l = 0; l < 4; ++l) m = refine_uniform(m);
  const double ratio = static_cast<double>(m.num_edges()) / m.num_nodes();
  REQUIRE(ratio > 2.5);
  REQUIRE(ratio < 3.0);
}

TEST_CASE("mesh quality on reference shapes", "[mesh]") {
  // right isoceles triangles: min angle 45 deg, diameter/inradius = 2 + 2*sqrt(2)
  MeshQuality q = mesh_quality(two_triangle_square());
  REQUIRE(q.min_angle_deg == Catch::Approx(45.0).margin(1e-10));
  REQUIRE(q.max_shape_ratio == Catch::Approx(2.0 + 2.0 * std::sqrt(2.0)).margin(1e-12));
  REQUIRE(q.min_area == Catch::Approx(0.5).margin(1e-15));
  REQUIRE(q.max_diameter == Catch::Approx(std::sqrt(2.0)).margin(1e-15));

  // equilateral triangle: all angles 60 deg, diameter/inradius = 2*sqrt(3)
  Mesh eq = build_mesh({{0, 0}, {1, 0}, {0.5, std::sqrt(3.0) / 2.0}}, {{{0, 1, 2}}});
  MeshQuality qe = mesh_quality(eq);
  REQUIRE(qe.min_angle_deg == Catch::Approx(60.0).margin(1e-10));
  REQUIRE(qe.max_shape_ratio == Catch::Approx(2.0 * std::sqrt(3.0)).margin(1e-12));
}

TEST_CASE("structured square mesh counts and regions", "[mesh]") {
  Mesh m = structured_square_mesh(4);
  REQUIRE(m.num_nodes() == 25);
  REQUIRE(m.num_triangles() == 32);
  REQUIRE(m.num_edges() == 25 + 32 - 1);  // Euler
  REQUIRE(total_area(m) == Catch::Approx(1.0).margin(1e-14));
  REQUIRE(m.simply_connected);

  // checkerboard tagging via centroid callback
  Mesh cb = structured_square_mesh(8, [](const Vec2& c) {
    return (c.x() < 0.5) == (c.y() < 0.5) ? 1 : 2;
  });
  int n1 = 0, n2 = 0;
  for (int t = 0; t < cb.num_triangles(); ++t)
    (cb.tri_region[t] == 1 ? n1 : n2)++;
  REQUIRE(n1 == 64);
  REQUIRE(n2 == 64);
}

TEST_CASE("local edge convention: edge i is opposite vertex i", "[mesh]") {
  Mesh m = two_triangle_square();
  for (int t = 0; t < m.num_triangles(); ++t) {
    for (int le = 0; le < 3; ++le) {
      const auto lv = Mesh::local_edge_vertices(le);
      const Edge& e = m.edges[m.tri_edges[t][le]];
      const int a = m.tri_nodes[t][lv[0]], b = m.tri_nodes[t][lv[1]];
      REQUIRE(std::min(a, b) == e.node[0]);
      REQUIRE(std::max(a, b) == e.node[1]);
      REQUIRE(m.edge_aligned(t, le) == (a < b));
    }
  }
}
