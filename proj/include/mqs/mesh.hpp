#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <unordered_map>
#include <vector>

#include "core.hpp"

namespace mqs {

struct Edge {
  int node[2];  // endpoint node ids with node[0] < node[1] (canonical orientation)
  int tri[2];   // adjacent triangles; tri[1] == -1 on the boundary

  bool on_boundary() const { return tri[1] < 0; }
};

struct MeshQuality {
  double min_angle_deg = 0.0;
  double max_shape_ratio = 0.0;  // max over elements of diameter / inradius
  double min_area = 0.0;
  double max_diameter = 0.0;
};

// Conforming triangle mesh. Triangles are stored counter-clockwise; local
// edge i of a triangle connects vertices (i+1, i+2) mod 3 (opposite vertex i).
struct Mesh {
  std::vector<Vec2> nodes;
  std::vector<std::array<int, 3>> tri_nodes;
  std::vector<int> tri_region;
  std::vector<Edge> edges;
  std::vector<std::array<int, 3>> tri_edges;
  std::vector<int> edge_marker;        // boundary markers (0 = unmarked)
  std::vector<char> node_on_boundary;
  bool simply_connected = true;        // Euler characteristic V - E + T == 1

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_edges() const { return static_cast<int>(edges.size()); }
  int num_triangles() const { return static_cast<int>(tri_nodes.size()); }

  int num_boundary_edges() const {
    int n = 0;
    for (const Edge& e : edges) n += e.on_boundary() ? 1 : 0;
    return n;
  }

  const Vec2& vertex(int t, int i) const { return nodes[tri_nodes[t][i]]; }

  // Jacobian of the affine map from the reference triangle (0,0),(1,0),(0,1);
  // columns are v1 - v0 and v2 - v0. det > 0 by the CCW normalization.
  Mat2 jacobian(int t) const {
    Mat2 J;
    J.col(0) = vertex(t, 1) - vertex(t, 0);
    J.col(1) = vertex(t, 2) - vertex(t, 0);
    return J;
  }

  double area(int t) const {
    return 0.5 * cross2(vertex(t, 1) - vertex(t, 0), vertex(t, 2) - vertex(t, 0));
  }

  Vec2 centroid(int t) const { return (vertex(t, 0) + vertex(t, 1) + vertex(t, 2)) / 3.0; }

  Vec2 map_from_reference(int t, const Vec2& xhat) const {
    return vertex(t, 0) + jacobian(t) * xhat;
  }

  // local edge i of a triangle runs from local vertex (i+1)%3 to (i+2)%3
  static std::array<int, 2> local_edge_vertices(int i) {
    return {(i + 1) % 3, (i + 2) % 3};
  }

  // true if local edge `le` of triangle t runs in the canonical (low id -> high
  // id) direction of the global edge
  bool edge_aligned(int t, int le) const {
    const auto lv = local_edge_vertices(le);
    return tri_nodes[t][lv[0]] < tri_nodes[t][lv[1]];
  }

  double edge_length(int e) const {
    return (nodes[edges[e].node[1]] - nodes[edges[e].node[0]]).norm();
  }
};

namespace detail {

struct PairHash {
  size_t operator()(const std::pair<int, int>& p) const {
    return std::hash<int64_t>()((static_cast<int64_t>(p.first) << 32) ^ p.second);
  }
};

// detect nodes lying strictly inside another triangle's edge (hanging nodes)
inline void check_hanging_nodes(const Mesh& m) {
  if (m.nodes.empty()) return;
  Vec2 lo = m.nodes[0], hi = m.nodes[0];
  for (const Vec2& p : m.nodes) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double scale = std::max((hi - lo).norm(), 1e-300);
  const double geom_tol = 1e-12 * scale;

  // bucket nodes on a uniform grid sized to the mean edge length
  double mean_len = 0.0;
  for (int e = 0; e < m.num_edges(); ++e) mean_len += m.edge_length(e);
  mean_len /= std::max(m.num_edges(), 1);
  const double cell = std::max(mean_len, 1e-12 * scale);
  std::unordered_map<std::pair<int, int>, std::vector<int>, PairHash> grid;
  auto cell_of = [&](const Vec2& p) {
    return std::make_pair(static_cast<int>(std::floor((p.x() - lo.x()) / cell)),
                          static_cast<int>(std::floor((p.y() - lo.y()) / cell)));
  };
  for (int v = 0; v < m.num_nodes(); ++v) grid[cell_of(m.nodes[v])].push_back(v);

  for (int e = 0; e < m.num_edges(); ++e) {
    const int a = m.edges[e].node[0], b = m.edges[e].node[1];
    const Vec2 pa = m.nodes[a], pb = m.nodes[b];
    const Vec2 d = pb - pa;
    const double len2 = d.squaredNorm();
    if (len2 <= geom_tol * geom_tol) continue;
    const Vec2 emin = (pa.cwiseMin(pb).array() - geom_tol).matrix();
    const Vec2 emax = (pa.cwiseMax(pb).array() + geom_tol).matrix();
    const auto c0 = cell_of(emin), c1 = cell_of(emax);
    for (int ci = c0.first; ci <= c1.first; ++ci) {
      for (int cj = c0.second; cj <= c1.second; ++cj) {
        auto it = grid.find({ci, cj});
        if (it == grid.end()) continue;
        for (int v : it->second) {
          if (v == a || v == b) continue;
          const Vec2 p = m.nodes[v];
          const double t = (p - pa).dot(d) / len2;
          if (t < 1e-9 || t > 1.0 - 1e-9) continue;
          const double dist = std::abs(cross2(d, p - pa)) / std::sqrt(len2);
          if (dist <= geom_tol)
            throw NonConforming("node " + std::to_string(v) +
                                " lies in the interior of edge (" + std::to_string(a) +
                                "," + std::to_string(b) + ")");
        }
      }
    }
  }
}

}  // namespace detail

// Build a mesh from raw node / triangle arrays. Normalizes triangle
// orientation to CCW, derives the edge topology, rejects degenerate triangles,
// hanging nodes and edges shared by more than two triangles. A mesh whose
// Euler characteristic differs from a simply connected disk is flagged with a
// warning, not rejected.
inline Mesh build_mesh(std::vector<Vec2> nodes, std::vector<std::array<int, 3>> tris,
                       std::vector<int> regions = {},
                       std::vector<std::array<int, 3>> boundary_lines = {}) {
  Mesh m;
  m.nodes = std::move(nodes);
  m.tri_nodes = std::move(tris);
  const int nv = m.num_nodes(), nt = m.num_triangles();

  if (regions.empty()) regions.assign(nt, 0);
  if (static_cast<int>(regions.size()) != nt)
    throw IndexOutOfRange("region array size does not match triangle count");
  m.tri_region = std::move(regions);

  for (int t = 0; t < nt; ++t) {
    for (int i = 0; i < 3; ++i) {
      const int v = m.tri_nodes[t][i];
      if (v < 0 || v >= nv)
        throw IndexOutOfRange("triangle " + std::to_string(t) +
                              " references node " + std::to_string(v));
    }
    const Vec2 e01 = m.vertex(t, 1) - m.vertex(t, 0);
    const Vec2 e02 = m.vertex(t, 2) - m.vertex(t, 0);
    const Vec2 e12 = m.vertex(t, 2) - m.vertex(t, 1);
    const double area2 = cross2(e01, e02);
    const double lmax2 =
        std::max({e01.squaredNorm(), e02.squaredNorm(), e12.squaredNorm()});
    if (std::abs(area2) <= 1e-14 * lmax2)
      throw DegenerateTriangle("triangle " + std::to_string(t) + " has near-zero area");
    if (area2 < 0.0) std::swap(m.tri_nodes[t][1], m.tri_nodes[t][2]);
  }

  std::unordered_map<std::pair<int, int>, int, detail::PairHash> edge_ids;
  m.tri_edges.resize(nt);
  for (int t = 0; t < nt; ++t) {
    for (int le = 0; le < 3; ++le) {
      const auto lv = Mesh::local_edge_vertices(le);
      int a = m.tri_nodes[t][lv[0]], b = m.tri_nodes[t][lv[1]];
      if (a > b) std::swap(a, b);
      auto [it, inserted] = edge_ids.try_emplace({a, b}, m.num_edges());
      if (inserted) m.edges.push_back(Edge{{a, b}, {t, -1}});
      else {
        Edge& e = m.edges[it->second];
        if (e.tri[1] >= 0)
          throw NonConforming("edge (" + std::to_string(a) + "," + std::to_string(b) +
                              ") is shared by more than two triangles");
        e.tri[1] = t;
      }
      m.tri_edges[t][le] = it->second;
    }
  }

  m.edge_marker.assign(m.num_edges(), 0);
  for (const auto& bl : boundary_lines) {
    int a = bl[0], b = bl[1];
    if (a < 0 || a >= nv || b < 0 || b >= nv)
      throw IndexOutOfRange("boundary line references an unknown node");
    if (a > b) std::swap(a, b);
    auto it = edge_ids.find({a, b});
    if (it == edge_ids.end())
      throw NonConforming("boundary line (" + std::to_string(a) + "," +
                          std::to_string(b) + ") is not an edge of any triangle");
    m.edge_marker[it->second] = bl[2];
  }

  m.node_on_boundary.assign(nv, 0);
  for (const Edge& e : m.edges) {
    if (e.on_boundary()) {
      m.node_on_boundary[e.node[0]] = 1;
      m.node_on_boundary[e.node[1]] = 1;
    }
  }

  detail::check_hanging_nodes(m);

  const int euler = nv - m.num_edges() + nt;
  m.simply_connected = (euler == 1);
  if (!m.simply_connected)
    std::cerr << "warning: mesh is not simply connected (V - E + T = " << euler
              << ")\n";
  return m;
}

// Uniform red refinement: every triangle is split into four by its edge
// midpoints. Children of triangle t occupy slots 4t .. 4t+3; boundary markers
// are inherited by the two child edges of each marked edge.
inline Mesh refine_uniform(const Mesh& m) {
  std::vector<Vec2> nodes = m.nodes;
  nodes.reserve(m.num_nodes() + m.num_edges());
  for (const Edge& e : m.edges)
    nodes.push_back(0.5 * (m.nodes[e.node[0]] + m.nodes[e.node[1]]));
  auto mid = [&](int e) { return m.num_nodes() + e; };

  std::vector<std::array<int, 3>> tris;
  std::vector<int> regions;
  tris.reserve(4 * m.num_triangles());
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& v = m.tri_nodes[t];
    const auto& e = m.tri_edges[t];
    tris.push_back({v[0], mid(e[2]), mid(e[1])});
    tris.push_back({mid(e[2]), v[1], mid(e[0])});
    tris.push_back({mid(e[1]), mid(e[0]), v[2]});
    tris.push_back({mid(e[0]), mid(e[1]), mid(e[2])});
    for (int c = 0; c < 4; ++c) regions.push_back(m.tri_region[t]);
  }

  std::vector<std::array<int, 3>> blines;
  for (int e = 0; e < m.num_edges(); ++e) {
    if (m.edge_marker[e] == 0) continue;
    blines.push_back({m.edges[e].node[0], mid(e), m.edge_marker[e]});
    blines.push_back({mid(e), m.edges[e].node[1], m.edge_marker[e]});
  }
  return build_mesh(std::move(nodes), std::move(tris), std::move(regions), blines);
}

inline MeshQuality mesh_quality(const Mesh& m) {
  MeshQuality q;
  q.min_angle_deg = 180.0;
  q.min_area = std::numeric_limits<double>::max();
  for (int t = 0; t < m.num_triangles(); ++t) {
    const Vec2 p0 = m.vertex(t, 0), p1 = m.vertex(t, 1), p2 = m.vertex(t, 2);
    const double l0 = (p2 - p1).norm(), l1 = (p0 - p2).norm(), l2 = (p1 - p0).norm();
    const double area = m.area(t);
    const double diam = std::max({l0, l1, l2});
    const double inradius = 2.0 * area / (l0 + l1 + l2);
    q.max_shape_ratio = std::max(q.max_shape_ratio, diam / inradius);
    q.min_area = std::min(q.min_area, area);
    q.max_diameter = std::max(q.max_diameter, diam);
    const Vec2 d01 = p1 - p0, d02 = p2 - p0, d12 = p2 - p1;
    const double a0 = std::atan2(std::abs(cross2(d01, d02)), d01.dot(d02));
    const double a1 = std::atan2(std::abs(cross2(-d01, d12)), (-d01).dot(d12));
    const double a2 = M_PI - a0 - a1;
    q.min_angle_deg = std::min({q.min_angle_deg, a0 * 180.0 / M_PI,
                                a1 * 180.0 / M_PI, a2 * 180.0 / M_PI});
  }
  return q;
}

// n-by-n structured mesh of the unit square, each cell split along the
// diagonal toward the upper right. Region tags are assigned from the element
// centroid via `region_of` (all zero if omitted).
inline Mesh structured_square_mesh(int n, const std::function<int(const Vec2&)>& region_of = {}) {
  if (n < 1) throw IndexOutOfRange("structured mesh requires n >= 1");
  std::vector<Vec2> nodes;
  nodes.reserve((n + 1) * (n + 1));
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      nodes.push_back(Vec2(static_cast<double>(i) / n, static_cast<double>(j) / n));
  auto id = [n](int i, int j) { return j * (n + 1) + i; };

  std::vector<std::array<int, 3>> tris;
  tris.reserve(2 * n * n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
      tris.push_back({a, b, c});
      tris.push_back({a, c, d});
    }
  }
  Mesh m = build_mesh(std::move(nodes), std::move(tris));
  if (region_of)
    for (int t = 0; t < m.num_triangles(); ++t) m.tri_region[t] = region_of(m.centroid(t));
  return m;
}

}  // namespace mqs
