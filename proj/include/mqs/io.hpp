#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "material.hpp"
#include "mesh.hpp"
#include "solver.hpp"

namespace mqs {

namespace detail {

// shortest-roundtrip decimal formatting, stable across runs and platforms
inline std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct LineReader {
  std::istream& in;
  int lineno = 0;

  bool next(std::string& line) {
    if (!std::getline(in, line)) return false;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }

  std::string need(const std::string& what) {
    std::string line;
    if (!next(line))
      throw MalformedSection("line " + std::to_string(lineno + 1) +
                             ": unexpected end of file, expected " + what);
    return line;
  }
};

inline std::vector<double> parse_numbers(const std::string& line, int lineno,
                                         size_t at_least) {
  std::istringstream is(line);
  std::vector<double> v;
  double d;
  while (is >> d) v.push_back(d);
  if (!is.eof())
    throw MalformedSection("line " + std::to_string(lineno) + ": invalid token in '" +
                           line + "'");
  if (v.size() < at_least)
    throw MalformedSection("line " + std::to_string(lineno) + ": expected at least " +
                           std::to_string(at_least) + " numbers, got " +
                           std::to_string(v.size()));
  return v;
}

inline long long as_index(double v, int lineno) {
  if (std::floor(v) != v)
    throw MalformedSection("line " + std::to_string(lineno) + ": expected an integer, got " +
                           g17(v));
  return static_cast<long long>(v);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// gmsh MSH 2.2 ASCII reader. Triangles (type 2) become elements with their
// first tag as region, lines (type 1) become boundary markers, points
// (type 15) are ignored; anything else is refused. Unknown sections are
// skipped. All diagnostics carry the offending line number.
// ---------------------------------------------------------------------------

inline Mesh read_gmsh_v2(std::istream& in) {
  detail::LineReader lr{in};
  std::string line;
  std::map<long long, int> node_index;
  std::vector<Vec2> nodes;
  std::vector<std::array<int, 3>> tris;
  std::vector<int> regions;
  std::vector<std::array<int, 3>> blines;
  bool saw_format = false, saw_nodes = false, saw_elements = false;

  auto lookup = [&](double idv, int lineno) {
    const long long id = detail::as_index(idv, lineno);
    const auto it = node_index.find(id);
    if (it == node_index.end())
      throw MalformedSection("line " + std::to_string(lineno) +
                             ": element references unknown node id " + std::to_string(id));
    return it->second;
  };

  while (lr.next(line)) {
    if (line.empty()) continue;
    if (line[0] != '$')
      throw MalformedSection("line " + std::to_string(lr.lineno) +
                             ": expected a section marker, got '" + line + "'");
    const std::string section = line.substr(1);

    if (section == "MeshFormat") {
      const int at = lr.lineno + 1;
      const std::string raw = lr.need("version line");
      const auto v = detail::parse_numbers(raw, at, 3);
      if (v[0] < 2.0 || v[0] >= 3.0) {
        std::istringstream ts(raw);
        std::string tok;
        ts >> tok;  // echo the version as written, not its parsed double
        throw UnsupportedVersion("line " + std::to_string(at) + ": MSH version " + tok +
                                 "; only 2.x is supported");
      }
      if (v[1] != 0.0)
        throw UnsupportedVersion("line " + std::to_string(at) +
                                 ": binary MSH files are not supported");
      if (lr.need("$EndMeshFormat") != "$EndMeshFormat")
        throw MalformedSection("line " + std::to_string(lr.lineno) +
                               ": expected $EndMeshFormat");
      saw_format = true;
    } else if (section == "Nodes") {
      const int at = lr.lineno + 1;
      const auto cnt = detail::parse_numbers(lr.need("node count"), at, 1);
      const long long n = detail::as_index(cnt[0], at);
      for (long long i = 0; i < n; ++i) {
        const int ln = lr.lineno + 1;
        const auto v = detail::parse_numbers(lr.need("a node line"), ln, 4);
        const long long id = detail::as_index(v[0], ln);
        if (!node_index.emplace(id, static_cast<int>(nodes.size())).second)
          throw MalformedSection("line " + std::to_string(ln) + ": duplicate node id " +
                                 std::to_string(id));
        if (std::abs(v[3]) > 1e-12 * (1.0 + std::abs(v[1]) + std::abs(v[2])))
          throw NonPlanar("line " + std::to_string(ln) + ": node " + std::to_string(id) +
                          " has z = " + detail::g17(v[3]) + "; the mesh must be planar");
        nodes.emplace_back(v[1], v[2]);
      }
      if (lr.need("$EndNodes") != "$EndNodes")
        throw MalformedSection("line " + std::to_string(lr.lineno) + ": expected $EndNodes");
      saw_nodes = true;
    } else if (section == "Elements") {
      const int at = lr.lineno + 1;
      const auto cnt = detail::parse_numbers(lr.need("element count"), at, 1);
      const long long n = detail::as_index(cnt[0], at);
      for (long long i = 0; i < n; ++i) {
        const int ln = lr.lineno + 1;
        const auto v = detail::parse_numbers(lr.need("an element line"), ln, 3);
        const long long type = detail::as_index(v[1], ln);
        const long long ntags = detail::as_index(v[2], ln);
        if (ntags < 0 || v.size() < static_cast<size_t>(3 + ntags))
          throw MalformedSection("line " + std::to_string(ln) + ": truncated tag list");
        const size_t base = 3 + static_cast<size_t>(ntags);
        const int tag =
            ntags > 0 ? static_cast<int>(detail::as_index(v[3], ln)) : 0;
        const size_t need = (type == 2) ? 3 : (type == 1) ? 2 : (type == 15) ? 1 : 0;
        if (need == 0)
          throw MalformedSection("line " + std::to_string(ln) + ": element type " +
                                 std::to_string(type) +
                                 " is not supported (triangles, lines, points only)");
        if (v.size() != base + need)
          throw MalformedSection("line " + std::to_string(ln) + ": element of type " +
                                 std::to_string(type) + " needs " + std::to_string(need) +
                                 " nodes");
        if (type == 2) {
          tris.push_back({lookup(v[base], ln), lookup(v[base + 1], ln),
                          lookup(v[base + 2], ln)});
          regions.push_back(tag);
        } else if (type == 1) {
          blines.push_back({lookup(v[base], ln), lookup(v[base + 1], ln), tag});
        }
      }
      if (lr.need("$EndElements") != "$EndElements")
        throw MalformedSection("line " + std::to_string(lr.lineno) +
                               ": expected $EndElements");
      saw_elements = true;
    } else {
      const std::string closer = "$End" + section;
      while (true) {
        if (!lr.next(line))
          throw MalformedSection("section $" + section + " is never closed by " + closer);
        if (line == closer) break;
      }
    }
  }

  if (!saw_format) throw MalformedSection("missing $MeshFormat section");
  if (!saw_nodes || nodes.empty()) throw MalformedSection("missing or empty $Nodes section");
  if (!saw_elements || tris.empty())
    throw MalformedSection("missing $Elements section or no triangles in it");
  return build_mesh(std::move(nodes), std::move(tris), std::move(regions),
                    std::move(blines));
}

// ---------------------------------------------------------------------------
// Native mesh text format:
//   <nodes> <marked-edges> <triangles>
//   x y                per node
//   n0 n1 marker       per marked boundary edge
//   a b c region       per triangle
// ---------------------------------------------------------------------------

inline Mesh read_native_mesh(std::istream& in) {
  detail::LineReader lr{in};
  const int at = lr.lineno + 1;
  const auto head = detail::parse_numbers(lr.need("the count line"), at, 3);
  const long long nv = detail::as_index(head[0], at);
  const long long nb = detail::as_index(head[1], at);
  const long long nt = detail::as_index(head[2], at);
  if (nv < 3 || nb < 0 || nt < 1)
    throw MalformedSection("line " + std::to_string(at) + ": implausible counts");

  std::vector<Vec2> nodes;
  std::vector<std::array<int, 3>> tris, blines;
  std::vector<int> regions;
  auto idx = [&](double v, int ln) {
    const long long i = detail::as_index(v, ln);
    if (i < 0 || i >= nv)
      throw MalformedSection("line " + std::to_string(ln) + ": node index " +
                             std::to_string(i) + " out of range");
    return static_cast<int>(i);
  };
  for (long long i = 0; i < nv; ++i) {
    const int ln = lr.lineno + 1;
    const auto v = detail::parse_numbers(lr.need("a node line"), ln, 2);
    nodes.emplace_back(v[0], v[1]);
  }
  for (long long i = 0; i < nb; ++i) {
    const int ln = lr.lineno + 1;
    const auto v = detail::parse_numbers(lr.need("a boundary edge line"), ln, 3);
    blines.push_back({idx(v[0], ln), idx(v[1], ln),
                      static_cast<int>(detail::as_index(v[2], ln))});
  }
  for (long long i = 0; i < nt; ++i) {
    const int ln = lr.lineno + 1;
    const auto v = detail::parse_numbers(lr.need("a triangle line"), ln, 4);
    tris.push_back({idx(v[0], ln), idx(v[1], ln), idx(v[2], ln)});
    regions.push_back(static_cast<int>(detail::as_index(v[3], ln)));
  }
  return build_mesh(std::move(nodes), std::move(tris), std::move(regions),
                    std::move(blines));
}

inline void write_native_mesh(std::ostream& out, const Mesh& m) {
  int nb = 0;
  for (int e = 0; e < m.num_edges(); ++e)
    if (m.edge_marker[e] != 0) ++nb;
  out << m.num_nodes() << ' ' << nb << ' ' << m.num_triangles() << '\n';
  for (const Vec2& p : m.nodes)
    out << detail::g17(p.x()) << ' ' << detail::g17(p.y()) << '\n';
  for (int e = 0; e < m.num_edges(); ++e)
    if (m.edge_marker[e] != 0)
      out << m.edges[e].node[0] << ' ' << m.edges[e].node[1] << ' ' << m.edge_marker[e]
          << '\n';
  for (int t = 0; t < m.num_triangles(); ++t)
    out << m.tri_nodes[t][0] << ' ' << m.tri_nodes[t][1] << ' ' << m.tri_nodes[t][2] << ' '
        << m.tri_region[t] << '\n';
}

// dispatch by extension: .msh is gmsh, everything else the native format
inline Mesh read_mesh_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open mesh file: " + path);
  const bool gmsh = path.size() >= 4 && path.substr(path.size() - 4) == ".msh";
  return gmsh ? read_gmsh_v2(in) : read_native_mesh(in);
}

// ---------------------------------------------------------------------------
// Legacy ASCII VTK output with per-cell fields; output is byte-stable for
// identical inputs.
// ---------------------------------------------------------------------------

struct CellScalarField {
  std::string name;
  VectorXd values;  // one per triangle
};

struct CellVectorField {
  std::string name;
  MatrixXd values;  // num_triangles x 2
};

inline void write_vtk_legacy(std::ostream& out, const Mesh& m,
                             const std::vector<CellScalarField>& scalars,
                             const std::vector<CellVectorField>& vectors,
                             const std::string& title = "fields") {
  const int nt = m.num_triangles();
  for (const auto& f : scalars)
    if (f.values.size() != nt)
      throw FieldSizeMismatch("cell scalar '" + f.name + "' has " +
                              std::to_string(f.values.size()) + " values for " +
                              std::to_string(nt) + " cells");
  for (const auto& f : vectors)
    if (f.values.rows() != nt || f.values.cols() != 2)
      throw FieldSizeMismatch("cell vector '" + f.name + "' must be " +
                              std::to_string(nt) + " x 2");

  out << "# vtk DataFile Version 3.0\n" << title << "\nASCII\n";
  out << "DATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << m.num_nodes() << " double\n";
  for (const Vec2& p : m.nodes)
    out << detail::g17(p.x()) << ' ' << detail::g17(p.y()) << " 0\n";
  out << "CELLS " << nt << ' ' << 4 * nt << '\n';
  for (int t = 0; t < nt; ++t)
    out << "3 " << m.tri_nodes[t][0] << ' ' << m.tri_nodes[t][1] << ' '
        << m.tri_nodes[t][2] << '\n';
  out << "CELL_TYPES " << nt << '\n';
  for (int t = 0; t < nt; ++t) out << "5\n";
  if (scalars.empty() && vectors.empty()) return;
  out << "CELL_DATA " << nt << '\n';
  for (const auto& f : scalars) {
    out << "SCALARS " << f.name << " double 1\nLOOKUP_TABLE default\n";
    for (int t = 0; t < nt; ++t) out << detail::g17(f.values[t]) << '\n';
  }
  for (const auto& f : vectors) {
    out << "VECTORS " << f.name << " double\n";
    for (int t = 0; t < nt; ++t)
      out << detail::g17(f.values(t, 0)) << ' ' << detail::g17(f.values(t, 1)) << " 0\n";
  }
}

// ---------------------------------------------------------------------------
// B-H tables: two columns (b, h), comma or whitespace separated, an optional
// non-numeric header line, and '#' comments.
// ---------------------------------------------------------------------------

inline std::pair<std::vector<double>, std::vector<double>> read_bh_csv(std::istream& in) {
  detail::LineReader lr{in};
  std::vector<double> b, h;
  std::string line;
  bool first_content = true;
  while (lr.next(line)) {
    std::string t = line;
    for (char& c : t)
      if (c == ',' || c == ';' || c == '\t') c = ' ';
    std::istringstream is(t);
    std::string tok;
    if (!(is >> tok)) continue;           // blank line
    if (tok[0] == '#') continue;          // comment
    is.clear();
    is.str(t);
    double vb, vh;
    if (!(is >> vb >> vh)) {
      if (first_content) {                // a header line is allowed once
        first_content = false;
        continue;
      }
      throw MalformedSection("line " + std::to_string(lr.lineno) +
                             ": expected two numeric columns, got '" + line + "'");
    }
    std::string rest;
    if (is >> rest)
      throw MalformedSection("line " + std::to_string(lr.lineno) +
                             ": trailing content '" + rest + "'");
    first_content = false;
    b.push_back(vb);
    h.push_back(vh);
  }
  if (b.size() < 2) throw MalformedSection("B-H table needs at least two data rows");
  return {std::move(b), std::move(h)};
}

// ---------------------------------------------------------------------------
// Material description, JSON:
// {
//   "regions": {
//     "0": {"law": {"type": "linear", "mu": 1.0}, "sigma": 0.0, "j": 100.0},
//     "1": {"law": {"type": "magnet", "mu": 1.0, "m": [0, 800]}},
//     "2": {"law": {"type": "brauer_spline", "k1": 50, "k2": 1.3, "k3": 500,
//                    "b_max": 1.8, "knots": 1200}},
//     "3": {"law": {"type": "bh_csv", "path": "steel.csv"}}
//   },
//   "certify": {"h_max": 500.0, "samples": 200, "seed": 0}   // optional
// }
// ---------------------------------------------------------------------------

inline MaterialMap load_materials_json(std::istream& in, const std::string& base_dir = ".") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedSection(std::string("materials json: ") + e.what());
  }
  MaterialMap mm;
  try {
    if (!j.contains("regions") || !j["regions"].is_object())
      throw MalformedSection("materials json: missing top-level object 'regions'");
    for (const auto& [key, region] : j["regions"].items()) {
      int tag = 0;
      try {
        size_t pos = 0;
        tag = std::stoi(key, &pos);
        if (pos != key.size()) throw std::invalid_argument(key);
      } catch (const std::exception&) {
        throw MalformedSection("materials json: region key '" + key +
                               "' is not an integer tag");
      }
      const auto& law = region.at("law");
      const std::string type = law.at("type").get<std::string>();
      if (type == "linear") {
        const double mu = law.at("mu").get<double>();
        if (!(mu > 0.0)) throw InvalidParams("materials json: linear law needs mu > 0");
        mm.laws.emplace(tag, LinearLaw{mu});
      } else if (type == "magnet") {
        const double mu = law.at("mu").get<double>();
        if (!(mu > 0.0)) throw InvalidParams("materials json: magnet law needs mu > 0");
        const auto mv = law.at("m").get<std::vector<double>>();
        if (mv.size() != 2)
          throw MalformedSection("materials json: magnet 'm' must have two components");
        mm.laws.emplace(tag, MagnetLaw{mu, Vec2(mv[0], mv[1])});
      } else if (type == "brauer_spline") {
        BrauerParams p{law.at("k1").get<double>(), law.at("k2").get<double>(),
                       law.at("k3").get<double>()};
        const double b_max = law.at("b_max").get<double>();
        const int knots = law.value("knots", 800);
        if (!(b_max > 0.0) || knots < 8)
          throw InvalidParams("materials json: brauer_spline needs b_max > 0, knots >= 8");
        std::vector<double> grid(knots);
        for (int i = 0; i < knots; ++i) grid[i] = b_max * i / (knots - 1.0);
        mm.laws.emplace(tag, IsotropicSplineLaw::from_brauer(p, grid));
      } else if (type == "bh_csv") {
        const std::string rel = law.at("path").get<std::string>();
        const std::string path = rel.empty() || rel[0] == '/' ? rel : base_dir + "/" + rel;
        std::ifstream csv(path);
        if (!csv) throw Error("cannot open B-H table: " + path);
        auto [b, h] = read_bh_csv(csv);
        mm.laws.emplace(tag, IsotropicSplineLaw::from_bh_table(std::move(b), std::move(h)));
      } else {
        throw MalformedSection("materials json: unknown law type '" + type + "'");
      }
      if (region.contains("sigma")) mm.sigma[tag] = region.at("sigma").get<double>();
      if (region.contains("j")) mm.j_region[tag] = region.at("j").get<double>();
    }
    if (j.contains("certify")) {
      const auto& c = j.at("certify");
      mm.certify(c.at("h_max").get<double>(), c.value("samples", 200),
                 c.value("seed", 0u));
    }
  } catch (const nlohmann::json::exception& e) {
    throw MalformedSection(std::string("materials json: ") + e.what());
  }
  if (mm.laws.empty()) throw MalformedSection("materials json: no regions defined");
  return mm;
}

inline MaterialMap load_materials_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open materials file: " + path);
  const size_t slash = path.find_last_of('/');
  const std::string dir = (slash == std::string::npos) ? "." : path.substr(0, slash);
  return load_materials_json(in, dir);
}

// ---------------------------------------------------------------------------
// Tabular and report output
// ---------------------------------------------------------------------------

inline void write_csv(std::ostream& out, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  for (size_t i = 0; i < header.size(); ++i)
    out << header[i] << (i + 1 < header.size() ? "," : "\n");
  for (const auto& row : rows) {
    if (row.size() != header.size())
      throw FieldSizeMismatch("csv row has " + std::to_string(row.size()) +
                              " fields, header has " + std::to_string(header.size()));
    for (size_t i = 0; i < row.size(); ++i)
      out << row[i] << (i + 1 < row.size() ? "," : "\n");
  }
}

// `timings` adds wall-clock columns; disable them for byte-stable output
inline std::string format_report(const SolveReport& rep, bool timings) {
  std::ostringstream os;
  os << "status: " << to_string(rep.status) << " after " << rep.iterations
     << " iteration(s)\n";
  os << "reference residual: " << detail::g17(rep.reference_norm) << '\n';
  os << "final residual: " << detail::g17(rep.final_norm) << '\n';
  os << "condensed dofs: " << rep.ndofs << ", nonzeros: " << rep.nnz << '\n';
  if (timings)
    os << "linear solve seconds: " << detail::g17(rep.linear_seconds)
       << ", total seconds: " << detail::g17(rep.total_seconds) << '\n';
  os << "iter,residual,step" << (timings ? ",linear_seconds" : "") << '\n';
  for (size_t i = 0; i < rep.trace.size(); ++i) {
    os << i << ',' << detail::g17(rep.trace[i].residual) << ','
       << detail::g17(rep.trace[i].step);
    if (timings) os << ',' << detail::g17(rep.trace[i].linear_seconds);
    os << '\n';
  }
  return os.str();
}

}  // namespace mqs
