#include <catch2/catch_amalgamated.hpp>
#include <fstream>
#include <mqs/io.hpp>
#include <sstream>

using namespace mqs;
using Catch::Matchers::ContainsSubstring;

namespace {

std::string fixture(const std::string& name) {
  return std::string(MQS_SOURCE_DIR) + "/tests/fixtures/" + name;
}

Mesh load_fixture(const std::string& name) { return read_mesh_file(fixture(name)); }

}  // namespace

TEST_CASE("gmsh reader consumes the reference square", "[io]") {
  const Mesh m = load_fixture("square.msh");
  REQUIRE(m.num_nodes() == 5);
  REQUIRE(m.num_triangles() == 4);
  REQUIRE(m.num_edges() == 8);
  REQUIRE(m.num_boundary_edges() == 4);
  for (int t = 0; t < 4; ++t) REQUIRE(m.tri_region[t] == 2);
  // the four line elements mark the outer edges with tag 1
  int marked = 0;
  for (int e = 0; e < m.num_edges(); ++e)
    if (m.edge_marker[e] != 0) {
      REQUIRE(m.edge_marker[e] == 1);
      REQUIRE(m.edges[e].on_boundary());
      ++marked;
    }
  REQUIRE(marked == 4);
  // ids 10..50 were remapped in order of appearance
  REQUIRE(m.nodes[4] == Vec2(0.5, 0.5));
}

TEST_CASE("gmsh reader keeps per-triangle regions", "[io]") {
  const Mesh m = load_fixture("two_region.msh");
  REQUIRE(m.num_triangles() == 4);
  REQUIRE(m.tri_region[0] == 1);
  REQUIRE(m.tri_region[1] == 1);
  REQUIRE(m.tri_region[2] == 2);
  REQUIRE(m.tri_region[3] == 2);
}

TEST_CASE("gmsh reader locates every defect it rejects", "[io]") {
  REQUIRE_THROWS_MATCHES(load_fixture("bad_version.msh"), UnsupportedVersion,
                         Catch::Matchers::MessageMatches(ContainsSubstring("line 2") &&
                                                         ContainsSubstring("4.1")));
  REQUIRE_THROWS_MATCHES(load_fixture("truncated_nodes.msh"), MalformedSection,
                         Catch::Matchers::MessageMatches(ContainsSubstring("line 9")));
  REQUIRE_THROWS_MATCHES(load_fixture("bad_token.msh"), MalformedSection,
                         Catch::Matchers::MessageMatches(ContainsSubstring("line 7")));
  REQUIRE_THROWS_MATCHES(load_fixture("nonplanar.msh"), NonPlanar,
                         Catch::Matchers::MessageMatches(ContainsSubstring("line 8")));
  REQUIRE_THROWS_MATCHES(load_fixture("quad.msh"), MalformedSection,
                         Catch::Matchers::MessageMatches(ContainsSubstring("line 13") &&
                                                         ContainsSubstring("type 3")));
  REQUIRE_THROWS_MATCHES(
      load_fixture("unknown_node.msh"), MalformedSection,
      Catch::Matchers::MessageMatches(ContainsSubstring("unknown node id 99")));
  REQUIRE_THROWS_MATCHES(load_fixture("unclosed.msh"), MalformedSection,
                         Catch::Matchers::MessageMatches(ContainsSubstring("never closed")));
  // syntactically fine, geometrically broken: the mesh validator takes over
  REQUIRE_THROWS_AS(load_fixture("hanging.msh"), NonConforming);
  REQUIRE_THROWS_AS(read_mesh_file("/nonexistent/nowhere.msh"), Error);
}

TEST_CASE("native mesh format round-trips exactly", "[io]") {
  const std::vector<Vec2> nodes{{0, 0}, {1.25, 0}, {1, 1.0 / 3.0}, {0, 1}};
  const std::vector<std::array<int, 3>> tris{{0, 1, 2}, {0, 2, 3}};
  const Mesh m =
      build_mesh(nodes, tris, {4, 7}, {{0, 1, 2}, {1, 2, 2}, {2, 3, 5}, {3, 0, 5}});
  std::ostringstream os;
  write_native_mesh(os, m);
  std::istringstream is(os.str());
  const Mesh r = read_native_mesh(is);
  REQUIRE(r.num_nodes() == m.num_nodes());
  REQUIRE(r.num_triangles() == m.num_triangles());
  for (int v = 0; v < m.num_nodes(); ++v) REQUIRE(r.nodes[v] == m.nodes[v]);
  for (int t = 0; t < m.num_triangles(); ++t) {
    REQUIRE(r.tri_nodes[t] == m.tri_nodes[t]);
    REQUIRE(r.tri_region[t] == m.tri_region[t]);
  }
  REQUIRE(r.edge_marker == m.edge_marker);

  SECTION("and rejects located defects") {
    std::istringstream bad1("2 0 1\n0 0\n1 0\n");
    REQUIRE_THROWS_MATCHES(read_native_mesh(bad1), MalformedSection,
                           Catch::Matchers::MessageMatches(ContainsSubstring("line 1")));
    std::istringstream bad2("3 0 1\n0 0\n1 0\n0 1\n0 1 5 0\n");
    REQUIRE_THROWS_MATCHES(
        read_native_mesh(bad2), MalformedSection,
        Catch::Matchers::MessageMatches(ContainsSubstring("out of range")));
    std::istringstream bad3("3 0 1\n0 0\n1 0\n");
    REQUIRE_THROWS_MATCHES(
        read_native_mesh(bad3), MalformedSection,
        Catch::Matchers::MessageMatches(ContainsSubstring("unexpected end")));
  }
}

TEST_CASE("vtk output is the documented golden file", "[io]") {
  const Mesh m = build_mesh({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {{0, 1, 2}, {0, 2, 3}});
  VectorXd mag(2);
  mag << 1.5, 2.5;
  MatrixXd B(2, 2);
  B << 1, -1, 0.5, 0;
  std::ostringstream os;
  write_vtk_legacy(os, m, {{"magnitude", mag}}, {{"B", B}});
  const std::string expected =
      "# vtk DataFile Version 3.0\n"
      "fields\n"
      "ASCII\n"
      "DATASET UNSTRUCTURED_GRID\n"
      "POINTS 4 double\n"
      "0 0 0\n"
      "1 0 0\n"
      "1 1 0\n"
      "0 1 0\n"
      "CELLS 2 8\n"
      "3 0 1 2\n"
      "3 0 2 3\n"
      "CELL_TYPES 2\n"
      "5\n"
      "5\n"
      "CELL_DATA 2\n"
      "SCALARS magnitude double 1\n"
      "LOOKUP_TABLE default\n"
      "1.5\n"
      "2.5\n"
      "VECTORS B double\n"
      "1 -1 0\n"
      "0.5 0 0\n";
  REQUIRE(os.str() == expected);

  std::ostringstream again;
  write_vtk_legacy(again, m, {{"magnitude", mag}}, {{"B", B}});
  REQUIRE(again.str() == os.str());  // byte-stable

  REQUIRE_THROWS_AS(write_vtk_legacy(os, m, {{"short", VectorXd::Zero(1)}}, {}),
                    FieldSizeMismatch);
  REQUIRE_THROWS_AS(write_vtk_legacy(os, m, {}, {{"bad", MatrixXd::Zero(2, 3)}}),
                    FieldSizeMismatch);
}

TEST_CASE("bh tables accept headers and comments, reject junk", "[io]") {
  std::istringstream ok("b,h\n# soft iron\n0,0\n0.5, 210\n1.0\t480\n");
  const auto [b, h] = read_bh_csv(ok);
  REQUIRE(b == std::vector<double>{0.0, 0.5, 1.0});
  REQUIRE(h == std::vector<double>{0.0, 210.0, 480.0});

  std::istringstream bad("b,h\n0,0\n0.5,oops\n");
  REQUIRE_THROWS_MATCHES(read_bh_csv(bad), MalformedSection,
                         Catch::Matchers::MessageMatches(ContainsSubstring("line 3")));
  std::istringstream extra("0,0\n0.5,210,99\n");
  REQUIRE_THROWS_MATCHES(read_bh_csv(extra), MalformedSection,
                         Catch::Matchers::MessageMatches(ContainsSubstring("trailing")));
  std::istringstream tiny("0,0\n");
  REQUIRE_THROWS_AS(read_bh_csv(tiny), MalformedSection);
}

TEST_CASE("materials json builds and certifies the full map", "[io]") {
  const MaterialMap mm = load_materials_file(fixture("materials_sample.json"));
  REQUIRE(mm.laws.size() == 4);
  REQUIRE(std::holds_alternative<LinearLaw>(mm.law_for(1)));
  REQUIRE(std::holds_alternative<IsotropicSplineLaw>(mm.law_for(2)));
  REQUIRE(std::holds_alternative<MagnetLaw>(mm.law_for(3)));
  REQUIRE(std::holds_alternative<IsotropicSplineLaw>(mm.law_for(4)));
  REQUIRE(mm.certified);
  REQUIRE(mm.certificates.size() == 4);
  REQUIRE(mm.certificates.at(1).alpha == Catch::Approx(1.0));
  REQUIRE(mm.sigma_for(1) == 2.0);
  REQUIRE(mm.sigma_for(4) == 0.0);
  REQUIRE(mm.source(1, Vec2(0, 0)) == 100.0);
  REQUIRE(mm.source(2, Vec2(0, 0)) == 0.0);
  // the csv-backed law reproduces its table within the duality tolerance
  const auto& law = std::get<IsotropicSplineLaw>(mm.law_for(4));
  const double b = 1.2, h_expect = 400 * b + 50 * std::pow(b, 7);
  REQUIRE(law.fprime().value(b) == Catch::Approx(h_expect).epsilon(1e-3));
}

TEST_CASE("materials json rejects malformed descriptions", "[io]") {
  auto load = [](const std::string& text) {
    std::istringstream is(text);
    return load_materials_json(is);
  };
  REQUIRE_THROWS_AS(load("{"), MalformedSection);
  REQUIRE_THROWS_AS(load("{}"), MalformedSection);
  REQUIRE_THROWS_AS(load(R"({"regions": {}})"), MalformedSection);
  REQUIRE_THROWS_AS(load(R"({"regions": {"iron": {"law": {"type": "linear", "mu": 1}}}})"),
                    MalformedSection);
  REQUIRE_THROWS_AS(load(R"({"regions": {"0": {"law": {"type": "weird"}}}})"),
                    MalformedSection);
  REQUIRE_THROWS_AS(load(R"({"regions": {"0": {"law": {"type": "linear"}}}})"),
                    MalformedSection);
  REQUIRE_THROWS_AS(
      load(R"({"regions": {"0": {"law": {"type": "magnet", "mu": 1, "m": [1, 2, 3]}}}})"),
      MalformedSection);
  REQUIRE_THROWS_AS(load(R"({"regions": {"0": {"law": {"type": "linear", "mu": -2}}}})"),
                    InvalidParams);
  REQUIRE_THROWS_AS(
      load(R"({"regions": {"0": {"law": {"type": "bh_csv", "path": "/missing.csv"}}}})"),
      Error);
}

TEST_CASE("solver reports format deterministically", "[io]") {
  SolveReport rep;
  rep.converged = true;
  rep.status = NewtonStatus::Converged;
  rep.iterations = 2;
  rep.reference_norm = 8.0;
  rep.final_norm = 1e-10;
  rep.ndofs = 33;
  rep.nnz = 130;
  rep.linear_seconds = 0.5;
  rep.total_seconds = 0.75;
  rep.trace = {{8.0, 0.0, 0.0}, {0.5, 1.0, 0.25}, {1e-10, 1.0, 0.25}};
  const std::string expected =
      "status: converged after 2 iteration(s)\n"
      "reference residual: 8\n"
      "final residual: 1e-10\n"
      "condensed dofs: 33, nonzeros: 130\n"
      "iter,residual,step\n"
      "0,8,0\n"
      "1,0.5,1\n"
      "2,1e-10,1\n";
  REQUIRE(format_report(rep, false) == expected);
  REQUIRE(format_report(rep, false) == format_report(rep, false));
  REQUIRE_THAT(format_report(rep, true), ContainsSubstring("seconds"));
}

TEST_CASE("csv writer enforces rectangular tables", "[io]") {
  std::ostringstream os;
  write_csv(os, {"level", "h", "err"}, {{"0", "0.5", "1e-1"}, {"1", "0.25", "2.5e-2"}});
  REQUIRE(os.str() == "level,h,err\n0,0.5,1e-1\n1,0.25,2.5e-2\n");
  REQUIRE_THROWS_AS(write_csv(os, {"a", "b"}, {{"1"}}), FieldSizeMismatch);
}
