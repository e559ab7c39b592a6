#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "io.hpp"
#include "postprocess.hpp"
#include "solver.hpp"

namespace mqs {

// ---------------------------------------------------------------------------
// Refinement studies: solve a case on a hierarchy of uniformly refined
// meshes, tabulate the L2 flux error per level ("error / eoc / iter / time"
// layout), and compare the two formulations' system sizes and timings.
//
// Errors are measured against the closed form when the case has one, and
// against a discrete reference otherwise: the order-2 mixed solution on one
// extra refinement level, integrated on the reference mesh.
//
// Every level warm-starts from the previous level's lifted solution; on the
// coarsest level, nonlinear cases start from the solution of the tangent
// problem at zero field (saturating laws stall a cold Newton start).
// ---------------------------------------------------------------------------

struct StudyConfig {
  // built-in cases or a mesh/materials file pair
  std::string case_name = "manufactured";  // manufactured|checkerboard|checkerboard_iron|file
  std::string mesh_path;                   // case "file" only
  std::string materials_path;              // case "file" only

  std::string formulation = "mixed";  // primal | mixed | both
  int order = 1;                      // 1 or 2; mixed runs N_{order-1}, primal P_order
  int levels = 4;                     // number of study rows (level 0 .. levels-1)
  int base_n = 4;                     // level-0 structured resolution of built-in cases

  double mu = 1.0;     // manufactured case only
  double sigma = 0.0;  // conductivity of the built-in cases
  double source = std::numeric_limits<double>::quiet_NaN();  // built-in j override

  double tol = 1e-8;
  int max_iterations = 50;

  std::string out;   // CSV destination; empty writes to the caller's stream
  unsigned seed = 0; // certification sampling

  void validate() const {
    if (case_name != "manufactured" && case_name != "checkerboard" &&
        case_name != "checkerboard_iron" && case_name != "file")
      throw InvalidParams("study config: unknown case '" + case_name + "'");
    if (case_name == "file" && (mesh_path.empty() || materials_path.empty()))
      throw InvalidParams("study config: case 'file' needs mesh and materials paths");
    if (formulation != "primal" && formulation != "mixed" && formulation != "both")
      throw InvalidParams("study config: formulation must be primal, mixed, or both");
    if (order != 1 && order != 2) throw InvalidParams("study config: order must be 1 or 2");
    if (levels < 1 || levels > 12)
      throw InvalidParams("study config: levels must lie in [1, 12]");
    if (base_n < 1) throw InvalidParams("study config: base_n must be positive");
    // the checkerboard interfaces sit on x=1/2 and y=1/2; an odd grid would
    // cut material regions through elements on every level
    if (case_name.rfind("checkerboard", 0) == 0 && base_n % 2 != 0)
      throw InvalidParams("study config: checkerboard cases need an even base_n");
    if (!(mu > 0.0)) throw InvalidParams("study config: mu must be positive");
    if (sigma < 0.0) throw InvalidParams("study config: sigma must be nonnegative");
    if (!(tol > 0.0)) throw InvalidParams("study config: tol must be positive");
    if (max_iterations < 1)
      throw InvalidParams("study config: max_iterations must be positive");
  }
};

// plain "key = value" lines; '#' starts a comment; unknown keys are rejected
inline StudyConfig parse_study_config(std::istream& in) {
  StudyConfig cfg;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return (b == std::string::npos) ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw MalformedSection("study config line " + std::to_string(lineno) +
                             ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw MalformedSection("study config line " + std::to_string(lineno) +
                             ": empty key or value");
    auto num = [&](double lo, double hi) {
      try {
        size_t pos = 0;
        const double v = std::stod(val, &pos);
        if (pos != val.size()) throw std::invalid_argument("trail");
        if (!(v >= lo && v <= hi)) throw std::out_of_range("range");
        return v;
      } catch (const std::exception&) {
        throw MalformedSection("study config line " + std::to_string(lineno) +
                               ": bad value '" + val + "' for " + key);
      }
    };
    if (key == "case") cfg.case_name = val;
    else if (key == "mesh") cfg.mesh_path = val;
    else if (key == "materials") cfg.materials_path = val;
    else if (key == "formulation") cfg.formulation = val;
    else if (key == "order") cfg.order = static_cast<int>(num(1, 2));
    else if (key == "levels") cfg.levels = static_cast<int>(num(1, 12));
    else if (key == "base_n") cfg.base_n = static_cast<int>(num(1, 1024));
    else if (key == "mu") cfg.mu = num(1e-12, 1e12);
    else if (key == "sigma") cfg.sigma = num(0, 1e12);
    else if (key == "source") cfg.source = num(-1e12, 1e12);
    else if (key == "tol") cfg.tol = num(1e-15, 1);
    else if (key == "max_iterations") cfg.max_iterations = static_cast<int>(num(1, 1000));
    else if (key == "out") cfg.out = val;
    else if (key == "seed") cfg.seed = static_cast<unsigned>(num(0, 4294967295.0));
    else
      throw MalformedSection("study config line " + std::to_string(lineno) +
                             ": unknown key '" + key + "'");
  }
  return cfg;
}

inline StudyConfig load_study_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open study config: " + path);
  return parse_study_config(in);
}

// a runnable case: the level-0 mesh, certified materials, and (when the case
// has one) the closed-form flux
struct StudyCaseSetup {
  Mesh level0;
  MaterialMap materials;
  std::function<Vec2(const Vec2&)> exact_B;  // empty: use a discrete reference
};

namespace detail {

// largest spline certification radius that stays inside every fitted range
inline double certify_radius(const MaterialMap& mm, double fallback) {
  double r = fallback;
  for (const auto& [tag, law] : mm.laws)
    if (const auto* s = std::get_if<IsotropicSplineLaw>(&law))
      r = std::min(r, 0.9 * s->h_max());
  return r;
}

inline bool is_nonlinear(const MaterialMap& mm) {
  for (const auto& [tag, law] : mm.laws)
    if (std::holds_alternative<IsotropicSplineLaw>(law)) return true;
  return false;
}

// the tangent problem at zero field: spline laws replaced by their slope at
// the origin. Its solution is the coarsest level's initial guess; a cold
// Newton start on a saturating curve otherwise stalls in the line search.
inline MaterialMap tangent_materials(const MaterialMap& mm) {
  MaterialMap t = mm;
  for (auto& [tag, law] : t.laws)
    if (const auto* s = std::get_if<IsotropicSplineLaw>(&law))
      law = LinearLaw{s->gprime().derivative(0.0)};
  t.certify(1.0, 50, 0);
  return t;
}

inline int checkerboard_region(const Vec2& c) {
  return ((c.x() < 0.5) != (c.y() < 0.5)) ? 2 : 1;
}

}  // namespace detail

inline StudyCaseSetup make_study_case(const StudyConfig& cfg) {
  cfg.validate();
  StudyCaseSetup s;
  if (cfg.case_name == "manufactured") {
    const ManufacturedCase c = manufactured_case_linear(cfg.mu, cfg.sigma);
    s.level0 = structured_square_mesh(cfg.base_n);
    s.materials.laws[0] = LinearLaw{cfg.mu};
    s.materials.sigma[0] = cfg.sigma;
    s.materials.j_fn = c.j;
    s.materials.certify(std::max(1.0, 1.5 * M_PI / cfg.mu), 200, cfg.seed);
    s.exact_B = c.B;
  } else if (cfg.case_name == "checkerboard") {
    // Kellogg-type pattern: permeability ratio 1000 across the diagonal
    // blocks, reentrant cross point at (1/2, 1/2)
    s.level0 = structured_square_mesh(cfg.base_n, detail::checkerboard_region);
    s.materials.laws[1] = LinearLaw{1000.0};
    s.materials.laws[2] = LinearLaw{1.0};
    s.materials.sigma[0] = cfg.sigma;
    s.materials.j_region[0] = std::isnan(cfg.source) ? 1.0 : cfg.source;
    s.materials.certify(10.0, 200, cfg.seed);
  } else if (cfg.case_name == "checkerboard_iron") {
    // same geometry with the permeable blocks given a saturating Brauer law:
    // nu(0) ~ 1e-3 against air's 1 keeps the ~1000 contrast at low field, and
    // the default source drives the iron flux into the knee of the curve
    s.level0 = structured_square_mesh(cfg.base_n, detail::checkerboard_region);
    std::vector<double> knots(801);
    for (size_t i = 0; i < knots.size(); ++i) knots[i] = 1.8 * double(i) / 800.0;
    s.materials.laws[1] = IsotropicSplineLaw::from_brauer({9e-5, 1.3, 1e-3}, knots);
    s.materials.laws[2] = LinearLaw{1.0};
    s.materials.sigma[0] = cfg.sigma;
    s.materials.j_region[0] = std::isnan(cfg.source) ? 0.02 : cfg.source;
    s.materials.certify(detail::certify_radius(s.materials, 1e4), 200, cfg.seed);
  } else {  // file
    s.level0 = read_mesh_file(cfg.mesh_path);
    s.materials = load_materials_file(cfg.materials_path);
    if (!s.materials.certified)
      s.materials.certify(detail::certify_radius(s.materials, 1e3), 200, cfg.seed);
  }
  return s;
}

// one study level: Table 1's columns plus the system size
struct StudyRow {
  int level = 0;
  double h = 0.0;
  int ndofs = 0;
  long long nnz = 0;
  double error = 0.0;
  double eoc = std::numeric_limits<double>::quiet_NaN();  // blank on level 0
  int iterations = 0;
  double seconds = 0.0;
};

struct StudyResult {
  std::string formulation;  // "primal" or "mixed"
  std::vector<StudyRow> rows;
  std::string failure;  // empty on success; rows hold the levels that completed
};

// a study aborted by a solver failure; carries every completed row
struct StudyFailure : Error {
  std::vector<StudyResult> partial;
  StudyFailure(const std::string& what, std::vector<StudyResult> p)
      : Error(what), partial(std::move(p)) {}
};

namespace detail {

inline double mesh_h(const Mesh& m) { return mesh_quality(m).max_diameter; }

// lift a coarse-level solution to the next level by canonical interpolation
// of its point evaluations
inline VectorXd lift_nedelec(const Mesh& coarse, const DofMap& cmap, const VectorXd& H,
                             const Mesh& fine, const DofMap& fmap) {
  const PointLocator loc(coarse);
  return interpolate_nedelec(fine, fmap, [&](const Vec2& x) -> Vec2 {
    const int t = loc.locate(x);
    if (t < 0) return Vec2::Zero();
    return eval_nedelec_field(coarse, cmap, H, t, loc.reference_coords(t, x));
  });
}

inline VectorXd lift_dg(const Mesh& coarse, const DofMap& cmap, const VectorXd& a,
                        const Mesh& fine, const DofMap& fmap, const QuadRule& rule) {
  const PointLocator loc(coarse);
  return project_dg(fine, fmap,
                    [&](const Vec2& x) -> double {
                      const int t = loc.locate(x);
                      if (t < 0) return 0.0;
                      return eval_dg_field(cmap, a, t, loc.reference_coords(t, x));
                    },
                    rule);
}

inline VectorXd lift_lagrange(const Mesh& coarse, const DofMap& cmap, const VectorXd& a,
                              const Mesh& fine, const DofMap& fmap) {
  const PointLocator loc(coarse);
  return interpolate_lagrange(fine, fmap, [&](const Vec2& x) -> double {
    const int t = loc.locate(x);
    if (t < 0) return 0.0;
    return eval_lagrange_field(cmap, a, t, loc.reference_coords(t, x));
  });
}

struct LevelOutcome {
  FluxField B;
  SolveReport report;
  double seconds = 0.0;
};

}  // namespace detail

// the discrete reference: order-2 mixed solve, one level past the study
inline FluxField reference_flux(const Mesh& rmesh, const MaterialMap& materials,
                                const NewtonOptions& opts) {
  const MixedSpaces sp = make_mixed_spaces(rmesh, 1);
  VectorXd H0, a0;
  if (detail::is_nonlinear(materials)) {
    const MixedSolution lin = solve_mixed(sp, detail::tangent_materials(materials), opts);
    H0 = lin.H;
    a0 = lin.a;
  }
  const MixedSolution sol = solve_mixed(sp, materials, opts, H0, a0);
  if (!sol.report.converged)
    throw Error(std::string("reference solve did not converge: ") +
                to_string(sol.report.status));
  return post_B(sp, materials, sol.H);
}

namespace detail {

// run one formulation over the prebuilt hierarchy, warm-starting each level
// from the previous level's interpolant; `reference` lazily provides the
// discrete reference flux for cases without a closed form
inline StudyResult run_levels(const std::string& form, const StudyConfig& cfg,
                              const StudyCaseSetup& setup, const std::vector<Mesh>& meshes,
                              const std::function<const FluxField&()>& reference) {
  NewtonOptions opts;
  opts.tolerance = cfg.tol;
  opts.max_iterations = cfg.max_iterations;

  StudyResult out;
  out.formulation = form;

  std::optional<DofMap> prevV, prevQ, prevU;
  VectorXd prevH, prevA;
  const Mesh* prev = nullptr;

  for (int l = 0; l < cfg.levels; ++l) {
    const Mesh& m = meshes[static_cast<size_t>(l)];
    StudyRow row;
    row.level = l;
    row.h = mesh_h(m);
    const auto t0 = std::chrono::steady_clock::now();
    LevelOutcome lo;
    try {
      if (form == "mixed") {
        const MixedSpaces sp = make_mixed_spaces(m, cfg.order - 1);
        VectorXd H0, a0;
        if (prev) {
          H0 = lift_nedelec(*prev, *prevV, prevH, m, sp.Vc);
          a0 = lift_dg(*prev, *prevQ, prevA, m, sp.Q, *sp.rule);
        } else if (is_nonlinear(setup.materials)) {
          const MixedSolution lin = solve_mixed(sp, tangent_materials(setup.materials), opts);
          H0 = lin.H;
          a0 = lin.a;
        }
        const MixedSolution sol = solve_mixed(sp, setup.materials, opts, H0, a0);
        lo.report = sol.report;
        lo.B = post_B(sp, setup.materials, sol.H);
        prevV = sp.Vc;
        prevQ = sp.Q;
        prevH = sol.H;
        prevA = sol.a;
      } else {
        const PrimalSpaces sp = make_primal_spaces(m, cfg.order);
        VectorXd a0;
        if (prev) {
          a0 = lift_lagrange(*prev, *prevU, prevA, m, sp.U);
        } else if (is_nonlinear(setup.materials)) {
          a0 = solve_primal(sp, tangent_materials(setup.materials), opts).a;
        }
        const PrimalSolution sol = solve_primal(sp, setup.materials, opts, a0);
        lo.report = sol.report;
        lo.B = post_B(sp, sol.a);
        prevU = sp.U;
        prevA = sol.a;
      }
      prev = &m;
      row.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      row.ndofs = lo.report.ndofs;
      row.nnz = lo.report.nnz;
      row.iterations = lo.report.iterations;
      if (!lo.report.converged) {
        out.failure = "level " + std::to_string(l) + " (" + form +
                      ") did not converge: " + to_string(lo.report.status);
        break;
      }
      row.error = setup.exact_B ? l2_error(lo.B, setup.exact_B) : l2_error(lo.B, reference());
    } catch (const Error& e) {
      out.failure = "level " + std::to_string(l) + " (" + form + "): " + e.what();
      break;
    }
    out.rows.push_back(row);
  }

  if (out.rows.size() >= 2) {
    std::vector<double> h, e;
    for (const StudyRow& r : out.rows) {
      h.push_back(r.h);
      e.push_back(r.error);
    }
    const std::vector<double> eoc = observed_orders(h, e);
    for (size_t i = 1; i < out.rows.size(); ++i) out.rows[i].eoc = eoc[i - 1];
  }
  return out;
}

}  // namespace detail

namespace detail {

// meshes for levels 0..levels-1, plus one finer reference level when the
// case has no closed form; the reference flux is computed on first use
struct StudyHierarchy {
  std::vector<Mesh> meshes;
  std::optional<FluxField> ref;
  std::function<const FluxField&()> ref_get;

  StudyHierarchy(const StudyConfig& cfg, const StudyCaseSetup& setup) {
    meshes.push_back(setup.level0);
    const bool discrete = !setup.exact_B;
    const int total = cfg.levels + (discrete ? 1 : 0);
    for (int l = 1; l < total; ++l) meshes.push_back(refine_uniform(meshes.back()));
    NewtonOptions opts;
    opts.tolerance = cfg.tol;
    opts.max_iterations = cfg.max_iterations;
    ref_get = [this, opts, &setup]() -> const FluxField& {
      if (!ref) ref = reference_flux(meshes.back(), setup.materials, opts);
      return *ref;
    };
  }
};

}  // namespace detail

inline std::vector<StudyResult> convergence_study(const StudyConfig& cfg) {
  cfg.validate();
  const StudyCaseSetup setup = make_study_case(cfg);
  detail::StudyHierarchy hier(cfg, setup);

  std::vector<StudyResult> results;
  const auto run = [&](const char* form) {
    results.push_back(detail::run_levels(form, cfg, setup, hier.meshes, hier.ref_get));
    if (!results.back().failure.empty())
      throw StudyFailure(results.back().failure, results);
  };
  if (cfg.formulation == "primal" || cfg.formulation == "both") run("primal");
  if (cfg.formulation == "mixed" || cfg.formulation == "both") run("mixed");
  return results;
}

inline void write_study_csv(std::ostream& out, const std::vector<StudyResult>& results,
                            bool timings) {
  std::vector<std::string> header{"formulation", "level", "h",    "ndofs",
                                  "nnz",         "error", "eoc",  "iter"};
  if (timings) header.push_back("seconds");
  std::vector<std::vector<std::string>> rows;
  for (const StudyResult& res : results) {
    for (const StudyRow& r : res.rows) {
      std::vector<std::string> row{res.formulation,
                                   std::to_string(r.level),
                                   detail::g17(r.h),
                                   std::to_string(r.ndofs),
                                   std::to_string(r.nnz),
                                   detail::g17(r.error),
                                   std::isnan(r.eoc) ? "" : detail::g17(r.eoc),
                                   std::to_string(r.iterations)};
      if (timings) row.push_back(detail::g17(r.seconds));
      rows.push_back(std::move(row));
    }
  }
  write_csv(out, header, rows);
}

// ---------------------------------------------------------------------------
// Formulation comparison: both formulations at orders 1 and 2 on the same
// hierarchy — system size after elimination, nonzeros, the linear-solve time
// of one Newton step, and the L2 flux error (Table 2 layout).
// ---------------------------------------------------------------------------

struct CompareRow {
  int order = 1;
  int level = 0;
  double h = 0.0;
  int primal_ndofs = 0;
  long long primal_nnz = 0;
  double primal_error = 0.0;
  double primal_step_seconds = 0.0;
  int mixed_ndofs = 0;
  long long mixed_nnz = 0;
  double mixed_error = 0.0;
  double mixed_step_seconds = 0.0;
  double ndofs_ratio = 0.0;  // mixed over primal
};

inline std::vector<CompareRow> compare_formulations(const StudyConfig& cfg) {
  cfg.validate();
  const StudyCaseSetup setup = make_study_case(cfg);
  detail::StudyHierarchy hier(cfg, setup);

  std::vector<CompareRow> rows;
  for (int order = 1; order <= 2; ++order) {
    StudyConfig sub = cfg;
    sub.order = order;
    sub.formulation = "both";
    const StudyResult primal =
        detail::run_levels("primal", sub, setup, hier.meshes, hier.ref_get);
    if (!primal.failure.empty()) throw Error(primal.failure);
    const StudyResult mixed =
        detail::run_levels("mixed", sub, setup, hier.meshes, hier.ref_get);
    if (!mixed.failure.empty()) throw Error(mixed.failure);
    for (int l = 0; l < cfg.levels; ++l) {
      const StudyRow& p = primal.rows[static_cast<size_t>(l)];
      const StudyRow& x = mixed.rows[static_cast<size_t>(l)];
      CompareRow row;
      row.order = order;
      row.level = l;
      row.h = p.h;
      row.primal_ndofs = p.ndofs;
      row.primal_nnz = p.nnz;
      row.primal_error = p.error;
      row.primal_step_seconds = p.seconds / std::max(1, p.iterations);
      row.mixed_ndofs = x.ndofs;
      row.mixed_nnz = x.nnz;
      row.mixed_error = x.error;
      row.mixed_step_seconds = x.seconds / std::max(1, x.iterations);
      row.ndofs_ratio = double(x.ndofs) / double(std::max(1, p.ndofs));
      rows.push_back(row);
    }
  }
  return rows;
}

inline void write_compare_csv(std::ostream& out, const std::vector<CompareRow>& rows,
                              bool timings) {
  std::vector<std::string> header{"order",        "level",      "h",
                                  "primal_ndofs", "primal_nnz", "primal_error",
                                  "mixed_ndofs",  "mixed_nnz",  "mixed_error",
                                  "ndofs_ratio"};
  if (timings) {
    header.push_back("primal_step_seconds");
    header.push_back("mixed_step_seconds");
  }
  std::vector<std::vector<std::string>> body;
  for (const CompareRow& r : rows) {
    std::vector<std::string> row{std::to_string(r.order),
                                 std::to_string(r.level),
                                 detail::g17(r.h),
                                 std::to_string(r.primal_ndofs),
                                 std::to_string(r.primal_nnz),
                                 detail::g17(r.primal_error),
                                 std::to_string(r.mixed_ndofs),
                                 std::to_string(r.mixed_nnz),
                                 detail::g17(r.mixed_error),
                                 detail::g17(r.ndofs_ratio)};
    if (timings) {
      row.push_back(detail::g17(r.primal_step_seconds));
      row.push_back(detail::g17(r.mixed_step_seconds));
    }
    body.push_back(std::move(row));
  }
  write_csv(out, header, body);
}

}  // namespace mqs
