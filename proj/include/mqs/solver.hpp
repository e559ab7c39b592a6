#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "assembly.hpp"
#include "core.hpp"
#include "linalg.hpp"

namespace mqs {

// ---------------------------------------------------------------------------
// Damped Newton iteration with Armijo backtracking. Convergence is measured
// against the residual of the zero state, so the stopping test is invariant
// under a rescaling of the data; a zero reference falls back to an absolute
// test at 1e-12.
// ---------------------------------------------------------------------------

struct NewtonOptions {
  double tolerance = 1e-8;   // relative residual reduction
  int max_iterations = 50;
  double armijo_c = 1e-4;    // sufficient-decrease constant
  double backtrack = 0.5;    // step contraction factor
  double min_step = std::ldexp(1.0, -20);

  void validate() const {
    if (!(tolerance > 0.0)) throw InvalidParams("newton: tolerance must be positive");
    if (max_iterations < 0) throw InvalidParams("newton: max_iterations must be >= 0");
    if (!(armijo_c > 0.0 && armijo_c < 1.0))
      throw InvalidParams("newton: armijo constant must lie in (0,1)");
    if (!(backtrack > 0.0 && backtrack < 1.0))
      throw InvalidParams("newton: backtracking factor must lie in (0,1)");
    if (!(min_step > 0.0 && min_step <= 1.0))
      throw InvalidParams("newton: minimal step must lie in (0,1]");
  }
};

enum class NewtonStatus { Converged, LineSearchStalled, MaxIterations };

inline const char* to_string(NewtonStatus s) {
  switch (s) {
    case NewtonStatus::Converged: return "converged";
    case NewtonStatus::LineSearchStalled: return "line search stalled";
    case NewtonStatus::MaxIterations: return "maximum iterations reached";
  }
  return "unknown";
}

// trace[0] is the initial residual (step 0); one entry per accepted step after
struct IterationRecord {
  double residual = 0.0;
  double step = 0.0;
  double linear_seconds = 0.0;
};

struct SolveReport {
  bool converged = false;
  NewtonStatus status = NewtonStatus::MaxIterations;
  int iterations = 0;
  double reference_norm = 0.0;
  double final_norm = 0.0;
  int ndofs = 0;        // size of the condensed linear system
  long long nnz = 0;    // nonzeros of its matrix
  double linear_seconds = 0.0;  // accumulated over all steps
  double total_seconds = 0.0;
  std::vector<IterationRecord> trace;
};

// thrown when a Newton step's linear solve fails; carries the partial history
struct LinearSolveFailure : Error {
  SolveReport report;
  LinearSolveFailure(const std::string& what, SolveReport r)
      : Error(what), report(std::move(r)) {}
};

// what a direction callback returns: the step and the linear-solve statistics
struct NewtonStep {
  VectorXd direction;
  int ndofs = 0;
  long long nnz = 0;
  double linear_seconds = 0.0;
};

// Generic damped Newton driver. `residual` maps a state to its residual
// vector; `direction` maps a state to a NewtonStep. The state x is updated in
// place; failures of the linear solve surface as LinearSolveFailure.
template <class Residual, class Direction>
SolveReport newton(Residual&& residual, Direction&& direction, VectorXd& x,
                   const NewtonOptions& opts = {}) {
  opts.validate();
  const auto t0 = std::chrono::steady_clock::now();
  auto seconds_since = [](auto start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  SolveReport rep;
  const VectorXd r0 = residual(VectorXd::Zero(x.size()));
  rep.reference_norm = r0.norm();
  const double target = (rep.reference_norm > 0.0)
                            ? opts.tolerance * rep.reference_norm
                            : 1e-12;

  VectorXd r = (x.norm() == 0.0) ? r0 : residual(x);
  double rnorm = r.norm();
  rep.trace.push_back({rnorm, 0.0, 0.0});

  while (true) {
    if (rnorm <= target) {
      rep.converged = true;
      rep.status = NewtonStatus::Converged;
      break;
    }
    if (rep.iterations >= opts.max_iterations) {
      rep.status = NewtonStatus::MaxIterations;
      break;
    }

    NewtonStep step;
    try {
      step = direction(x);
    } catch (const LinearSolveFailure&) {
      throw;
    } catch (const Error& e) {
      rep.final_norm = rnorm;
      rep.total_seconds = seconds_since(t0);
      throw LinearSolveFailure("newton step " + std::to_string(rep.iterations + 1) +
                                   ": " + e.what(),
                               rep);
    }
    rep.ndofs = step.ndofs;
    rep.nnz = step.nnz;
    rep.linear_seconds += step.linear_seconds;

    double tau = 1.0;
    bool accepted = false;
    while (tau >= opts.min_step) {
      const VectorXd xt = x + tau * step.direction;
      const VectorXd rt = residual(xt);
      const double rtn = rt.norm();
      if (std::isfinite(rtn) && rtn <= (1.0 - opts.armijo_c * tau) * rnorm) {
        x = xt;
        r = rt;
        rnorm = rtn;
        accepted = true;
        break;
      }
      tau *= opts.backtrack;
    }
    if (!accepted) {
      rep.status = NewtonStatus::LineSearchStalled;
      break;
    }
    ++rep.iterations;
    rep.trace.push_back({rnorm, tau, step.linear_seconds});
  }

  rep.final_norm = rnorm;
  rep.total_seconds = seconds_since(t0);
  return rep;
}

// ---------------------------------------------------------------------------
// Formulation drivers
// ---------------------------------------------------------------------------

struct MixedSolution {
  VectorXd H;      // conforming edge coefficients
  VectorXd a;      // DG coefficients
  VectorXd a_hat;  // multiplier of the last step (the trace of a)
  SolveReport report;
};

// Newton on the hybridized system: assemble element blocks, condense onto the
// interior-edge multipliers, solve the SPD Schur complement, recover the
// element updates, and average the (tangentially continuous) broken field
// back into the conforming space.
inline MixedSolution solve_mixed(const MixedSpaces& sp, const MaterialMap& materials,
                                 const NewtonOptions& opts = {},
                                 VectorXd H0 = VectorXd(), VectorXd a0 = VectorXd()) {
  const int nv = sp.Vc.ndofs, nq = sp.Q.ndofs;
  if (H0.size() == 0) H0 = VectorXd::Zero(nv);
  if (a0.size() == 0) a0 = VectorXd::Zero(nq);
  if (H0.size() != nv || a0.size() != nq)
    throw InvalidParams("solve_mixed: initial state size mismatch");

  MixedSolution sol;
  VectorXd x(nv + nq);
  x << H0, a0;

  auto residual = [&](const VectorXd& y) {
    return mixed_residual(sp, materials, y.head(nv), y.tail(nq));
  };
  auto direction = [&](const VectorXd& y) {
    const auto blocks = assemble_local_blocks(sp, materials, y.head(nv), y.tail(nq));
    const CondensedSystem cs = condense(sp, blocks);
    const auto t0 = std::chrono::steady_clock::now();
    const VectorXd dhat = solve_spd(cs.S, cs.rhs);
    NewtonStep step;
    step.linear_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const MixedUpdate u = recover(sp, blocks, cs, dhat);
    sol.a_hat = u.a_hat;
    step.direction.resize(nv + nq);
    step.direction << conforming_from_broken(*sp.mesh, sp.Vc, sp.Vb, u.dH_broken), u.da;
    step.ndofs = cs.S.dim();
    step.nnz = cs.S.nnz();
    return step;
  };

  sol.report = newton(residual, direction, x, opts);
  sol.H = x.head(nv);
  sol.a = x.tail(nq);
  if (sol.a_hat.size() == 0) sol.a_hat = VectorXd::Zero(sp.Tr.ndofs);
  return sol;
}

struct PrimalSolution {
  VectorXd a;  // full Lagrange coefficients, zero on the boundary
  SolveReport report;
};

inline PrimalSolution solve_primal(const PrimalSpaces& sp, const MaterialMap& materials,
                                   const NewtonOptions& opts = {},
                                   VectorXd a0 = VectorXd()) {
  if (a0.size() == 0) a0 = VectorXd::Zero(sp.U.ndofs);
  if (a0.size() != sp.U.ndofs)
    throw InvalidParams("solve_primal: initial state size mismatch");

  VectorXd x = sp.restrict_free(a0);
  auto residual = [&](const VectorXd& y) {
    return primal_residual(sp, materials, sp.expand(y));
  };
  auto direction = [&](const VectorXd& y) {
    const PrimalSystem ps = assemble_primal(sp, materials, sp.expand(y));
    const auto t0 = std::chrono::steady_clock::now();
    NewtonStep step;
    step.direction = solve_spd(ps.K, ps.rhs);
    step.linear_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    step.ndofs = ps.K.dim();
    step.nnz = ps.K.nnz();
    return step;
  };

  PrimalSolution sol;
  sol.report = newton(residual, direction, x, opts);
  sol.a = sp.expand(x);
  return sol;
}

}  // namespace mqs
