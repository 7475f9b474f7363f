#pragma once

// BFGS ascent (inverse-Hessian form) with a strong Wolfe line search.

#include <functional>
#include <string>

#include "rrmar/linalg.hpp"

namespace rrmar {

/// Returns f(x) and, when grad is non-null, writes the gradient. A non-finite
/// value marks x as infeasible; the line search then shortens the step.
using Objective = std::function<double(const Vec& x, Vec* grad)>;

struct QuasiNewtonOptions {
  int max_iters = 1000;
  double tol = 1e-10;        ///< stop when |f_k - f_{k-1}| < tol
  double grad_tol = 1e-10;   ///< stop when max |g_i| < grad_tol * (1 + |f|)
  int max_line_search = 40;  ///< function evaluations per line search
  double c1 = 1e-4;          ///< sufficient increase
  double c2 = 0.9;           ///< curvature; small values approach an exact line search
};

struct QuasiNewtonResult {
  Vec x;
  double value = 0.0;
  Vec gradient;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string message;

  double grad_norm() const { return gradient.size() ? gradient.cwiseAbs().maxCoeff() : 0.0; }
};

/// Maximizes f from x0. Accepted steps never decrease f. On a line-search
/// failure the Hessian approximation is reset once; a second failure returns
/// the best point with converged = false. Throws NumericalError if f(x0) is
/// not finite.
QuasiNewtonResult quasi_newton_maximize(const Objective& f, const Vec& x0, const QuasiNewtonOptions& options = {});

}  // namespace rrmar
