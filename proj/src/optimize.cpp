#include "rrmar/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rrmar/errors.hpp"

namespace rrmar {

namespace {

// Everything below minimizes phi(a) = -f(x + a d).
struct Point {
  double a = 0.0;
  double phi = 0.0;
  double dphi = 0.0;
  Vec grad;  // gradient of f (not of phi) at x + a d
  bool finite() const { return std::isfinite(phi) && std::isfinite(dphi); }
};

class LineSearch {
 public:
  LineSearch(const Objective& f, const Vec& x, const Vec& d, const Point& start, const QuasiNewtonOptions& opt,
             int& evaluations)
      : f_(f), x_(x), d_(d), p0_(start), opt_(opt), evals_(evaluations) {}

  // Returns the accepted point, or std::nullopt-equivalent (a == 0) on failure.
  Point run(double a1) {
    Point prev = p0_;
    double a = a1;
    for (int i = 0; i < opt_.max_line_search; ++i) {
      Point cur = eval(a);
      if (!cur.finite()) {
        // Infeasible: treat as a bracket end with infinite value.
        return zoom(prev, cur);
      }
      if (cur.phi > p0_.phi + opt_.c1 * a * p0_.dphi || (i > 0 && cur.phi >= prev.phi)) return zoom(prev, cur);
      if (std::abs(cur.dphi) <= -opt_.c2 * p0_.dphi) return cur;
      if (cur.dphi >= 0.0) return zoom(cur, prev);
      prev = cur;
      a *= 2.0;
    }
    return best_;
  }

 private:
  Point eval(double a) {
    Point p;
    p.a = a;
    const Vec x = x_ + a * d_;
    p.grad.resize(x.size());
    const double v = f_(x, &p.grad);
    ++evals_;
    p.phi = std::isfinite(v) ? -v : std::numeric_limits<double>::infinity();
    p.dphi = p.grad.allFinite() ? -p.grad.dot(d_) : std::numeric_limits<double>::quiet_NaN();
    if (p.finite() && p.phi <= p0_.phi + opt_.c1 * a * p0_.dphi && p.phi < best_.phi) best_ = p;
    return p;
  }

  static double interpolate(const Point& lo, const Point& hi) {
    const double left = std::min(lo.a, hi.a);
    const double right = std::max(lo.a, hi.a);
    const double width = right - left;
    double a = 0.5 * (lo.a + hi.a);
    if (lo.finite() && hi.finite()) {
      // Cubic through (a, phi, dphi) at both ends.
      const double d1 = lo.dphi + hi.dphi - 3.0 * (lo.phi - hi.phi) / (lo.a - hi.a);
      const double disc = d1 * d1 - lo.dphi * hi.dphi;
      if (disc >= 0.0) {
        const double d2 = std::copysign(std::sqrt(disc), hi.a - lo.a);
        const double c = hi.a - (hi.a - lo.a) * (hi.dphi + d2 - d1) / (hi.dphi - lo.dphi + 2.0 * d2);
        if (std::isfinite(c)) a = c;
      }
    } else if (lo.finite()) {
      // Quadratic from the finite end's value and slope toward an infinite wall.
      a = lo.a + 0.25 * (hi.a - lo.a);
    }
    const double margin = 0.1 * width;
    return std::clamp(a, left + margin, right - margin);
  }

  Point zoom(Point lo, Point hi) {
    for (int i = 0; i < opt_.max_line_search; ++i) {
      if (std::abs(hi.a - lo.a) <= 1e-16 * std::max(1.0, std::abs(lo.a))) break;
      Point cur = eval(interpolate(lo, hi));
      if (!cur.finite() || cur.phi > p0_.phi + opt_.c1 * cur.a * p0_.dphi || cur.phi >= lo.phi) {
        hi = cur;
        continue;
      }
      if (std::abs(cur.dphi) <= -opt_.c2 * p0_.dphi) return cur;
      if (cur.dphi * (hi.a - lo.a) >= 0.0) hi = lo;
      lo = cur;
    }
    return best_;
  }

  const Objective& f_;
  const Vec& x_;
  const Vec& d_;
  Point p0_;
  const QuasiNewtonOptions& opt_;
  int& evals_;
  Point best_{0.0, std::numeric_limits<double>::infinity(), 0.0, {}};
};

bool small_gradient(const Vec& g, double value, double tol) {
  return g.size() == 0 || g.cwiseAbs().maxCoeff() < tol * (1.0 + std::abs(value));
}

}  // namespace

QuasiNewtonResult quasi_newton_maximize(const Objective& f, const Vec& x0, const QuasiNewtonOptions& options) {
  QuasiNewtonResult r;
  r.x = x0;
  r.gradient.resize(x0.size());
  r.value = f(r.x, &r.gradient);
  r.evaluations = 1;
  if (!std::isfinite(r.value) || !r.gradient.allFinite())
    throw NumericalError("objective is not finite at the starting point");

  if (small_gradient(r.gradient, r.value, options.grad_tol)) {
    r.converged = true;
    r.message = "gradient below tolerance at start";
    return r;
  }

  const Index n = x0.size();
  Mat h = Mat::Identity(n, n);
  bool fresh = true;  // h is the unscaled identity
  bool reset_used = false;

  while (r.iterations < options.max_iters) {
    Vec d = h * r.gradient;
    double slope = r.gradient.dot(d);
    if (!(slope > 0.0)) {
      h.setIdentity();
      fresh = true;
      d = r.gradient;
      slope = d.squaredNorm();
    }
    const double a1 = fresh ? std::min(1.0, 1.0 / d.cwiseAbs().maxCoeff()) : 1.0;

    Point start;
    start.phi = -r.value;
    start.dphi = -slope;
    start.grad = r.gradient;
    LineSearch ls(f, r.x, d, start, options, r.evaluations);
    const Point step = ls.run(a1);

    if (!(step.a > 0.0)) {
      if (reset_used || fresh) {
        r.converged = false;
        r.message = "line search failed";
        return r;
      }
      h.setIdentity();
      fresh = true;
      reset_used = true;
      continue;
    }

    const Vec s = step.a * d;
    const Vec y = r.gradient - step.grad;  // gradient difference of -f
    const double new_value = -step.phi;
    const double change = new_value - r.value;
    r.x += s;
    r.value = new_value;
    r.gradient = step.grad;
    ++r.iterations;
    reset_used = false;

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh) {
        h *= sy / y.squaredNorm();
        fresh = false;
      }
      const double rho = 1.0 / sy;
      const Vec hy = h * y;
      const double yhy = y.dot(hy);
      h += (rho * rho * yhy + rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
    }

    if (std::abs(change) < options.tol) {
      r.converged = true;
      r.message = "objective change below tolerance";
      return r;
    }
    if (small_gradient(r.gradient, r.value, options.grad_tol)) {
      r.converged = true;
      r.message = "gradient below tolerance";
      return r;
    }
  }
  r.converged = false;
  r.message = "iteration limit reached";
  return r;
}

}  // namespace rrmar
