#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "blindemod/core.hpp"

namespace blindemod {

/// Angle contraction of one masked layer: arccos(((pi-t)cos t + sin t)/pi).
/// The arccos argument is clamped against rounding at the endpoints.
inline double angle_map(double theta) {
  require(theta >= 0.0 && theta <= M_PI, "angle outside [0, pi]");
  const double c = ((M_PI - theta) * std::cos(theta) + std::sin(theta)) / M_PI;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

struct AngleSequence {
  std::vector<double> values;  // theta_0 .. theta_{k-1}
};

/// Iterates angle_map k-1 times from theta0.
inline AngleSequence angle_sequence(double theta0, int depth) {
  require(depth >= 1, "depth must be positive");
  require(theta0 >= 0.0 && theta0 <= M_PI, "angle outside [0, pi]");
  AngleSequence seq;
  seq.values.reserve(depth);
  seq.values.push_back(theta0);
  for (int i = 1; i < depth; ++i) seq.values.push_back(angle_map(seq.values.back()));
  return seq;
}

/// Angle between nonzero vectors via atan2 of (rejection norm, dot), which
/// stays accurate near both 0 and pi where plain arccos loses digits.
inline double angle_between(const Vector& x, const Vector& y) {
  require(x.size() == y.size(), "dimension mismatch");
  const double nx = x.norm(), ny = y.norm();
  require(nx > 0.0 && ny > 0.0, "zero vector has no direction");
  const Vector xu = x / nx, yu = y / ny;
  const double c = std::clamp(xu.dot(yu), -1.0, 1.0);
  const double s = (xu - c * yu).norm();
  return std::atan2(s, c);
}

/// Product and sum coefficients of the closed-form cascade prediction:
///   xi   = prod_{i=0}^{k-1} (pi - theta_i)/pi
///   zeta = sum_{i=0}^{k-1} (sin theta_i)/pi * prod_{j=i+1}^{k-1} (pi - theta_j)/pi
/// They satisfy cos(theta_k) = xi cos(theta_0) + zeta exactly.
struct XiZeta {
  double xi;
  double zeta;
};

inline XiZeta xi_zeta(const AngleSequence& seq) {
  const int k = static_cast<int>(seq.values.size());
  double xi = 1.0, zeta = 0.0;
  // Backwards, so the running xi is exactly the tail product each sine term needs.
  for (int i = k - 1; i >= 0; --i) {
    zeta += std::sin(seq.values[i]) / M_PI * xi;
    xi *= (M_PI - seq.values[i]) / M_PI;
  }
  return {xi, zeta};
}

/// Closed-form prediction of Lambda^T_{+,p} Lambda_{+,q} q after `depth` layers.
inline Vector t_vector(const Vector& p, const Vector& q, int depth) {
  require(p.norm() > 0.0 && q.norm() > 0.0, "zero vector");
  const AngleSequence seq = angle_sequence(angle_between(p, q), depth);
  const auto [xi, zeta] = xi_zeta(seq);
  return (xi * q + zeta * (q.norm() / p.norm()) * p) / std::pow(2.0, depth);
}

/// Spurious-branch coefficient: the zeta sum over the angle sequence started
/// at pi (whose i = 0 sine term vanishes identically).
inline double rho(int depth) {
  require(depth >= 2, "rho needs depth >= 2");
  const AngleSequence seq = angle_sequence(M_PI, depth);
  double sum = 0.0;
  for (int i = 1; i < depth; ++i) {
    double term = std::sin(seq.values[i]) / M_PI;
    for (int j = i + 1; j < depth; ++j) term *= (M_PI - seq.values[j]) / M_PI;
    sum += term;
  }
  return sum;
}

/// Expected masked Gram matrix (pi-t)/(2pi) I + sin(t)/(2pi) M, where M swaps
/// the unit directions of x and y and kills their orthogonal complement. When
/// sin(t) is below noise the swap matrix is irrelevant; the unit projector is
/// used so the expression stays finite.
inline Matrix q_matrix(const Vector& x, const Vector& y) {
  require(x.size() == y.size(), "dimension mismatch");
  const double nx = x.norm(), ny = y.norm();
  require(nx > 0.0 && ny > 0.0, "zero vector");
  const Eigen::Index n = x.size();
  const Vector xu = x / nx, yu = y / ny;
  const double theta = angle_between(x, y);
  const double s = std::sin(theta), c = std::cos(theta);
  Matrix M;
  if (std::abs(s) < 1e-12) {
    M = xu * xu.transpose();
  } else {
    M = ((xu * yu.transpose() + yu * xu.transpose()) - c * (xu * xu.transpose() + yu * yu.transpose())) / (s * s);
  }
  Matrix out = s / (2.0 * M_PI) * M;
  out.diagonal().array() += (M_PI - theta) / (2.0 * M_PI);
  return out;
}

/// Expected descent field in h:
///   alpha/(2^{d+s} ell) |m|^2 h - alpha/ell (m . t2_{m,m0}) t1_{h,h0}.
inline Vector expected_direction_h(const Vector& h, const Vector& m, const Vector& h0,
                                   const Vector& m0, int d, int s, double alpha,
                                   int ell) {
  require(h.norm() > 0 && m.norm() > 0 && h0.norm() > 0 && m0.norm() > 0,
          "zero vector");
  const Vector t2 = t_vector(m, m0, s);
  const Vector t1 = t_vector(h, h0, d);
  const double scale = std::pow(2.0, d + s) * ell;
  return alpha / scale * m.squaredNorm() * h - alpha / ell * m.dot(t2) * t1;
}

/// Mirror of expected_direction_h with the roles of (h, d) and (m, s) swapped.
inline Vector expected_direction_m(const Vector& h, const Vector& m, const Vector& h0,
                                   const Vector& m0, int d, int s, double alpha,
                                   int ell) {
  require(h.norm() > 0 && m.norm() > 0 && h0.norm() > 0 && m0.norm() > 0,
          "zero vector");
  const Vector t1 = t_vector(h, h0, d);
  const Vector t2 = t_vector(m, m0, s);
  const double scale = std::pow(2.0, d + s) * ell;
  return alpha / scale * h.squaredNorm() * m - alpha / ell * h.dot(t1) * t2;
}

/// One hyperbolic target curve {(c h_dir, m_dir/c) : c > 0} with a relative
/// radius; membership means relative_distance <= radius.
struct HyperbolaSpec {
  Vector h_dir;
  Vector m_dir;
  double radius = 0.0;

  void validate() const {
    require(h_dir.norm() > 0.0 && m_dir.norm() > 0.0, "curve directions must be nonzero");
    require(radius >= 0.0, "radius must be nonnegative");
  }
};

struct HyperbolaProjection {
  double c_star;
  double relative_distance;
};

/// Minimizes phi(c) = |h - c hd|^2 + |m - md/c|^2 over c > 0. Stationary
/// points are the positive roots of
///   |hd|^2 c^4 - (hd.h) c^3 + (md.m) c - |md|^2 = 0,
/// found by bracketing sign changes on a log grid (64 points, in a scale-free
/// variable) and polishing with bisection-safeguarded Newton. phi is evaluated
/// at every root and the best one wins.
inline HyperbolaProjection hyperbola_distance(const Vector& h, const Vector& m,
                                              const HyperbolaSpec& spec) {
  spec.validate();
  require(h.size() == spec.h_dir.size() && m.size() == spec.m_dir.size(),
          "dimension mismatch");
  const double hh = spec.h_dir.squaredNorm();
  const double mm = spec.m_dir.squaredNorm();
  const double a = spec.h_dir.dot(h);
  const double b = spec.m_dir.dot(m);
  // Substitute c = kappa t with kappa = (|md|/|hd|)^(1/2 of the norm ratio):
  // the quartic becomes t^4 - An t^3 + Bn t - 1 = 0, scale-free in t.
  const double kappa = std::sqrt(std::sqrt(mm / hh));
  const double An = a / (hh * kappa);
  const double Bn = b * kappa / mm;
  auto psi = [&](double t) { return ((t - An) * t * t) * t + Bn * t - 1.0; };
  auto dpsi = [&](double t) { return (4.0 * t - 3.0 * An) * t * t + Bn; };
  auto phi = [&](double t) {
    const double c = kappa * t;
    return (h - c * spec.h_dir).squaredNorm() + (m - spec.m_dir / c).squaredNorm();
  };

  const double span = std::max(1e6, 4.0 * (1.0 + std::abs(An) + std::abs(Bn)));
  const int grid_points = 64;
  double best_t = 0.0, best_phi = std::numeric_limits<double>::infinity();
  double prev_t = span > 0 ? 1.0 / span : 1e-6;
  double prev_psi = psi(prev_t);
  for (int i = 1; i < grid_points; ++i) {
    const double t = std::exp(std::log(1.0 / span) +
                              (std::log(span) - std::log(1.0 / span)) * i / (grid_points - 1));
    const double v = psi(t);
    if ((prev_psi <= 0.0 && v >= 0.0) || (prev_psi >= 0.0 && v <= 0.0)) {
      // Newton from the midpoint, bisection fallback when it leaves the bracket.
      double lo = prev_t, hi = t, flo = prev_psi;
      double x = 0.5 * (lo + hi);
      for (int it = 0; it < 100; ++it) {
        const double fx = psi(x);
        if ((fx <= 0.0) == (flo <= 0.0)) lo = x; else hi = x;
        const double dx = dpsi(x);
        double next = dx != 0.0 ? x - fx / dx : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) <= 1e-15 * std::abs(x)) { x = next; break; }
        x = next;
      }
      const double val = phi(x);
      if (val < best_phi) { best_phi = val; best_t = x; }
    }
    prev_t = t;
    prev_psi = v;
  }
  if (!(best_t > 0.0)) {
    // Impossible for nonzero inputs since phi -> inf at both ends; guard anyway.
    throw std::runtime_error("hyperbola_distance: no positive stationary point");
  }
  const double c = kappa * best_t;
  const double curve_norm = std::sqrt(c * c * hh + mm / (c * c));
  return {c, std::sqrt(best_phi) / curve_norm};
}

/// The four target curves: (h0, m0), (-rho_d h0, m0), (h0, -rho_s m0),
/// (-rho_d h0, -rho_s m0).
inline std::array<HyperbolaSpec, 4> theorem_branches(const Vector& h0, const Vector& m0,
                                                     int d, int s, double radius = 0.0) {
  const double rd = rho(d), rs = rho(s);
  return {HyperbolaSpec{h0, m0, radius},
          HyperbolaSpec{-rd * h0, m0, radius},
          HyperbolaSpec{h0, -rs * m0, radius},
          HyperbolaSpec{-rd * h0, -rs * m0, radius}};
}

/// Index and distance of the nearest of the four branches.
struct BranchMatch {
  int index;
  double relative_distance;
};

inline BranchMatch nearest_branch(const Vector& h, const Vector& m, const Vector& h0,
                                  const Vector& m0, int d, int s) {
  const auto branches = theorem_branches(h0, m0, d, s);
  BranchMatch best{-1, std::numeric_limits<double>::infinity()};
  for (int i = 0; i < 4; ++i) {
    const double rel = hyperbola_distance(h, m, branches[i]).relative_distance;
    if (rel < best.relative_distance) best = {i, rel};
  }
  return best;
}

}  // namespace blindemod
