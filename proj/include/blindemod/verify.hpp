#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "blindemod/core.hpp"
#include "blindemod/gen_net.hpp"
#include "blindemod/landscape.hpp"

namespace blindemod {

/// Largest singular value of a linear operator given by apply/apply_transpose,
/// via power iteration on A^T A. Deterministic all-ones start, fixed budget of
/// 200 steps, early exit when the estimate moves by less than 1e-10 relative.
inline double spectral_norm_op(int cols,
                               const std::function<Vector(const Vector&)>& apply,
                               const std::function<Vector(const Vector&)>& apply_t,
                               int max_iters = 200, double tol = 1e-10) {
  Vector v = Vector::Ones(cols) / std::sqrt(static_cast<double>(cols));
  double sigma = 0.0;
  for (int i = 0; i < max_iters; ++i) {
    Vector av = apply(v);
    const double s = av.norm();
    if (s == 0.0) return 0.0;
    Vector w = apply_t(av);
    const double wn = w.norm();
    if (wn == 0.0) return s;
    v = w / wn;
    if (std::abs(s - sigma) <= tol * std::max(1.0, s)) {
      sigma = s;
      break;
    }
    sigma = s;
  }
  return sigma;
}

inline double spectral_norm(const Matrix& A) {
  return spectral_norm_op(
      static_cast<int>(A.cols()), [&](const Vector& v) { return Vector(A * v); },
      [&](const Vector& v) { return Vector(A.transpose() * v); });
}

/// Measured deviation of W from its expected masked Gram: the max over sampled
/// direction pairs of |W_{+,x}^T W_{+,y} - alpha Q_{x,y}|. Randomized sampling
/// plus the structured pairs {x=y, y=-x, orthogonal}; an empirical lower bound
/// on the true sup.
struct WdcReport {
  double epsilon_hat = 0.0;
  double alpha_used = 1.0;
  int num_pairs = 0;
  std::pair<Vector, Vector> worst_pair;
  std::uint64_t seed = 0;
};

namespace detail {

inline Vector masked_pre(const Matrix& W, const Vector& x) {
  return (W * x).array().cast<double>().matrix();
}

// sigma_max(W_{+,x}^T W_{+,y} - alpha Q_{x,y}); forms the small Gram matrix
// explicitly when cheap, otherwise applies the operator lazily.
inline double wdc_pair_deviation(const Matrix& W, const Vector& x, const Vector& y,
                                 double alpha) {
  const Eigen::Index n = W.cols();
  const Matrix Q = q_matrix(x, y);
  const Vector sx = ((W * x).array() > 0.0).cast<double>();
  const Vector sy = ((W * y).array() > 0.0).cast<double>();
  if (n <= 128) {
    Matrix Wx = sx.asDiagonal() * W;
    Matrix Wy = sy.asDiagonal() * W;
    Matrix D = Wx.transpose() * Wy - alpha * Q;
    return spectral_norm(D);
  }
  auto apply = [&](const Vector& v) {
    Vector t = sy.cwiseProduct(W * v);
    return Vector(W.transpose() * sx.cwiseProduct(t) - alpha * (Q * v));
  };
  auto apply_t = [&](const Vector& v) {
    Vector t = sx.cwiseProduct(W * v);
    return Vector(W.transpose() * sy.cwiseProduct(t) - alpha * (Q.transpose() * v));
  };
  return spectral_norm_op(static_cast<int>(n), apply, apply_t);
}

}  // namespace detail

inline WdcReport wdc_deviation(const Matrix& W, double alpha, int num_pairs,
                               std::uint64_t seed) {
  require(alpha > 0.0 && alpha <= 1.0, "alpha must be in (0, 1]");
  require(num_pairs >= 0, "num_pairs must be nonnegative");
  const int n = static_cast<int>(W.cols());
  Rng rng(seed);
  std::vector<std::pair<Vector, Vector>> pairs;
  pairs.reserve(num_pairs + 9);
  for (int i = 0; i < num_pairs; ++i) {
    pairs.emplace_back(rng.unit_vector(n), rng.unit_vector(n));
  }
  for (int k = 0; k < 3; ++k) {
    const Vector u = rng.unit_vector(n);
    pairs.emplace_back(u, u);
    pairs.emplace_back(u, -u);
    if (n >= 2) {
      Vector v = rng.unit_vector(n);
      v -= v.dot(u) * u;
      if (v.norm() > 1e-9) pairs.emplace_back(u, v.normalized());
    }
  }
  WdcReport rep;
  rep.alpha_used = alpha;
  rep.seed = seed;
  rep.num_pairs = static_cast<int>(pairs.size());
  for (const auto& [x, y] : pairs) {
    const double dev = detail::wdc_pair_deviation(W, x, y, alpha);
    if (dev > rep.epsilon_hat) {
      rep.epsilon_hat = dev;
      rep.worst_pair = {x, y};
    }
  }
  return rep;
}

/// Measured deviations of the two joint forms, each normalized by its quoted
/// scaling (ell / (|m||y|) for the first, ell / (|h||x|) for the second).
struct JointWdcReport {
  double epsilon_hat_1 = 0.0;
  double epsilon_hat_2 = 0.0;
  int num_quadruples = 0;
  std::uint64_t seed = 0;
};

inline JointWdcReport joint_wdc_deviation(const Matrix& B, const Matrix& C,
                                          double alpha, int num_quadruples,
                                          std::uint64_t seed) {
  require(alpha > 0.0 && alpha <= 1.0, "alpha must be in (0, 1]");
  require(B.rows() == C.rows(), "B and C must share the output dimension");
  const int n = static_cast<int>(B.cols());
  const int p = static_cast<int>(C.cols());
  const double ell = static_cast<double>(B.rows());
  Rng rng(seed);
  JointWdcReport rep;
  rep.seed = seed;
  rep.num_quadruples = num_quadruples;
  for (int q = 0; q < num_quadruples; ++q) {
    const Vector h = rng.unit_vector(n), x = rng.unit_vector(n);
    const Vector m = rng.unit_vector(p), y = rng.unit_vector(p);
    const Vector Bh = ((B * h).array() > 0.0).cast<double>();
    const Vector Bx = ((B * x).array() > 0.0).cast<double>();
    const Vector Cm = ((C * m).array() > 0.0).cast<double>();
    const Vector Cy = ((C * y).array() > 0.0).cast<double>();
    const Vector cm = Cm.cwiseProduct(C * m), cy = Cy.cwiseProduct(C * y);
    const Vector bh = Bh.cwiseProduct(B * h), bx = Bx.cwiseProduct(B * x);

    const Vector w1 = cm.cwiseProduct(cy);
    Matrix M1 = (Bh.asDiagonal() * B).transpose() *
                (w1.asDiagonal() * (Bx.asDiagonal() * B));
    const Matrix Qm = q_matrix(m, y);
    M1 -= alpha / ell * m.dot(Qm * y) * q_matrix(h, x);
    rep.epsilon_hat_1 = std::max(rep.epsilon_hat_1, spectral_norm(M1) * ell);

    const Vector w2 = bh.cwiseProduct(bx);
    Matrix M2 = (Cm.asDiagonal() * C).transpose() *
                (w2.asDiagonal() * (Cy.asDiagonal() * C));
    const Matrix Qh = q_matrix(h, x);
    M2 -= alpha / ell * h.dot(Qh * x) * q_matrix(m, y);
    rep.epsilon_hat_2 = std::max(rep.epsilon_hat_2, spectral_norm(M2) * ell);
  }
  return rep;
}

namespace detail {

// Regularized lower incomplete gamma P(a, x): series for x < a + 1, modified
// Lentz continued fraction for the upper tail otherwise. Absolute accuracy
// around 1e-15 for the desk-scale arguments used here.
inline double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int i = 0; i < 2000; ++i) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-17) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double f = d;
  for (int i = 1; i < 2000; ++i) {
    const double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    f *= delta;
    if (std::abs(delta - 1.0) < 1e-17) break;
  }
  return f * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace detail

inline double regularized_gamma_p(double a, double x) {
  require(a > 0.0 && x >= 0.0, "gamma P needs a > 0, x >= 0");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return detail::gamma_p_series(a, x);
  return 1.0 - detail::gamma_q_cf(a, x);
}

/// Fraction of the masked-Gram expectation kept by the 3*sqrt(k) row-norm
/// truncation: P((k+2)/2, 9k/2).
inline double alpha_truncation(int k) {
  require(k >= 1, "dimension must be positive");
  return regularized_gamma_p((k + 2) / 2.0, 9.0 * k / 2.0);
}

/// lhs = |Lambda^T_{d,+,p} Lambda_{d,+,q} q - t_{p,q}|, bound as quoted:
/// 24 d^3 sqrt(eps) / 2^d |q|.
struct CascadeCheck {
  double lhs;
  double bound;
};

inline CascadeCheck check_cascade_concentration(const GeneratorNetwork& net,
                                                const Vector& p, const Vector& q,
                                                double eps_assumed) {
  require(p.norm() > 0.0 && q.norm() > 0.0, "zero vector");
  const int d = net.depth();
  const MaskStack sp = masks_at(net, p);
  const MaskStack sq = masks_at(net, q);
  const Vector lhs_vec =
      apply_cascade_transpose(net, sp, apply_cascade(net, sq, q)) - t_vector(p, q, d);
  const double bound =
      24.0 * std::pow(d, 3) * std::sqrt(eps_assumed) / std::pow(2.0, d) * q.norm();
  return {lhs_vec.norm(), bound};
}

/// Deviations of the two cascade joint forms against their closed-form
/// predictions; bound = 208 d^3 s^3 sqrt(eps) / (2^{d+s} ell) times the larger
/// of the two quoted norm products.
struct JointCheck {
  double lhs1;
  double lhs2;
  double bound;
};

inline JointCheck check_joint_concentration(const GeneratorNetwork& net1,
                                            const GeneratorNetwork& net2,
                                            const Vector& h, const Vector& x,
                                            const Vector& m, const Vector& y,
                                            double alpha, double eps_assumed) {
  require(h.norm() > 0 && x.norm() > 0 && m.norm() > 0 && y.norm() > 0,
          "zero vector");
  require(net1.output_dim() == net2.output_dim(), "networks must share outputs");
  const int d = net1.depth(), s = net2.depth();
  const double ell = net1.output_dim();
  const MaskStack sh = masks_at(net1, h), sx = masks_at(net1, x);
  const MaskStack sm = masks_at(net2, m), sy = masks_at(net2, y);
  const Vector lm = apply_cascade(net2, sm, m), ly = apply_cascade(net2, sy, y);
  const Vector lh = apply_cascade(net1, sh, h), lx = apply_cascade(net1, sx, x);

  const Vector lhs1_vec =
      apply_cascade_transpose(net1, sh,
                              lm.cwiseProduct(ly).cwiseProduct(lx)) -
      alpha / ell * m.dot(t_vector(m, y, s)) * t_vector(h, x, d);
  const Vector lhs2_vec =
      apply_cascade_transpose(net2, sm,
                              lh.cwiseProduct(lx).cwiseProduct(ly)) -
      alpha / ell * h.dot(t_vector(h, x, d)) * t_vector(m, y, s);

  const double norms = std::max(x.norm() * m.norm() * y.norm(),
                                y.norm() * h.norm() * x.norm());
  const double bound = 208.0 * std::pow(d, 3) * std::pow(s, 3) *
                       std::sqrt(eps_assumed) / (std::pow(2.0, d + s) * ell) * norms;
  return {lhs1_vec.norm(), lhs2_vec.norm(), bound};
}

}  // namespace blindemod
