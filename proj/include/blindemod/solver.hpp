#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "blindemod/core.hpp"
#include "blindemod/gen_net.hpp"
#include "blindemod/landscape.hpp"

namespace blindemod {

struct IteratePair {
  Vector h;
  Vector m;
};

struct SolverConfig {
  double step_size = 0.0;  // <= 0 selects the scale-aware default
  int max_iters = 10000;
  double rel_tol = 1e-10;
  std::uint64_t perturb_seed = 1;
  double perturb_scale = 1e-9;
  bool record_trace = false;
};

enum class SolveStatus { kConverged, kMaxIters, kDegenerateIterate };

struct SolveReport {
  IteratePair final;
  std::vector<double> objective_trace;
  int sign_flips = 0;
  int iterations_used = 0;
  double measurement_residual = 0.0;
  std::optional<BranchMatch> nearest_hyperbola;  // filled by callers who know the truth
  SolveStatus status = SolveStatus::kConverged;
  std::string advice;
};

/// 1/2 |y0 - G1(h) (.) G2(m)|^2.
inline double objective(const GeneratorNetwork& net1, const GeneratorNetwork& net2,
                        const Vector& y0, const IteratePair& x) {
  require(y0.size() == net1.output_dim() && y0.size() == net2.output_dim(),
          "measurement size mismatch");
  const Vector r = forward(net1, x.h).cwiseProduct(forward(net2, x.m)) - y0;
  return 0.5 * r.squaredNorm();
}

namespace detail {

// Gradient in h with the activation patterns supplied by the caller:
//   Lambda1^T ( diag(Lambda2 m)^2 Lambda1 h - diag(Lambda2 m) y0 ).
// The second term consumes only the observable y0; the paper's form with the
// hidden latents reduces to it exactly because diag(u)diag(v)w = diag(u)(v.w).
inline Vector grad_h_masked(const GeneratorNetwork& net1, const MaskStack& st1,
                            const GeneratorNetwork& net2, const MaskStack& st2,
                            const Vector& y0, const IteratePair& x) {
  const Vector a = apply_cascade(net1, st1, x.h);
  const Vector b = apply_cascade(net2, st2, x.m);
  return apply_cascade_transpose(net1, st1,
                                 b.cwiseProduct(a.cwiseProduct(b) - y0));
}

inline Vector grad_m_masked(const GeneratorNetwork& net1, const MaskStack& st1,
                            const GeneratorNetwork& net2, const MaskStack& st2,
                            const Vector& y0, const IteratePair& x) {
  const Vector a = apply_cascade(net1, st1, x.h);
  const Vector b = apply_cascade(net2, st2, x.m);
  return apply_cascade_transpose(net2, st2,
                                 a.cwiseProduct(a.cwiseProduct(b) - y0));
}

}  // namespace detail

inline Vector grad_h(const GeneratorNetwork& net1, const GeneratorNetwork& net2,
                     const Vector& y0, const IteratePair& x) {
  require(y0.size() == net1.output_dim() && y0.size() == net2.output_dim(),
          "measurement size mismatch");
  return detail::grad_h_masked(net1, masks_at(net1, x.h), net2, masks_at(net2, x.m),
                               y0, x);
}

inline Vector grad_m(const GeneratorNetwork& net1, const GeneratorNetwork& net2,
                     const Vector& y0, const IteratePair& x) {
  require(y0.size() == net1.output_dim() && y0.size() == net2.output_dim(),
          "measurement size mismatch");
  return detail::grad_m_masked(net1, masks_at(net1, x.h), net2, masks_at(net2, x.m),
                               y0, x);
}

/// One-sided gradients at x: activation patterns are read off at
/// x + delta_eff w and the gradient formulas are evaluated at the unperturbed
/// point with those patterns. At differentiable points this equals
/// (grad_h, grad_m) exactly; at ReLU kinks it selects the w-side derivative.
inline std::pair<Vector, Vector> one_sided_grad(const GeneratorNetwork& net1,
                                                const GeneratorNetwork& net2,
                                                const Vector& y0, const IteratePair& x,
                                                const Vector& w,
                                                double perturb_scale = 1e-9) {
  const int n = net1.latent_dim(), p = net2.latent_dim();
  require(w.size() == n + p, "perturbation must live in R^{n+p}");
  const double wn = w.norm();
  require(wn > 0.0, "perturbation must be nonzero");
  const double x_norm = std::sqrt(x.h.squaredNorm() + x.m.squaredNorm());
  const double delta = perturb_scale * (1.0 + x_norm) / wn;
  const MaskStack st1 = masks_at(net1, x.h + delta * w.head(n));
  const MaskStack st2 = masks_at(net2, x.m + delta * w.tail(p));
  return {detail::grad_h_masked(net1, st1, net2, st2, y0, x),
          detail::grad_m_masked(net1, st1, net2, st2, y0, x)};
}

/// Unnormalized one-sided directional derivative lim_{t->0+} (f(x+t dir)-f(x))/t,
/// evaluated as the inner product of dir with the one-sided gradient whose
/// perturbation is dir itself.
inline double directional_derivative(const GeneratorNetwork& net1,
                                     const GeneratorNetwork& net2, const Vector& y0,
                                     const IteratePair& x, const Vector& dir,
                                     double perturb_scale = 1e-9) {
  require(dir.norm() > 0.0, "direction must be nonzero");
  const int n = net1.latent_dim(), p = net2.latent_dim();
  const auto [gh, gm] = one_sided_grad(net1, net2, y0, x, dir, perturb_scale);
  return gh.dot(dir.head(n)) + gm.dot(dir.tail(p));
}

/// Scale-aware default step: the descent field is damped by 2^{d+s} ell, and
/// |h||m| at the solution is close to |y0| sqrt(2^{d+s} ell), so this keeps
/// eta * curvature near 1/2.
inline double default_step_size(int d, int s, int ell, double y0_norm) {
  require(y0_norm > 0.0, "y0 must be nonzero");
  return 0.5 * std::sqrt(std::pow(2.0, d + s) * ell) / y0_norm;
}

/// Sign combination with least objective, ties broken in the order
/// (+,+), (-,+), (+,-), (-,-) so the current signs win when tied.
/// Returns the index into that order.
inline int select_signs(const std::array<double, 4>& f_values) {
  int best = 0;
  for (int i = 1; i < 4; ++i) {
    if (f_values[i] < f_values[best]) best = i;
  }
  return best;
}

/// Alternating descent: per iteration select the best sign pattern, step h
/// against grad_h at (h, m), step m against grad_m at the updated h, then
/// rescale so |h| = |m| (which leaves the objective unchanged). Stops when the
/// relative objective decrease stays below rel_tol for 10 straight iterations.
inline SolveReport run(const GeneratorNetwork& net1, const GeneratorNetwork& net2,
                       const Vector& y0, const IteratePair& x_init,
                       const SolverConfig& cfg) {
  require(y0.size() == net1.output_dim() && y0.size() == net2.output_dim(),
          "measurement size mismatch");
  require(x_init.h.norm() > 0.0 && x_init.m.norm() > 0.0,
          "start must have nonzero h and m");
  require(cfg.max_iters > 0 && cfg.rel_tol >= 0.0, "bad solver config");

  const double y0_norm = y0.norm();
  const double eta = cfg.step_size > 0.0
                         ? cfg.step_size
                         : default_step_size(net1.depth(), net2.depth(),
                                             net1.output_dim(), y0_norm);
  // Decreases are measured against max(f, floor); the floor keeps the stall
  // window from resetting on rounding jitter once f sits at machine noise.
  const double f_floor = 1e-14 * (1.0 + y0.squaredNorm());

  SolveReport rep;
  Vector h = x_init.h, m = x_init.m;
  static constexpr std::array<std::array<double, 2>, 4> kSigns{
      {{+1, +1}, {-1, +1}, {+1, -1}, {-1, -1}}};

  auto eval = [&](const Vector& hh) { return forward_with_masks(net1, hh); };
  auto eval2 = [&](const Vector& mm) { return forward_with_masks(net2, mm); };

  double f_prev = objective(net1, net2, y0, {h, m});
  if (cfg.record_trace) rep.objective_trace.push_back(f_prev);
  int stall = 0;
  int it = 0;
  for (; it < cfg.max_iters; ++it) {
    auto [a_pos, st1_pos] = eval(h);
    auto [a_neg, st1_neg] = eval(-h);
    auto [b_pos, st2_pos] = eval2(m);
    auto [b_neg, st2_neg] = eval2(-m);
    const std::array<const Vector*, 2> as{&a_pos, &a_neg};
    const std::array<const Vector*, 2> bs{&b_pos, &b_neg};
    std::array<double, 4> fs;
    for (int k = 0; k < 4; ++k) {
      fs[k] = 0.5 * (as[kSigns[k][0] < 0]->cwiseProduct(*bs[kSigns[k][1] < 0]) - y0)
                        .squaredNorm();
    }
    const int pick = select_signs(fs);
    if (pick != 0) {
      ++rep.sign_flips;
      if (kSigns[pick][0] < 0) h = -h;
      if (kSigns[pick][1] < 0) m = -m;
    }
    const Vector& a = *as[kSigns[pick][0] < 0];
    const Vector& b = *bs[kSigns[pick][1] < 0];
    const MaskStack& st1 = kSigns[pick][0] < 0 ? st1_neg : st1_pos;
    const MaskStack& st2 = kSigns[pick][1] < 0 ? st2_neg : st2_pos;

    const auto degenerate = [&](const char* advice) {
      rep.status = SolveStatus::kDegenerateIterate;
      rep.advice = advice;
    };
    h -= eta * apply_cascade_transpose(net1, st1,
                                       b.cwiseProduct(a.cwiseProduct(b) - y0));
    if (!h.allFinite()) {
      degenerate("iterate diverged; reduce the step size or rescale the "
                 "initialization toward |y0|^(1/2) (2^(d+s) ell)^(1/4)");
      break;
    }
    auto [a_new, st1_new] = eval(h);
    m -= eta * apply_cascade_transpose(
                   net2, st2, a_new.cwiseProduct(a_new.cwiseProduct(b) - y0));
    if (!m.allFinite()) {
      degenerate("iterate diverged; reduce the step size or rescale the "
                 "initialization toward |y0|^(1/2) (2^(d+s) ell)^(1/4)");
      break;
    }

    const double nh = h.norm(), nm = m.norm();
    if (nh == 0.0 || nm == 0.0) {
      degenerate("iterate collapsed to zero; restart from a different random "
                 "initialization or reduce the step size");
      break;
    }
    const double c = std::sqrt(nh / nm);
    h /= c;
    m *= c;
    if (!h.allFinite() || !m.allFinite()) {
      degenerate("iterate diverged; reduce the step size or rescale the "
                 "initialization toward |y0|^(1/2) (2^(d+s) ell)^(1/4)");
      break;
    }

    const double f = objective(net1, net2, y0, {h, m});
    if (cfg.record_trace) rep.objective_trace.push_back(f);
    stall = (f_prev - f) < cfg.rel_tol * std::max(f_prev, f_floor) ? stall + 1 : 0;
    f_prev = f;
    if (stall >= 10) {
      rep.status = SolveStatus::kConverged;
      ++it;
      break;
    }
    rep.status = SolveStatus::kMaxIters;
  }

  rep.iterations_used = it;
  rep.final = {h, m};
  if (rep.status != SolveStatus::kDegenerateIterate) {
    const Vector r = forward(net1, h).cwiseProduct(forward(net2, m)) - y0;
    rep.measurement_residual = y0_norm > 0.0 ? r.norm() / y0_norm : r.norm();
  }
  return rep;
}

}  // namespace blindemod
