#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "blindemod/core.hpp"
#include "blindemod/gen_net.hpp"
#include "blindemod/io.hpp"
#include "blindemod/landscape.hpp"
#include "blindemod/solver.hpp"
#include "blindemod/verify.hpp"

namespace blindemod {

/// Configuration for the built-in experiments. All randomness flows from
/// `seed`; per-trial and per-component streams are derived with mix_seed.
struct ExperimentConfig {
  std::string experiment = "scan";  // scan | solve | recover-batch | verify
  std::vector<int> dims1{1, 128, 4096};
  std::vector<int> dims2{1, 128, 4096};
  std::uint64_t seed = 1;
  LastLayerRule rule = LastLayerRule::kGaussian;

  // scan
  double grid_min = -3.0;
  double grid_max = 3.0;
  int resolution = 301;
  double truth_h0 = 1.0;
  double truth_m0 = 1.0;

  // recover-batch / solve
  int trials = 50;
  int jobs = 1;
  bool start_at_truth = false;
  SolverConfig solver;

  // solve-only inputs (optional file paths)
  std::string net1_path;
  std::string net2_path;
  std::string y0_path;

  // verify sweep: flat (n, ell) pairs plus sampling budgets and pass levels
  std::vector<int> verify_sizes;
  int wdc_pairs = 200;
  int joint_quadruples = 100;
  double wdc_level = 0.1;
  double joint_level = 0.15;

  std::string out = "out";

  void validate() const {
    require(resolution >= 2, "resolution must be at least 2");
    require(trials >= 1, "trial count must be at least 1");
    require(jobs >= 1, "jobs must be at least 1");
    require(grid_max > grid_min, "grid bounds must be ordered");
    require(verify_sizes.size() % 2 == 0, "verify_sizes must be (n, ell) pairs");
  }

  TextDoc to_doc() const {
    TextDoc d;
    d.set("experiment", experiment);
    d.set_list("dims1", dims1);
    d.set_list("dims2", dims2);
    d.set_uint("seed", seed);
    d.set("variance_rule", to_string(rule));
    d.set_double("grid_min", grid_min);
    d.set_double("grid_max", grid_max);
    d.set_int("resolution", resolution);
    d.set_double("truth_h0", truth_h0);
    d.set_double("truth_m0", truth_m0);
    d.set_int("trials", trials);
    d.set_int("jobs", jobs);
    d.set_int("start_at_truth", start_at_truth ? 1 : 0);
    d.set_double("step_size", solver.step_size);
    d.set_int("max_iters", solver.max_iters);
    d.set_double("rel_tol", solver.rel_tol);
    d.set_uint("perturb_seed", solver.perturb_seed);
    d.set_double("perturb_scale", solver.perturb_scale);
    d.set_int("record_trace", solver.record_trace ? 1 : 0);
    d.set("net1", net1_path);
    d.set("net2", net2_path);
    d.set("y0", y0_path);
    d.set_list("verify_sizes", verify_sizes);
    d.set_int("wdc_pairs", wdc_pairs);
    d.set_int("joint_quadruples", joint_quadruples);
    d.set_double("wdc_level", wdc_level);
    d.set_double("joint_level", joint_level);
    d.set("out", out);
    return d;
  }

  static ExperimentConfig from_doc(const TextDoc& d) {
    ExperimentConfig c;
    c.experiment = d.get_or("experiment", c.experiment);
    if (d.has("dims1")) {
      c.dims1.clear();
      for (long long v : d.get_int_list("dims1")) c.dims1.push_back(static_cast<int>(v));
    }
    if (d.has("dims2")) {
      c.dims2.clear();
      for (long long v : d.get_int_list("dims2")) c.dims2.push_back(static_cast<int>(v));
    }
    c.seed = d.get_uint_or("seed", c.seed);
    c.rule = last_layer_rule_from_string(d.get_or("variance_rule", to_string(c.rule)));
    c.grid_min = d.get_double_or("grid_min", c.grid_min);
    c.grid_max = d.get_double_or("grid_max", c.grid_max);
    c.resolution = static_cast<int>(d.get_int_or("resolution", c.resolution));
    c.truth_h0 = d.get_double_or("truth_h0", c.truth_h0);
    c.truth_m0 = d.get_double_or("truth_m0", c.truth_m0);
    c.trials = static_cast<int>(d.get_int_or("trials", c.trials));
    c.jobs = static_cast<int>(d.get_int_or("jobs", c.jobs));
    c.start_at_truth = d.get_int_or("start_at_truth", 0) != 0;
    c.solver.step_size = d.get_double_or("step_size", c.solver.step_size);
    c.solver.max_iters = static_cast<int>(d.get_int_or("max_iters", c.solver.max_iters));
    c.solver.rel_tol = d.get_double_or("rel_tol", c.solver.rel_tol);
    c.solver.perturb_seed = d.get_uint_or("perturb_seed", c.solver.perturb_seed);
    c.solver.perturb_scale = d.get_double_or("perturb_scale", c.solver.perturb_scale);
    c.solver.record_trace = d.get_int_or("record_trace", 0) != 0;
    c.net1_path = d.get_or("net1", "");
    c.net2_path = d.get_or("net2", "");
    c.y0_path = d.get_or("y0", "");
    if (d.has("verify_sizes")) {
      for (long long v : d.get_int_list("verify_sizes")) {
        c.verify_sizes.push_back(static_cast<int>(v));
      }
    }
    c.wdc_pairs = static_cast<int>(d.get_int_or("wdc_pairs", c.wdc_pairs));
    c.joint_quadruples =
        static_cast<int>(d.get_int_or("joint_quadruples", c.joint_quadruples));
    c.wdc_level = d.get_double_or("wdc_level", c.wdc_level);
    c.joint_level = d.get_double_or("joint_level", c.joint_level);
    c.out = d.get_or("out", c.out);
    c.validate();
    return c;
  }
};

/// Runs fn(0..count-1) on `jobs` threads. Results must be written into
/// preallocated slots keyed by index, so the output order is canonical no
/// matter how the work interleaves.
inline void run_parallel(int jobs, int count, const std::function<void(int)>& fn) {
  if (jobs <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  const int workers = std::min(jobs, count);
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// Landscape scan
// ---------------------------------------------------------------------------

struct GridMinimum {
  int i = 0;
  int j = 0;
  double h = 0.0;
  double m = 0.0;
  double value = 0.0;
};

struct ScanCluster {
  GridMinimum best;      // lowest-objective member
  int size = 0;
  int branch = -1;       // nearest of the four target curves
  double relative_distance = 0.0;
};

struct ScanGrid {
  std::vector<double> h_axis;
  std::vector<double> m_axis;
  Matrix values;                     // resolution x resolution, f(h_i, m_j)
  std::vector<GridMinimum> minima;   // interior cells <= all 8 neighbors
  std::vector<ScanCluster> clusters;
};

/// Scans the objective over a 2-D grid of 1-D latents. Both generators are
/// positively homogeneous, so each quadrant's objective depends on the latents
/// only through |h||m|; the scan precomputes G(+-1) for both networks and
/// evaluates every cell from those four basis outputs, which is exact.
/// Interior cells that are <= all 8 neighbors are marked as local minima,
/// grouped per sign quadrant by gaps in the product coordinate (one target
/// curve lives in each quadrant), and each group is classified against the
/// four curves. Boundary cells are excluded.
inline ScanGrid scan_landscape(const ExperimentConfig& cfg) {
  cfg.validate();
  const GeneratorNetwork net1 = sample_network(cfg.dims1, mix_seed(cfg.seed, 1), cfg.rule);
  const GeneratorNetwork net2 = sample_network(cfg.dims2, mix_seed(cfg.seed, 2), cfg.rule);
  require(net1.latent_dim() == 1 && net2.latent_dim() == 1,
          "scan needs latent dimension 1 in both networks");
  require(cfg.truth_h0 != 0.0 && cfg.truth_m0 != 0.0, "scan truth must be nonzero");

  Vector one(1), neg(1);
  one << 1.0;
  neg << -1.0;
  const Vector u_pos = forward(net1, one), u_neg = forward(net1, neg);
  const Vector v_pos = forward(net2, one), v_neg = forward(net2, neg);
  Vector th(1), tm(1);
  th << cfg.truth_h0;
  tm << cfg.truth_m0;
  const Vector y0 = forward(net1, th).cwiseProduct(forward(net2, tm));

  const int res = cfg.resolution;
  ScanGrid grid;
  grid.h_axis.resize(res);
  grid.m_axis.resize(res);
  for (int i = 0; i < res; ++i) {
    const double t = static_cast<double>(i) / (res - 1);
    grid.h_axis[i] = cfg.grid_min + (cfg.grid_max - cfg.grid_min) * t;
    grid.m_axis[i] = grid.h_axis[i];
  }

  // Quadrant basis products u^{sign h} (.) v^{sign m}.
  const Eigen::Index ell = y0.size();
  std::array<Vector, 4> basis;
  basis[0] = u_pos.cwiseProduct(v_pos);
  basis[1] = u_neg.cwiseProduct(v_pos);
  basis[2] = u_pos.cwiseProduct(v_neg);
  basis[3] = u_neg.cwiseProduct(v_neg);

  grid.values.resize(res, res);
  for (int i = 0; i < res; ++i) {
    const double h = grid.h_axis[i];
    for (int j = 0; j < res; ++j) {
      const double m = grid.m_axis[j];
      const int q = (h < 0.0 ? 1 : 0) + (m < 0.0 ? 2 : 0);
      const double t = std::abs(h) * std::abs(m);
      const double* w = basis[q].data();
      const double* y = y0.data();
      double acc = 0.0;
      for (Eigen::Index e = 0; e < ell; ++e) {
        const double r = y[e] - t * w[e];
        acc += r * r;
      }
      grid.values(i, j) = 0.5 * acc;
    }
  }

  for (int i = 1; i < res - 1; ++i) {
    for (int j = 1; j < res - 1; ++j) {
      const double v = grid.values(i, j);
      bool is_min = true;
      for (int di = -1; di <= 1 && is_min; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          if (di == 0 && dj == 0) continue;
          if (!(v <= grid.values(i + di, j + dj))) {
            is_min = false;
            break;
          }
        }
      }
      if (is_min) {
        grid.minima.push_back({i, j, grid.h_axis[i], grid.m_axis[j], v});
      }
    }
  }

  // Group per quadrant along the product coordinate.
  std::array<std::vector<const GridMinimum*>, 4> by_quadrant;
  for (const GridMinimum& gm : grid.minima) {
    const int q = (gm.h < 0.0 ? 1 : 0) + (gm.m < 0.0 ? 2 : 0);
    by_quadrant[q].push_back(&gm);
  }
  const Vector h0v = th, m0v = tm;
  const int d = net1.depth(), s = net2.depth();
  for (auto& members : by_quadrant) {
    if (members.empty()) continue;
    std::sort(members.begin(), members.end(),
              [](const GridMinimum* a, const GridMinimum* b) {
                return a->h * a->m < b->h * b->m;
              });
    std::vector<double> products;
    products.reserve(members.size());
    for (const GridMinimum* gm : members) products.push_back(gm->h * gm->m);
    const double median = products[products.size() / 2];
    const double gap = 0.15 * (1.0 + std::abs(median));
    std::size_t start = 0;
    for (std::size_t k = 1; k <= members.size(); ++k) {
      if (k == members.size() || products[k] - products[k - 1] > gap) {
        ScanCluster cl;
        cl.size = static_cast<int>(k - start);
        cl.best = *members[start];
        for (std::size_t r = start; r < k; ++r) {
          if (members[r]->value < cl.best.value) cl.best = *members[r];
        }
        Vector hh(1), mm(1);
        hh << cl.best.h;
        mm << cl.best.m;
        const BranchMatch match = nearest_branch(hh, mm, h0v, m0v, d, s);
        cl.branch = match.index;
        cl.relative_distance = match.relative_distance;
        grid.clusters.push_back(cl);
        start = k;
      }
    }
  }
  return grid;
}

inline void write_scan_csv(std::ostream& out, const ScanGrid& grid) {
  out << "h,m,f\n";
  for (std::size_t i = 0; i < grid.h_axis.size(); ++i) {
    for (std::size_t j = 0; j < grid.m_axis.size(); ++j) {
      out << format_double(grid.h_axis[i]) << ',' << format_double(grid.m_axis[j])
          << ',' << format_double(grid.values(i, j)) << '\n';
    }
  }
}

inline TextDoc scan_report(const ExperimentConfig& cfg, const ScanGrid& grid) {
  TextDoc doc;
  doc.set("format", "blindemod-scan-report-v1");
  for (const auto& e : cfg.to_doc().entries()) doc.set("config." + e.key, e.value);
  doc.set_int("num_minima", static_cast<long long>(grid.minima.size()));
  doc.set_int("num_clusters", static_cast<long long>(grid.clusters.size()));
  for (std::size_t k = 0; k < grid.clusters.size(); ++k) {
    const ScanCluster& cl = grid.clusters[k];
    const std::string p = "cluster" + std::to_string(k) + ".";
    doc.set_double(p + "h", cl.best.h);
    doc.set_double(p + "m", cl.best.m);
    doc.set_double(p + "f", cl.best.value);
    doc.set_int(p + "size", cl.size);
    doc.set_int(p + "branch", cl.branch);
    doc.set_double(p + "relative_distance", cl.relative_distance);
  }
  return doc;
}

// ---------------------------------------------------------------------------
// Recovery batch
// ---------------------------------------------------------------------------

struct TrialResult {
  int trial = 0;
  std::uint64_t seed = 0;
  double residual = 0.0;
  int branch = -1;
  double branch_distance = 0.0;
  int iterations = 0;
  int sign_flips = 0;
  SolveStatus status = SolveStatus::kConverged;
};

struct BatchSummary {
  std::vector<TrialResult> trials;
  double success_rate = 0.0;       // residual < 1e-2
  double success_threshold = 1e-2;
};

/// Samples nets and a ground-truth latent pair per trial, forms y0, runs the
/// alternating descent from a fresh random start, and records the residual
/// and the nearest hyperbolic branch. Trials are independent; solver failures
/// are recorded without aborting the batch.
inline BatchSummary recover_batch(const ExperimentConfig& cfg) {
  cfg.validate();
  BatchSummary summary;
  summary.trials.resize(cfg.trials);
  run_parallel(cfg.jobs, cfg.trials, [&](int t) {
    const std::uint64_t trial_seed = mix_seed(cfg.seed, 1000 + t);
    TrialResult& out = summary.trials[t];
    out.trial = t;
    out.seed = trial_seed;
    const GeneratorNetwork net1 =
        sample_network(cfg.dims1, mix_seed(trial_seed, 1), cfg.rule);
    const GeneratorNetwork net2 =
        sample_network(cfg.dims2, mix_seed(trial_seed, 2), cfg.rule);
    Rng rng(mix_seed(trial_seed, 3));
    Vector h0, m0;
    do {
      h0 = rng.gaussian_vector(net1.latent_dim());
    } while (forward(net1, h0).isZero());
    do {
      m0 = rng.gaussian_vector(net2.latent_dim());
    } while (forward(net2, m0).isZero());
    const Vector y0 = forward(net1, h0).cwiseProduct(forward(net2, m0));

    IteratePair start;
    if (cfg.start_at_truth) {
      start = {h0, m0};
    } else {
      Rng srng(mix_seed(trial_seed, 4));
      const double scale =
          std::pow(std::pow(2.0, net1.depth() + net2.depth()) * y0.size(), 0.25) *
          std::sqrt(y0.norm());
      start.h = scale * srng.unit_vector(net1.latent_dim());
      start.m = scale * srng.unit_vector(net2.latent_dim());
    }

    const SolveReport rep = run(net1, net2, y0, start, cfg.solver);
    out.residual = rep.measurement_residual;
    out.iterations = rep.iterations_used;
    out.sign_flips = rep.sign_flips;
    out.status = rep.status;
    if (rep.status != SolveStatus::kDegenerateIterate) {
      const BranchMatch match = nearest_branch(rep.final.h, rep.final.m, h0, m0,
                                               net1.depth(), net2.depth());
      out.branch = match.index;
      out.branch_distance = match.relative_distance;
    }
  });
  int wins = 0;
  for (const TrialResult& t : summary.trials) {
    if (t.status != SolveStatus::kDegenerateIterate &&
        t.residual < summary.success_threshold) {
      ++wins;
    }
  }
  summary.success_rate = static_cast<double>(wins) / cfg.trials;
  return summary;
}

inline void write_batch_csv(std::ostream& out, const BatchSummary& summary) {
  out << "trial,seed,residual,branch,iters,flips\n";
  for (const TrialResult& t : summary.trials) {
    out << t.trial << ',' << t.seed << ',' << format_double(t.residual) << ','
        << t.branch << ',' << t.iterations << ',' << t.sign_flips << '\n';
  }
}

inline TextDoc batch_report(const ExperimentConfig& cfg, const BatchSummary& summary) {
  TextDoc doc;
  doc.set("format", "blindemod-batch-report-v1");
  for (const auto& e : cfg.to_doc().entries()) doc.set("config." + e.key, e.value);
  doc.set_int("trials", static_cast<long long>(summary.trials.size()));
  doc.set_double("success_threshold", summary.success_threshold);
  doc.set_double("success_rate", summary.success_rate);
  return doc;
}

// ---------------------------------------------------------------------------
// Verification sweep
// ---------------------------------------------------------------------------

/// Runs the WDC / joint-WDC / alpha / concentration checks over the configured
/// (n, ell) sizes; one row per check per size. The middle width of the
/// two-layer nets used by the concentration rows is the rounded geometric
/// mean of n and ell.
inline void verify_sweep(const ExperimentConfig& cfg, std::ostream& out) {
  cfg.validate();
  out << "check,n,ell,value,value2,alpha,bound,pass\n";
  const auto row = [&](const char* check, int n, int ell, double value, double value2,
                       double alpha, double bound, bool pass) {
    out << check << ',' << n << ',' << ell << ',' << format_double(value) << ','
        << format_double(value2) << ',' << format_double(alpha) << ','
        << format_double(bound) << ',' << (pass ? 1 : 0) << '\n';
  };
  for (std::size_t k = 0; k + 1 < cfg.verify_sizes.size(); k += 2) {
    const int n = cfg.verify_sizes[k];
    const int ell = cfg.verify_sizes[k + 1];
    require(n >= 1 && ell > n, "verify sizes need ell > n >= 1");
    const std::uint64_t seed = mix_seed(cfg.seed, 7000 + k);

    const GeneratorNetwork layer =
        sample_gaussian_network({n, ell}, mix_seed(seed, 1));
    const WdcReport gauss =
        wdc_deviation(layer.layers[0], 1.0, cfg.wdc_pairs, mix_seed(seed, 2));
    row("wdc_gaussian", n, ell, gauss.epsilon_hat, 0.0, 1.0, cfg.wdc_level,
        gauss.epsilon_hat <= cfg.wdc_level);

    const Matrix trunc = sample_truncated_last_layer(ell, n, mix_seed(seed, 3));
    const double alpha = alpha_truncation(n);
    const WdcReport truncated =
        wdc_deviation(trunc, alpha, cfg.wdc_pairs, mix_seed(seed, 4));
    row("wdc_truncated", n, ell, truncated.epsilon_hat, 0.0, alpha, cfg.wdc_level,
        truncated.epsilon_hat <= cfg.wdc_level);

    const Matrix B = sample_truncated_last_layer(ell, n, mix_seed(seed, 5));
    const Matrix C = sample_truncated_last_layer(ell, n, mix_seed(seed, 6));
    const JointWdcReport joint = joint_wdc_deviation(
        B, C, alpha * alpha, cfg.joint_quadruples, mix_seed(seed, 7));
    row("joint_wdc", n, ell, joint.epsilon_hat_1, joint.epsilon_hat_2, alpha * alpha,
        cfg.joint_level,
        std::max(joint.epsilon_hat_1, joint.epsilon_hat_2) <= cfg.joint_level);

    row("alpha_truncation", n, ell, alpha, 0.0, alpha, 1.0, alpha > 0.0 && alpha <= 1.0);

    const int mid = std::max(n + 1, std::min(ell - 1, static_cast<int>(std::lround(
                                                          std::sqrt(double(n) * ell)))));
    const GeneratorNetwork net1 =
        sample_gaussian_network({n, mid, ell}, mix_seed(seed, 8));
    const GeneratorNetwork net2 =
        sample_gaussian_network({n, mid, ell}, mix_seed(seed, 9));
    const double eps_measured = std::max(
        wdc_deviation(net1.layers[0], 1.0, 8, mix_seed(seed, 10)).epsilon_hat,
        wdc_deviation(net1.layers[1], 1.0, 4, mix_seed(seed, 11)).epsilon_hat);
    Rng rng(mix_seed(seed, 12));
    const Vector p = rng.gaussian_vector(n), q = rng.gaussian_vector(n);
    const CascadeCheck cc = check_cascade_concentration(net1, p, q, eps_measured);
    row("cascade_concentration", n, ell, cc.lhs, eps_measured, 1.0, cc.bound,
        cc.lhs <= cc.bound);

    const Vector h = rng.gaussian_vector(n), x = rng.gaussian_vector(n);
    const Vector m = rng.gaussian_vector(n), y = rng.gaussian_vector(n);
    const JointCheck jc =
        check_joint_concentration(net1, net2, h, x, m, y, 1.0, eps_measured);
    row("joint_concentration", n, ell, jc.lhs1, jc.lhs2, 1.0, jc.bound,
        std::max(jc.lhs1, jc.lhs2) <= jc.bound);
  }
}

}  // namespace blindemod
