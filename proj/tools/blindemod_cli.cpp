// Command-line front end: gen, scan, solve, recover-batch, verify.
// Exit codes: 0 success, 2 invalid config, 3 degenerate iterate.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "blindemod/experiments.hpp"

namespace {

using namespace blindemod;

constexpr int kExitInvalidConfig = 2;
constexpr int kExitDegenerate = 3;

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> jobs;
};

void add_common(CLI::App* cmd, CommonArgs* args) {
  cmd->add_option("--config", args->config_path, "experiment config file");
  cmd->add_option("--seed", args->seed, "override the config seed");
  cmd->add_option("--out", args->out, "override the output path");
  cmd->add_option("--jobs", args->jobs, "worker threads for batch trials");
}

ExperimentConfig load_config(const CommonArgs& args) {
  ExperimentConfig cfg;
  if (!args.config_path.empty()) {
    cfg = ExperimentConfig::from_doc(TextDoc::load(args.config_path));
  }
  if (args.seed) cfg.seed = *args.seed;
  if (args.out) cfg.out = *args.out;
  if (args.jobs) cfg.jobs = *args.jobs;
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write " + path);
  return out;
}

int cmd_gen(const CommonArgs& args) {
  const ExperimentConfig cfg = load_config(args);
  StoredNetwork stored;
  stored.spec = {cfg.dims1, cfg.seed, cfg.rule};
  stored.net = sample_network(cfg.dims1, cfg.seed, cfg.rule);
  save_network(cfg.out, stored);
  std::cout << "wrote network " << cfg.out << "\n";
  return 0;
}

int cmd_scan(const CommonArgs& args) {
  const ExperimentConfig cfg = load_config(args);
  const ScanGrid grid = scan_landscape(cfg);
  {
    auto out = open_out(cfg.out);
    write_scan_csv(out, grid);
  }
  scan_report(cfg, grid).save(cfg.out + ".report");
  std::cout << "scan: " << grid.minima.size() << " minima in "
            << grid.clusters.size() << " clusters -> " << cfg.out << "\n";
  return 0;
}

TextDoc solve_report_doc(const ExperimentConfig& cfg, const SolveReport& rep) {
  TextDoc doc;
  doc.set("format", "blindemod-solve-report-v1");
  for (const auto& e : cfg.to_doc().entries()) doc.set("config." + e.key, e.value);
  doc.set("status", rep.status == SolveStatus::kConverged     ? "converged"
                    : rep.status == SolveStatus::kMaxIters    ? "max_iters"
                                                              : "degenerate_iterate");
  doc.set_int("iterations_used", rep.iterations_used);
  doc.set_int("sign_flips", rep.sign_flips);
  doc.set_double("measurement_residual", rep.measurement_residual);
  if (!rep.advice.empty()) doc.set("advice", rep.advice);
  if (rep.nearest_hyperbola) {
    doc.set_int("nearest_branch", rep.nearest_hyperbola->index);
    doc.set_double("nearest_branch_distance", rep.nearest_hyperbola->relative_distance);
  }
  std::vector<double> h(rep.final.h.begin(), rep.final.h.end());
  std::vector<double> m(rep.final.m.begin(), rep.final.m.end());
  doc.set_list("final_h", h);
  doc.set_list("final_m", m);
  if (!rep.objective_trace.empty()) doc.set_list("objective_trace", rep.objective_trace);
  return doc;
}

int cmd_solve(const CommonArgs& args) {
  const ExperimentConfig cfg = load_config(args);
  GeneratorNetwork net1, net2;
  if (!cfg.net1_path.empty()) {
    net1 = load_network(cfg.net1_path).net;
  } else {
    net1 = sample_network(cfg.dims1, mix_seed(cfg.seed, 1), cfg.rule);
  }
  if (!cfg.net2_path.empty()) {
    net2 = load_network(cfg.net2_path).net;
  } else {
    net2 = sample_network(cfg.dims2, mix_seed(cfg.seed, 2), cfg.rule);
  }
  net1.validate();
  net2.validate();

  Vector y0;
  std::optional<IteratePair> truth;
  if (!cfg.y0_path.empty()) {
    y0 = load_vector(cfg.y0_path);
  } else {
    Rng rng(mix_seed(cfg.seed, 3));
    Vector h0, m0;
    do {
      h0 = rng.gaussian_vector(net1.latent_dim());
    } while (forward(net1, h0).isZero());
    do {
      m0 = rng.gaussian_vector(net2.latent_dim());
    } while (forward(net2, m0).isZero());
    truth = IteratePair{h0, m0};
    y0 = forward(net1, h0).cwiseProduct(forward(net2, m0));
  }

  IteratePair start;
  if (cfg.start_at_truth && truth) {
    start = *truth;
  } else {
    Rng rng(mix_seed(cfg.seed, 4));
    const double scale =
        std::pow(std::pow(2.0, net1.depth() + net2.depth()) * y0.size(), 0.25) *
        std::sqrt(y0.norm());
    start.h = scale * rng.unit_vector(net1.latent_dim());
    start.m = scale * rng.unit_vector(net2.latent_dim());
  }

  SolveReport rep = run(net1, net2, y0, start, cfg.solver);
  if (truth) {
    rep.nearest_hyperbola = nearest_branch(rep.final.h, rep.final.m, truth->h,
                                           truth->m, net1.depth(), net2.depth());
  }
  solve_report_doc(cfg, rep).save(cfg.out);
  std::cout << "solve: residual " << rep.measurement_residual << " after "
            << rep.iterations_used << " iterations -> " << cfg.out << "\n";
  return rep.status == SolveStatus::kDegenerateIterate ? kExitDegenerate : 0;
}

int cmd_recover_batch(const CommonArgs& args) {
  const ExperimentConfig cfg = load_config(args);
  const BatchSummary summary = recover_batch(cfg);
  {
    auto out = open_out(cfg.out);
    write_batch_csv(out, summary);
  }
  batch_report(cfg, summary).save(cfg.out + ".report");
  std::cout << "recover-batch: success rate " << summary.success_rate << " -> "
            << cfg.out << "\n";
  return 0;
}

int cmd_verify(const CommonArgs& args) {
  const ExperimentConfig cfg = load_config(args);
  auto out = open_out(cfg.out);
  verify_sweep(cfg, out);
  std::cout << "verify: wrote " << cfg.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"blind demodulation with generative priors"};
  app.require_subcommand(1);

  CommonArgs gen_args, scan_args, solve_args, batch_args, verify_args;
  CLI::App* gen = app.add_subcommand("gen", "sample a network and write it to a file");
  add_common(gen, &gen_args);
  CLI::App* scan = app.add_subcommand("scan", "objective landscape over 1-D latents");
  add_common(scan, &scan_args);
  CLI::App* solve = app.add_subcommand("solve", "run the alternating descent once");
  add_common(solve, &solve_args);
  CLI::App* batch =
      app.add_subcommand("recover-batch", "batch of synthetic recovery trials");
  add_common(batch, &batch_args);
  CLI::App* verify = app.add_subcommand("verify", "WDC and concentration sweep");
  add_common(verify, &verify_args);

  CLI11_PARSE(app, argc, argv);
  try {
    if (gen->parsed()) return cmd_gen(gen_args);
    if (scan->parsed()) return cmd_scan(scan_args);
    if (solve->parsed()) return cmd_solve(solve_args);
    if (batch->parsed()) return cmd_recover_batch(batch_args);
    if (verify->parsed()) return cmd_verify(verify_args);
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kExitInvalidConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
