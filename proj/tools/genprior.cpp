// genprior: command-line front end for the sweeps, diagnostics and tables.
//
// Exit status: 0 on success, 1 for configuration or input errors, 2 for
// runtime failures (divergence, non-convergence, I/O while writing results).

#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "genprior/autoencoder.hpp"
#include "genprior/denoiser.hpp"
#include "genprior/errors.hpp"
#include "genprior/generator.hpp"
#include "genprior/landscape.hpp"
#include "genprior/manifest.hpp"
#include "genprior/numerics.hpp"
#include "genprior/reports.hpp"
#include "genprior/sweep.hpp"

using namespace genprior;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Globals {
  std::uint64_t seed = 1;
  std::string out = "-";
  unsigned threads = 1;
};

class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

// Runs `body` with a stream bound to --out ("-" is stdout).
void with_output(const std::string& path, const std::function<void(std::ostream&)>& body) {
  if (path == "-") {
    body(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw RuntimeFailure("cannot open '" + path + "' for writing");
  body(file);
  file.flush();
  if (!file) throw RuntimeFailure("write to '" + path + "' failed");
}

struct DescentFlags {
  double alpha = 0.1;
  int max_iters = 10000;
  double tol = 1e-9;
  std::string negation = "every";

  void add(CLI::App* cmd) {
    cmd->add_option("--alpha", alpha, "step size")->capture_default_str();
    cmd->add_option("--max-iters", max_iters, "iteration cap")->capture_default_str();
    cmd->add_option("--tol", tol, "relative step stopping tolerance")->capture_default_str();
    cmd->add_option("--negation", negation, "negation check mode")
        ->check(CLI::IsMember({"every", "onconv", "off"}))
        ->capture_default_str();
  }

  DescentConfig config() const {
    DescentConfig c;
    c.step_size = alpha;
    c.max_iters = max_iters;
    c.rel_step_tol = tol;
    c.negation = negation_mode_from_string(negation);
    return c;
  }
};

struct SweepFlags {
  SweepConfig cfg;
  DescentFlags descent;
  std::vector<double> values;

  void run(const Globals& g) {
    cfg.base_seed = g.seed;
    cfg.threads = g.threads;
    cfg.descent = descent.config();
    if (!values.empty()) cfg.values = values;
    const auto rows = run_sweep(cfg);
    with_output(g.out, [&](std::ostream& os) { write_sweep_csv(os, cfg, rows); });
  }
};

void write_trace_csv(std::ostream& os, const DescentTrace& tr, const std::string& note) {
  os << "# termination=" << note << " iterations=" << tr.iterations() << " final_loss=" << fmt_double(tr.final_loss)
     << "\n";
  os << "iter,loss,step_norm,negated\n";
  std::size_t next = 0;
  for (int i = 0; i < tr.iterations(); ++i) {
    bool negated = false;
    while (next < tr.negations.size() && tr.negations[next] <= i) negated |= tr.negations[next++] == i;
    os << i << ',' << fmt_double(tr.losses[i]) << ',' << fmt_double(tr.step_norms[i]) << ',' << (negated ? 1 : 0)
       << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Denoising and compressed sensing with random expansive ReLU generators"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals globals;
  app.add_option("--seed", globals.seed, "base seed")->capture_default_str();
  app.add_option("--out", globals.out, "output file, '-' for stdout")->capture_default_str();
  app.add_option("--threads", globals.threads, "worker threads (GENPRIOR_THREADS overrides)")
      ->capture_default_str();

  // sweep-k
  SweepFlags sweep_k;
  sweep_k.cfg.mode = SweepMode::sweep_k;
  sweep_k.cfg.values = {10, 25, 50, 75, 100};
  auto* cmd_k = app.add_subcommand("sweep-k", "error versus latent dimension at fixed noise");
  cmd_k->add_option("--widths", sweep_k.cfg.widths, "layer widths n_1..n_d")->delimiter(',')->capture_default_str();
  cmd_k->add_option("--sigma2", sweep_k.cfg.sigma2, "noise variance")->capture_default_str();
  cmd_k->add_option("--ks", sweep_k.values, "latent dimensions to sweep")->delimiter(',');
  cmd_k->add_option("--trials", sweep_k.cfg.trials, "trials per point")->capture_default_str();
  sweep_k.descent.add(cmd_k);

  // sweep-sigma
  SweepFlags sweep_s;
  sweep_s.cfg.mode = SweepMode::sweep_sigma;
  auto* cmd_s = app.add_subcommand("sweep-sigma", "error versus noise variance at fixed k");
  cmd_s->add_option("--widths", sweep_s.cfg.widths, "layer widths n_1..n_d")->delimiter(',')->capture_default_str();
  cmd_s->add_option("--k", sweep_s.cfg.k, "latent dimension")->capture_default_str();
  cmd_s->add_option("--sigma2s", sweep_s.values, "noise variances to sweep")->delimiter(',');
  cmd_s->add_option("--trials", sweep_s.cfg.trials, "trials per point")->capture_default_str();
  sweep_s.descent.add(cmd_s);

  // cs-sweep
  SweepFlags sweep_cs;
  sweep_cs.cfg.mode = SweepMode::cs_sweep;
  sweep_cs.cfg.k = 20;
  auto* cmd_cs = app.add_subcommand("cs-sweep", "compressed sensing error versus noise variance");
  cmd_cs->add_option("--widths", sweep_cs.cfg.widths, "layer widths n_1..n_d")->delimiter(',')->capture_default_str();
  cmd_cs->add_option("--k", sweep_cs.cfg.k, "latent dimension")->capture_default_str();
  cmd_cs->add_option("--m", sweep_cs.cfg.m, "number of measurements")->capture_default_str();
  cmd_cs->add_option("--sigma2s", sweep_cs.values, "noise variances to sweep")->delimiter(',');
  cmd_cs->add_option("--trials", sweep_cs.cfg.trials, "trials per point")->capture_default_str();
  sweep_cs.descent.add(cmd_cs);

  // denoise
  std::string manifest_dir, observation_path, xhat_out;
  double init_norm = 1.0;
  DescentFlags denoise_flags;
  auto* cmd_dn = app.add_subcommand("denoise", "run the descent on a stored network and observation");
  cmd_dn->add_option("--manifest", manifest_dir, "network directory")->required();
  cmd_dn->add_option("--observation", observation_path, "observation vector file")->required();
  cmd_dn->add_option("--init-norm", init_norm, "norm of the random starting point")->capture_default_str();
  cmd_dn->add_option("--xhat-out", xhat_out, "write the final latent estimate here");
  denoise_flags.add(cmd_dn);

  // make-network
  std::vector<Index> net_widths{10, 500, 1500};
  std::string net_scale = "two_over_fanout", net_obs, net_xstar;
  double net_sigma2 = 0.0;
  auto* cmd_mk = app.add_subcommand("make-network", "write a random network, optionally with a planted observation");
  cmd_mk->add_option("--widths", net_widths, "widths k,n_1..n_d")->delimiter(',')->capture_default_str();
  cmd_mk->add_option("--scale", net_scale, "weight variance rule")
      ->check(CLI::IsMember({"two_over_fanout", "one_over_fanout"}))
      ->capture_default_str();
  cmd_mk->add_option("--observation", net_obs, "write y = G(x_*) + noise here");
  cmd_mk->add_option("--xstar-out", net_xstar, "write the planted x_* here");
  cmd_mk->add_option("--sigma2", net_sigma2, "noise variance for the observation")->capture_default_str();

  // autoencoder-check
  Index ae_k = 16;
  std::vector<Index> ae_widths{400, 784};
  int ae_trials = 500;
  double ae_sigma2 = 1.0;
  auto* cmd_ae = app.add_subcommand("autoencoder-check", "noise attenuation of random hourglass networks");
  cmd_ae->add_option("--k", ae_k, "code dimension")->capture_default_str();
  cmd_ae->add_option("--widths", ae_widths, "decoder widths n_1..n_d")->delimiter(',')->capture_default_str();
  cmd_ae->add_option("--trials", ae_trials, "number of trials")->capture_default_str();
  cmd_ae->add_option("--sigma2", ae_sigma2, "noise variance")->capture_default_str();

  // wdc-check
  Index wdc_k = 4;
  std::vector<Index> wdc_ns{1024, 2048, 4096, 8192};
  std::size_t wdc_pairs = 200;
  int wdc_seeds = 20;
  auto* cmd_wdc = app.add_subcommand("wdc-check", "sampled weight distribution deviation versus width");
  cmd_wdc->add_option("--k", wdc_k, "columns")->capture_default_str();
  cmd_wdc->add_option("--ns", wdc_ns, "row counts")->delimiter(',')->capture_default_str();
  cmd_wdc->add_option("--pairs", wdc_pairs, "sampled pairs per matrix")->capture_default_str();
  cmd_wdc->add_option("--seeds", wdc_seeds, "matrices per width")->capture_default_str();

  // landscape
  std::vector<Index> ls_widths{50, 200};
  double ls_extent = 3.0, ls_sigma2 = 0.0;
  int ls_grid = 101, ls_h_grid = 181;
  std::string ls_h_out;
  std::vector<int> ls_depths{1, 2, 3, 5, 10};
  std::vector<double> ls_radii{0.25, 0.5, 1.0, 1.5};
  auto* cmd_ls = app.add_subcommand("landscape", "loss surface over a 2-d latent grid and h_x slices");
  cmd_ls->add_option("--widths", ls_widths, "layer widths n_1..n_d (k = 2)")->delimiter(',')->capture_default_str();
  cmd_ls->add_option("--extent", ls_extent, "grid half-width")->capture_default_str();
  cmd_ls->add_option("--grid", ls_grid, "points per axis")->capture_default_str();
  cmd_ls->add_option("--sigma2", ls_sigma2, "observation noise variance")->capture_default_str();
  cmd_ls->add_option("--h-out", ls_h_out, "write ||h_x|| slices here");
  cmd_ls->add_option("--depths", ls_depths, "depths for the slices")->delimiter(',')->capture_default_str();
  cmd_ls->add_option("--radii", ls_radii, "radii (in units of ||x_*||)")->delimiter(',')->capture_default_str();
  cmd_ls->add_option("--h-grid", ls_h_grid, "angles per slice")->capture_default_str();

  // rho-table
  int rho_max = 64;
  auto* cmd_rho = app.add_subcommand("rho-table", "rho_d and its bound by depth");
  cmd_rho->add_option("--max-depth", rho_max, "largest depth")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (cmd_k->parsed()) {
      sweep_k.run(globals);
    } else if (cmd_s->parsed()) {
      sweep_s.run(globals);
    } else if (cmd_cs->parsed()) {
      sweep_cs.run(globals);
    } else if (cmd_dn->parsed()) {
      auto net = std::make_shared<const GeneratorNetwork>(load_manifest(manifest_dir));
      const Vector y = read_vector(observation_path);
      const DenoiseProblem problem(net, y);
      DescentConfig c = denoise_flags.config();
      c.init_norm = init_norm;
      Rng rng(globals.seed);
      try {
        const DescentTrace tr = run(problem, c, rng);
        with_output(globals.out, [&](std::ostream& os) { write_trace_csv(os, tr, to_string(tr.termination)); });
        if (!xhat_out.empty()) write_vector(xhat_out, tr.x_hat);
      } catch (const DivergenceError& e) {
        with_output(globals.out, [&](std::ostream& os) { write_trace_csv(os, e.trace(), "diverged"); });
        throw;
      }
    } else if (cmd_mk->parsed()) {
      if (globals.out == "-") throw ConfigError("make-network: --out must name a directory");
      Rng root(globals.seed);
      Rng net_rng = root.derive(0), x_rng = root.derive(1), noise_rng = root.derive(2);
      const auto g = GeneratorNetwork::random(net_rng, std::span<const Index>(net_widths),
                                              weight_scale_from_string(net_scale));
      save_manifest(globals.out, g);
      if (!net_obs.empty() || !net_xstar.empty()) {
        if (net_sigma2 < 0.0) throw ConfigError("make-network: sigma2 must be nonnegative");
        const Vector xs = gaussian_vector(x_rng, g.latent_dim(), 1.0);
        Vector y = forward(g, xs);
        if (net_sigma2 > 0.0)
          y += gaussian_vector(noise_rng, y.size(), net_sigma2 / static_cast<double>(y.size()));
        if (!net_obs.empty()) write_vector(net_obs, y);
        if (!net_xstar.empty()) write_vector(net_xstar, xs);
      }
    } else if (cmd_ae->parsed()) {
      std::vector<Index> widths{ae_k};
      widths.insert(widths.end(), ae_widths.begin(), ae_widths.end());
      const auto recs = attenuation_study(widths, ae_trials, ae_sigma2, globals.seed, globals.threads);
      with_output(globals.out, [&](std::ostream& os) { write_attenuation_csv(os, recs); });
      int conditioned = 0, violations = 0;
      for (const auto& r : recs) {
        if (r.local_spec_norm > 2.0) continue;
        ++conditioned;
        violations += r.ratio > r.bound;
      }
      std::cerr << "trials=" << recs.size() << " with ||U||^2<=2: " << conditioned << " above bound: " << violations
                << "\n";
    } else if (cmd_wdc->parsed()) {
      const auto recs = wdc_study(wdc_ns, wdc_k, wdc_pairs, wdc_seeds, globals.seed, globals.threads);
      with_output(globals.out, [&](std::ostream& os) { write_wdc_csv(os, wdc_k, wdc_pairs, wdc_ns, recs); });
    } else if (cmd_ls->parsed()) {
      std::vector<Index> widths{2};
      widths.insert(widths.end(), ls_widths.begin(), ls_widths.end());
      Rng root(globals.seed);
      Rng net_rng = root.derive(0), x_rng = root.derive(1), noise_rng = root.derive(2);
      const auto g = GeneratorNetwork::random(net_rng, std::span<const Index>(widths));
      const Vector xs = gaussian_vector(x_rng, 2, 1.0);
      Vector y = forward(g, xs);
      if (ls_sigma2 < 0.0) throw ConfigError("landscape: sigma2 must be nonnegative");
      if (ls_sigma2 > 0.0) y += gaussian_vector(noise_rng, y.size(), ls_sigma2 / static_cast<double>(y.size()));
      const auto surface = loss_surface(g, y, ls_extent, ls_grid);
      with_output(globals.out, [&](std::ostream& os) {
        os << "# x_star=" << fmt_double(xs[0]) << "," << fmt_double(xs[1]) << "\n";
        write_surface_csv(os, surface);
      });
      if (!ls_h_out.empty()) {
        const auto slices = h_slices(xs, ls_depths, ls_radii, ls_h_grid);
        with_output(ls_h_out, [&](std::ostream& os) { write_h_slices_csv(os, slices); });
      }
    } else if (cmd_rho->parsed()) {
      if (rho_max < 1) throw ConfigError("rho-table: --max-depth must be positive");
      with_output(globals.out, [&](std::ostream& os) { write_rho_table_csv(os, rho_max); });
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ManifestError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
