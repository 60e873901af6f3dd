#pragma once

// Seeded synthetic sweeps: plant x_* ~ N(0, I_k), observe y = G(x_*) + eta (or
// z = A G(x_*) + eta), recover with the negation-checked descent, record errors.

#include <charconv>
#include <cmath>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "genprior/denoiser.hpp"
#include "genprior/errors.hpp"
#include "genprior/generator.hpp"
#include "genprior/numerics.hpp"
#include "genprior/parallel.hpp"

namespace genprior {

// Shortest round-trip decimal form; stable across runs and thread counts.
inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

enum class SweepMode { sweep_k, sweep_sigma, cs_sweep };

inline const char* to_string(SweepMode m) {
  switch (m) {
    case SweepMode::sweep_k: return "sweep_k";
    case SweepMode::sweep_sigma: return "sweep_sigma";
    case SweepMode::cs_sweep: return "cs_sweep";
  }
  return "?";
}

struct SweepConfig {
  SweepMode mode = SweepMode::sweep_sigma;
  std::vector<Index> widths{500, 1500};  // [n_1, ..., n_d]; k is prepended per point
  Index k = 50;                          // fixed latent dim (sweep_sigma, cs_sweep)
  double sigma2 = 0.25;                  // fixed noise variance (sweep_k)
  Index m = 750;                         // measurements (cs_sweep)
  std::vector<double> values{0.0, 0.05, 0.1, 0.15, 0.2, 0.25};
  int trials = 20;
  std::uint64_t base_seed = 1;
  DescentConfig descent{};
  unsigned threads = 1;

  Index output_dim() const { return widths.back(); }

  void validate() const {
    if (values.empty()) throw ConfigError("sweep: swept value list is empty");
    if (trials < 1) throw ConfigError("sweep: trials must be at least 1");
    if (widths.empty()) throw ConfigError("sweep: widths must be nonempty");
    for (std::size_t i = 1; i < widths.size(); ++i)
      if (widths[i] <= widths[i - 1]) throw ConfigError("sweep: widths must be strictly increasing");
    if (mode == SweepMode::sweep_k) {
      for (double v : values)
        if (v < 1 || v != std::floor(v) || static_cast<Index>(v) >= widths.front())
          throw ConfigError("sweep_k: k values must be integers in [1, n_1)");
      if (!(sigma2 >= 0.0)) throw ConfigError("sweep_k: sigma2 must be nonnegative");
    } else {
      for (double v : values)
        if (!(v >= 0.0)) throw ConfigError("sweep: sigma2 values must be nonnegative");
      if (k < 1 || k >= widths.front()) throw ConfigError("sweep: k must be in [1, n_1)");
    }
    if (mode == SweepMode::cs_sweep && (m < 1 || m > output_dim()))
      throw ConfigError("cs_sweep: m must be in [1, n]");
    descent.validate();
  }
};

struct SweepRow {
  std::size_t point = 0;
  int trial = 0;  // -1 marks the per-point mean row
  std::uint64_t seed = 0;
  Index k = 0;
  Index n = 0;
  Index m = 0;
  double sigma2 = 0.0;
  double mse_latent = 0.0;
  double mse_image = 0.0;
  double mse_latent_normalized = 0.0;
  double mse_image_normalized = 0.0;
  double noise_energy = 0.0;
  double iters = 0.0;
  double negations = 0.0;
  std::string status;

  bool is_mean() const noexcept { return trial < 0; }
};

inline std::uint64_t trial_seed(std::uint64_t base, std::size_t point, int trial) {
  return derive_seed(base, static_cast<std::uint64_t>(point) * 1000000ULL + static_cast<std::uint64_t>(trial));
}

/// One synthetic trial. Streams of the trial seed: 0 network, 1 x_*, 2 noise,
/// 3 measurement matrix, 4 descent init.
inline SweepRow run_trial(const SweepConfig& cfg, std::size_t point, int trial) {
  const double value = cfg.values[point];
  SweepRow row;
  row.point = point;
  row.trial = trial;
  row.seed = trial_seed(cfg.base_seed, point, trial);
  row.k = cfg.mode == SweepMode::sweep_k ? static_cast<Index>(value) : cfg.k;
  row.sigma2 = cfg.mode == SweepMode::sweep_k ? cfg.sigma2 : value;
  row.n = cfg.output_dim();
  row.m = cfg.mode == SweepMode::cs_sweep ? cfg.m : row.n;

  const Rng root(row.seed);
  Rng net_rng = root.derive(0);
  Rng x_rng = root.derive(1);
  Rng noise_rng = root.derive(2);
  Rng a_rng = root.derive(3);
  Rng init_rng = root.derive(4);

  std::vector<Index> widths{row.k};
  widths.insert(widths.end(), cfg.widths.begin(), cfg.widths.end());
  auto net = std::make_shared<const GeneratorNetwork>(GeneratorNetwork::random(net_rng, widths));
  Vector x_star = gaussian_vector(x_rng, row.k, 1.0);
  Vector y_star = forward(*net, x_star);
  const double noise_var = row.sigma2 / static_cast<double>(row.n);

  std::optional<Matrix> a;
  Vector obs;
  if (cfg.mode == SweepMode::cs_sweep) {
    a = gaussian_matrix(a_rng, row.m, row.n, 1.0 / static_cast<double>(row.m));
    obs = (*a) * y_star;
  } else {
    obs = y_star;
  }
  if (noise_var > 0.0) obs += gaussian_vector(noise_rng, obs.size(), noise_var);

  DenoiseProblem problem(net, std::move(obs), std::move(a), GroundTruth{x_star, y_star, row.sigma2});
  DescentConfig dc = cfg.descent;
  if (!dc.init) dc.init_norm = std::sqrt(static_cast<double>(row.k));
  try {
    const DescentTrace trace = run(problem, dc, init_rng);
    const Metrics met = evaluate(problem, trace);
    row.mse_latent = met.mse_latent;
    row.mse_image = met.mse_image;
    row.mse_latent_normalized = met.mse_latent_normalized;
    row.mse_image_normalized = met.mse_image_normalized;
    row.noise_energy = met.noise_energy;
    row.iters = trace.iterations();
    row.negations = static_cast<double>(trace.negations.size());
    row.status = to_string(trace.termination);
  } catch (const DivergenceError& e) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.mse_latent = row.mse_image = row.mse_latent_normalized = row.mse_image_normalized = nan;
    row.noise_energy = problem.residual(y_star).squaredNorm();
    row.iters = e.trace().iterations();
    row.negations = static_cast<double>(e.trace().negations.size());
    row.status = "diverged";
  }
  return row;
}

/// All trials of all points, trial rows in (point, trial) order with each
/// point's mean row after its trials. Means skip diverged trials.
inline std::vector<SweepRow> run_sweep(const SweepConfig& cfg) {
  cfg.validate();
  const std::size_t points = cfg.values.size();
  const std::size_t per_point = static_cast<std::size_t>(cfg.trials);
  std::vector<SweepRow> trials(points * per_point);
  parallel_for(trials.size(), resolve_threads(cfg.threads), [&](std::size_t idx) {
    trials[idx] = run_trial(cfg, idx / per_point, static_cast<int>(idx % per_point));
  });

  std::vector<SweepRow> rows;
  rows.reserve(trials.size() + points);
  for (std::size_t p = 0; p < points; ++p) {
    SweepRow mean;
    mean.point = p;
    mean.trial = -1;
    mean.seed = cfg.base_seed;
    int used = 0;
    int diverged = 0;
    for (std::size_t t = 0; t < per_point; ++t) {
      const SweepRow& r = trials[p * per_point + t];
      rows.push_back(r);
      mean.k = r.k;
      mean.n = r.n;
      mean.m = r.m;
      mean.sigma2 = r.sigma2;
      if (r.status == "diverged") {
        ++diverged;
        continue;
      }
      ++used;
      mean.mse_latent += r.mse_latent;
      mean.mse_image += r.mse_image;
      mean.mse_latent_normalized += r.mse_latent_normalized;
      mean.mse_image_normalized += r.mse_image_normalized;
      mean.noise_energy += r.noise_energy;
      mean.iters += r.iters;
      mean.negations += r.negations;
    }
    const double denom = used > 0 ? used : std::numeric_limits<double>::quiet_NaN();
    mean.mse_latent /= denom;
    mean.mse_image /= denom;
    mean.mse_latent_normalized /= denom;
    mean.mse_image_normalized /= denom;
    mean.noise_energy /= denom;
    mean.iters /= denom;
    mean.negations /= denom;
    mean.status = diverged ? "mean_diverged_" + std::to_string(diverged) : "mean";
    rows.push_back(mean);
  }
  return rows;
}

inline std::vector<SweepRow> mean_rows(const std::vector<SweepRow>& rows) {
  std::vector<SweepRow> out;
  for (const auto& r : rows)
    if (r.is_mean()) out.push_back(r);
  return out;
}

inline constexpr const char* kSweepHeader =
    "point,trial,seed,k,n,m,sigma2,mse_latent,mse_image,noise_energy,iters,negations,status";

inline void write_sweep_csv(std::ostream& out, const SweepConfig& cfg, const std::vector<SweepRow>& rows) {
  out << "# mode=" << to_string(cfg.mode) << "\n";
  out << "# widths=";
  for (std::size_t i = 0; i < cfg.widths.size(); ++i) out << (i ? "," : "") << cfg.widths[i];
  out << "\n";
  if (cfg.mode == SweepMode::sweep_k)
    out << "# sigma2=" << fmt_double(cfg.sigma2) << "\n";
  else
    out << "# k=" << cfg.k << "\n";
  if (cfg.mode == SweepMode::cs_sweep) out << "# m=" << cfg.m << "\n";
  out << "# values=";
  for (std::size_t i = 0; i < cfg.values.size(); ++i) out << (i ? "," : "") << fmt_double(cfg.values[i]);
  out << "\n";
  out << "# trials=" << cfg.trials << " base_seed=" << cfg.base_seed << "\n";
  out << "# alpha=" << fmt_double(cfg.descent.step_size) << " max_iters=" << cfg.descent.max_iters
      << " tol=" << fmt_double(cfg.descent.rel_step_tol) << " negation=" << to_string(cfg.descent.negation) << "\n";
  out << kSweepHeader << "\n";
  for (const auto& r : rows) {
    out << r.point << ',' << (r.is_mean() ? std::string("mean") : std::to_string(r.trial)) << ',' << r.seed << ','
        << r.k << ',' << r.n << ',' << r.m << ',' << fmt_double(r.sigma2) << ',' << fmt_double(r.mse_latent) << ','
        << fmt_double(r.mse_image) << ',' << fmt_double(r.noise_energy) << ',' << fmt_double(r.iters) << ','
        << fmt_double(r.negations) << ',' << r.status << "\n";
  }
}

inline std::string sweep_csv(const SweepConfig& cfg, const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  write_sweep_csv(out, cfg, rows);
  return out.str();
}

}  // namespace genprior
