#pragma once

// Subgradient descent with the negation check, for denoising y = G(x_*) + eta
// and for compressed sensing z = A G(x_*) + eta.

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "genprior/errors.hpp"
#include "genprior/generator.hpp"
#include "genprior/numerics.hpp"

namespace genprior {

struct GroundTruth {
  Vector x_star;
  Vector y_star;  // G(x_star)
  double sigma2 = 0.0;
};

/// Observation plus the (shared, immutable) network. Without a measurement
/// matrix the problem is plain denoising; with one, `observation` holds the
/// m measurements z. The solver never reads `truth`.
class DenoiseProblem {
 public:
  DenoiseProblem(std::shared_ptr<const GeneratorNetwork> network, Vector observation,
                 std::optional<Matrix> measurement = std::nullopt,
                 std::optional<GroundTruth> truth = std::nullopt)
      : network_(std::move(network)),
        observation_(std::move(observation)),
        measurement_(std::move(measurement)),
        truth_(std::move(truth)) {
    if (!network_) throw ConfigError("DenoiseProblem: network is null");
    if (measurement_) {
      require_dims(measurement_->cols() == network_->output_dim(),
                   "DenoiseProblem: measurement matrix has " + std::to_string(measurement_->cols()) +
                       " columns, network output is " + std::to_string(network_->output_dim()));
      require_dims(observation_.size() == measurement_->rows(),
                   "DenoiseProblem: measurement vector length does not match measurement rows");
    } else {
      require_dims(observation_.size() == network_->output_dim(),
                   "DenoiseProblem: observation length does not match network output");
    }
    if (truth_) {
      require_latent(*network_, truth_->x_star);
      require_dims(truth_->y_star.size() == network_->output_dim(), "DenoiseProblem: y_star length mismatch");
    }
  }

  const GeneratorNetwork& network() const noexcept { return *network_; }
  const Vector& observation() const noexcept { return observation_; }
  const std::optional<Matrix>& measurement() const noexcept { return measurement_; }
  const std::optional<GroundTruth>& truth() const noexcept { return truth_; }
  bool compressed() const noexcept { return measurement_.has_value(); }

  // Residual in observation space: G(x) - y, or A G(x) - z.
  Vector residual(const Vector& generated) const {
    if (measurement_) return (*measurement_) * generated - observation_;
    return generated - observation_;
  }

  double loss(const Vector& x) const { return 0.5 * residual(forward(*network_, x)).squaredNorm(); }

 private:
  std::shared_ptr<const GeneratorNetwork> network_;
  Vector observation_;
  std::optional<Matrix> measurement_;
  std::optional<GroundTruth> truth_;
};

enum class NegationMode { every_iteration, on_convergence, disabled };

inline NegationMode negation_mode_from_string(const std::string& s) {
  if (s == "every") return NegationMode::every_iteration;
  if (s == "onconv") return NegationMode::on_convergence;
  if (s == "off") return NegationMode::disabled;
  throw ConfigError("unknown negation mode '" + s + "' (expected every, onconv or off)");
}

inline const char* to_string(NegationMode m) {
  switch (m) {
    case NegationMode::every_iteration: return "every";
    case NegationMode::on_convergence: return "onconv";
    case NegationMode::disabled: return "off";
  }
  return "unknown";
}

struct DescentConfig {
  double step_size = 0.1;
  int max_iters = 10000;
  double rel_step_tol = 1e-9;
  NegationMode negation = NegationMode::every_iteration;
  // Given start point; otherwise a seeded uniform direction scaled to init_norm.
  std::optional<Vector> init;
  double init_norm = 1.0;
  // Iterates are kept for every step below this count, then every 10th.
  int full_trace_iters = 1000;

  void validate() const {
    if (!(step_size > 0.0) || !std::isfinite(step_size)) throw ConfigError("step size must be positive");
    if (max_iters < 1) throw ConfigError("max_iters must be positive");
    if (!(rel_step_tol > 0.0)) throw ConfigError("rel_step_tol must be positive");
    if (!(init_norm > 0.0)) throw ConfigError("init_norm must be positive");
    if (init && init->norm() == 0.0) throw ConfigError("initial point must be nonzero");
  }
};

enum class Termination { converged, max_iters };

inline const char* to_string(Termination t) {
  return t == Termination::converged ? "converged" : "max_iters";
}

struct DescentTrace {
  std::vector<std::pair<int, Vector>> iterates;  // (iteration, x_i), thinned
  std::vector<double> losses;                    // f(x~_i) for every iteration
  std::vector<double> step_norms;                // ||v_{x~_i}||
  std::vector<int> negations;                    // iterations where x~_i = -x_i
  Termination termination = Termination::max_iters;
  Vector x_hat;
  Vector y_hat;
  double final_loss = 0.0;

  int iterations() const noexcept { return static_cast<int>(losses.size()); }
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, DescentTrace trace) : Error(what), trace_(std::move(trace)) {}
  const DescentTrace& trace() const noexcept { return trace_; }

 private:
  DescentTrace trace_;
};

/// Lambda_x^T (G(x) - y), or (A Lambda_x)^T (A G(x) - z) with measurements.
/// This is the gradient of f wherever f is differentiable; elsewhere it is
/// the element of the subdifferential selected by the strict-positivity mask.
inline Vector step_direction(const DenoiseProblem& problem, const Vector& x) {
  const Linearization lin(problem.network(), x);
  const Vector r = problem.residual(lin.output());
  if (problem.measurement()) return lin.apply_transpose(problem.measurement()->transpose() * r);
  return lin.apply_transpose(r);
}

namespace detail {

inline Vector initial_point(const DescentConfig& config, Index k, Rng& rng) {
  if (config.init) {
    require_dims(config.init->size() == k, "initial point has wrong dimension");
    return *config.init;
  }
  return random_unit_vector(rng, k) * config.init_norm;
}

}  // namespace detail

/// Runs the negation-checked subgradient method.
///
/// Each iteration: x~ = -x if the check is active and f(-x) < f(x), else x;
/// then x <- x~ - alpha * v(x~). Stops when ||x_{i+1} - x~_i|| / ||x~_i|| drops
/// below rel_step_tol. In on_convergence mode the sign check runs only at
/// that point and descent resumes whenever negation lowers f.
inline DescentTrace run(const DenoiseProblem& problem, const DescentConfig& config, Rng& rng) {
  config.validate();
  const GeneratorNetwork& net = problem.network();
  DescentTrace trace;
  Vector x = detail::initial_point(config, net.latent_dim(), rng);

  auto keep_iterate = [&](int it, const Vector& v) {
    if (it < config.full_trace_iters || it % 10 == 0) trace.iterates.emplace_back(it, v);
  };
  auto diverged = [&](const std::string& why) {
    trace.x_hat = x;
    trace.final_loss = std::numeric_limits<double>::quiet_NaN();
    throw DivergenceError("descent diverged: " + why, std::move(trace));
  };

  for (int it = 0; it < config.max_iters; ++it) {
    keep_iterate(it, x);
    Linearization lin(net, x);
    Vector r = problem.residual(lin.output());
    double fx = 0.5 * r.squaredNorm();
    if (!std::isfinite(fx)) diverged("non-finite loss at iteration " + std::to_string(it));

    if (config.negation == NegationMode::every_iteration) {
      const Vector neg = -x;
      Linearization lin_neg(net, neg);
      Vector r_neg = problem.residual(lin_neg.output());
      const double f_neg = 0.5 * r_neg.squaredNorm();
      if (f_neg < fx) {
        x = neg;
        lin = std::move(lin_neg);
        r = std::move(r_neg);
        fx = f_neg;
        trace.negations.push_back(it);
      }
    }

    const Vector v = problem.measurement() ? lin.apply_transpose(problem.measurement()->transpose() * r)
                                           : lin.apply_transpose(r);
    trace.losses.push_back(fx);
    trace.step_norms.push_back(v.norm());

    const Vector next = x - config.step_size * v;
    if (!next.allFinite()) diverged("non-finite iterate at iteration " + std::to_string(it));
    const double rel_step = (next - x).norm() / std::max(x.norm(), 1e-300);
    x = next;

    if (rel_step < config.rel_step_tol) {
      if (config.negation == NegationMode::on_convergence) {
        const Vector neg = -x;
        if (problem.loss(neg) < problem.loss(x)) {
          x = neg;
          trace.negations.push_back(it);
          continue;
        }
      }
      trace.termination = Termination::converged;
      break;
    }
  }

  trace.x_hat = x;
  trace.y_hat = forward(net, x);
  trace.final_loss = 0.5 * problem.residual(trace.y_hat).squaredNorm();
  if (!std::isfinite(trace.final_loss)) diverged("non-finite final loss");
  return trace;
}

struct Metrics {
  double mse_latent = 0.0;             // ||x_hat - x_*||^2
  double mse_image = 0.0;              // ||G(x_hat) - G(x_*)||^2
  double mse_latent_normalized = 0.0;  // / ||x_*||^2
  double mse_image_normalized = 0.0;   // / ||G(x_*)||^2
  double noise_energy = 0.0;           // ||y - y_*||^2 (||z - A y_*||^2 with measurements)
};

inline Metrics evaluate(const DenoiseProblem& problem, const DescentTrace& trace) {
  if (!problem.truth()) throw ConfigError("evaluate: problem carries no ground truth");
  const GroundTruth& t = *problem.truth();
  Metrics m;
  m.mse_latent = (trace.x_hat - t.x_star).squaredNorm();
  const Vector y_hat = trace.y_hat.size() ? trace.y_hat : forward(problem.network(), trace.x_hat);
  m.mse_image = (y_hat - t.y_star).squaredNorm();
  const double xs2 = t.x_star.squaredNorm();
  const double ys2 = t.y_star.squaredNorm();
  m.mse_latent_normalized = xs2 > 0.0 ? m.mse_latent / xs2 : m.mse_latent;
  m.mse_image_normalized = ys2 > 0.0 ? m.mse_image / ys2 : m.mse_image;
  m.noise_energy = problem.residual(t.y_star).squaredNorm();
  return m;
}

enum class OmegaVariant { main, lemma };

/// omega = sqrt(c sigma^2 (k/n) log(n_1^d n_2^(d-1) ... n_d)) with c = 18
/// (main) or 16 (lemma). `widths` are [n_1, ..., n_d]; the log of the width
/// product is summed term by term.
inline double noise_scale_omega(double sigma2, Index k, const std::vector<Index>& widths,
                                OmegaVariant variant = OmegaVariant::main) {
  if (widths.empty()) throw ConfigError("noise_scale_omega: need at least one width");
  for (Index w : widths)
    if (w <= 0) throw ConfigError("noise_scale_omega: widths must be positive");
  const double coeff = variant == OmegaVariant::main ? 18.0 : 16.0;
  const std::size_t d = widths.size();
  double log_product = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    log_product += static_cast<double>(d - i) * std::log(static_cast<double>(widths[i]));
  const double n = static_cast<double>(widths.back());
  return std::sqrt(coeff * sigma2 * (static_cast<double>(k) / n) * log_product);
}

}  // namespace genprior
