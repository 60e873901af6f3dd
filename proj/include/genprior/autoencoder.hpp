#pragma once

// Hourglass network H = G o E with a one-layer ReLU encoder, and the noise
// attenuation it achieves by construction.

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "genprior/errors.hpp"
#include "genprior/generator.hpp"
#include "genprior/numerics.hpp"

namespace genprior {

class Autoencoder {
 public:
  // encoder is k x n, decoder maps R^k -> R^n.
  Autoencoder(Matrix encoder, GeneratorNetwork decoder)
      : encoder_(std::move(encoder)), decoder_(std::move(decoder)) {
    require_dims(encoder_.rows() == decoder_.latent_dim(),
                 "Autoencoder: encoder has " + std::to_string(encoder_.rows()) + " rows, decoder expects " +
                     std::to_string(decoder_.latent_dim()));
    require_dims(encoder_.cols() == decoder_.output_dim(),
                 "Autoencoder: encoder input width must equal decoder output width");
  }

  /// Random hourglass with decoder widths [k, n_1, ..., n_d] (two_over_fanout)
  /// and encoder entries N(0, 1/n), n = n_d.
  static Autoencoder random(Rng& rng, std::span<const Index> decoder_widths) {
    GeneratorNetwork dec = GeneratorNetwork::random(rng, decoder_widths, WeightScale::two_over_fanout);
    const Index n = dec.output_dim();
    Matrix enc = gaussian_matrix(rng, dec.latent_dim(), n, 1.0 / static_cast<double>(n));
    return Autoencoder(std::move(enc), std::move(dec));
  }

  const Matrix& encoder() const noexcept { return encoder_; }
  const GeneratorNetwork& decoder() const noexcept { return decoder_; }
  Index latent_dim() const noexcept { return encoder_.rows(); }
  Index signal_dim() const noexcept { return encoder_.cols(); }

  Vector encode(const Vector& y) const {
    require_dims(y.size() == signal_dim(), "Autoencoder: input length " + std::to_string(y.size()) +
                                               ", expected " + std::to_string(signal_dim()));
    return (encoder_ * y).cwiseMax(0.0);
  }

 private:
  Matrix encoder_;
  GeneratorNetwork decoder_;
};

// H(y) = G(relu(W' y))
inline Vector apply(const Autoencoder& h, const Vector& y) { return forward(h.decoder(), h.encode(y)); }

/// U with H(y) = U y on the linear region of y:
/// Lambda_{E(y)} diag(W' y > 0) W'. rank(U) <= k.
inline Matrix local_linearization(const Autoencoder& h, const Vector& y) {
  const Matrix masked_encoder = active_weights(h.encoder(), y);
  const Vector code = (h.encoder() * y).cwiseMax(0.0);
  return lambda_matrix(h.decoder(), code) * masked_encoder;
}

// log(2^k n_1^k ... n_d^k), the log of the bound on the number of k-dim
// subspaces the piecewise linear map can land in.
inline double count_region_bound(const std::vector<Index>& widths, Index k) {
  double sum = 0.0;
  for (Index w : widths) {
    if (w <= 0) throw ConfigError("count_region_bound: widths must be positive");
    sum += std::log(static_cast<double>(w));
  }
  return static_cast<double>(k) * (std::log(2.0) + sum);
}

// 5 (k/n) log(2 n_1 ... n_d)
inline double attenuation_bound(Index k, const std::vector<Index>& widths) {
  double log_prod = std::log(2.0);
  for (Index w : widths) log_prod += std::log(static_cast<double>(w));
  return 5.0 * static_cast<double>(k) / static_cast<double>(widths.back()) * log_prod;
}

struct AttenuationRecord {
  double ratio = 0.0;            // ||H(eta)||^2 / ||eta||^2
  double bound = 0.0;            // 5 (k/n) log(2 n_1 ... n_d)
  double local_spec_norm = 0.0;  // ||U||^2 on eta's linear region
};

// Decoder widths [n_1, ..., n_d] (excluding k).
inline std::vector<Index> decoder_layer_widths(const Autoencoder& h) {
  const auto& w = h.decoder().widths();
  return std::vector<Index>(w.begin() + 1, w.end());
}

/// One noise draw eta ~ N(0, sigma2/n I). The ||U||^2 <= 2 hypothesis is only
/// measured here; callers filter on local_spec_norm.
inline AttenuationRecord attenuation_trial(const Autoencoder& h, Rng& rng, double sigma2) {
  if (!(sigma2 > 0.0)) throw ConfigError("attenuation_trial: sigma2 must be positive");
  const Index n = h.signal_dim();
  const Vector eta = gaussian_vector(rng, n, sigma2 / static_cast<double>(n));
  AttenuationRecord rec;
  const double eta2 = eta.squaredNorm();
  rec.ratio = eta2 > 0.0 ? apply(h, eta).squaredNorm() / eta2 : 0.0;
  rec.bound = attenuation_bound(h.latent_dim(), decoder_layer_widths(h));
  double norm;
  try {
    norm = spectral_norm(local_linearization(h, eta));
  } catch (const ConvergenceError& e) {
    norm = e.best_estimate();
  }
  rec.local_spec_norm = norm * norm;
  return rec;
}

// Closest point to y in the column span of `basis`.
inline Vector subspace_denoise(const Matrix& basis, const Vector& y) { return project_onto_span(basis, y); }

}  // namespace genprior
