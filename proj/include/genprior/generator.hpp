#pragma once

// Fully connected bias-free ReLU generator G(x) = relu(W_d ... relu(W_1 x) ...).

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "genprior/errors.hpp"
#include "genprior/numerics.hpp"

namespace genprior {

// Weight variance convention for random layers. W_i has n_i rows.
enum class WeightScale {
  two_over_fanout,  // N(0, 2/n_i)
  one_over_fanout,  // N(0, 1/n_i), the rescaled model used by the landscape analysis
  external,         // loaded from disk, no distributional claim
};

inline std::string to_string(WeightScale s) {
  switch (s) {
    case WeightScale::two_over_fanout: return "two_over_fanout";
    case WeightScale::one_over_fanout: return "one_over_fanout";
    case WeightScale::external: return "external";
  }
  return "external";
}

inline WeightScale weight_scale_from_string(const std::string& s) {
  if (s == "two_over_fanout") return WeightScale::two_over_fanout;
  if (s == "one_over_fanout") return WeightScale::one_over_fanout;
  if (s == "external") return WeightScale::external;
  throw ConfigError("unknown weight scale '" + s + "'");
}

inline double layer_variance(WeightScale s, Index rows) {
  switch (s) {
    case WeightScale::two_over_fanout: return 2.0 / static_cast<double>(rows);
    case WeightScale::one_over_fanout: return 1.0 / static_cast<double>(rows);
    case WeightScale::external: break;
  }
  throw ConfigError("random layers need a two_over_fanout or one_over_fanout scale");
}

class GeneratorNetwork {
 public:
  explicit GeneratorNetwork(std::vector<Matrix> weights, WeightScale scale = WeightScale::external)
      : weights_(std::move(weights)), scale_(scale) {
    require_dims(!weights_.empty(), "GeneratorNetwork: need at least one layer");
    widths_.push_back(weights_.front().cols());
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      const Matrix& w = weights_[i];
      require_dims(w.rows() >= 1 && w.cols() >= 1,
                   "GeneratorNetwork: layer " + std::to_string(i + 1) + " is empty");
      require_dims(w.cols() == widths_.back(),
                   "GeneratorNetwork: layer " + std::to_string(i + 1) + " has " +
                       std::to_string(w.cols()) + " columns, expected " +
                       std::to_string(widths_.back()));
      widths_.push_back(w.rows());
    }
  }

  /// Random expansive network with widths [k, n_1, ..., n_d]. Widths must be
  /// strictly increasing.
  static GeneratorNetwork random(Rng& rng, std::span<const Index> widths,
                                 WeightScale scale = WeightScale::two_over_fanout) {
    if (widths.size() < 2) throw ConfigError("random network needs at least two widths");
    for (std::size_t i = 1; i < widths.size(); ++i) {
      if (widths[i] <= widths[i - 1] || widths[i - 1] < 1)
        throw ConfigError("random network widths must be positive and strictly increasing");
    }
    std::vector<Matrix> layers;
    layers.reserve(widths.size() - 1);
    for (std::size_t i = 1; i < widths.size(); ++i) {
      layers.push_back(gaussian_matrix(rng, widths[i], widths[i - 1], layer_variance(scale, widths[i])));
    }
    return GeneratorNetwork(std::move(layers), scale);
  }

  static GeneratorNetwork random(Rng& rng, std::initializer_list<Index> widths,
                                 WeightScale scale = WeightScale::two_over_fanout) {
    const std::vector<Index> w(widths);
    return random(rng, std::span<const Index>(w), scale);
  }

  std::size_t depth() const noexcept { return weights_.size(); }
  Index latent_dim() const noexcept { return widths_.front(); }
  Index output_dim() const noexcept { return widths_.back(); }
  const std::vector<Index>& widths() const noexcept { return widths_; }
  const std::vector<Matrix>& weights() const noexcept { return weights_; }
  const Matrix& layer(std::size_t i) const { return weights_.at(i); }
  WeightScale scale() const noexcept { return scale_; }

  bool expansive() const noexcept {
    for (std::size_t i = 1; i < widths_.size(); ++i)
      if (widths_[i] <= widths_[i - 1]) return false;
    return true;
  }

 private:
  std::vector<Matrix> weights_;
  std::vector<Index> widths_;
  WeightScale scale_;
};

// Per-layer ReLU masks: masks[i][r] is true iff row r of layer i+1 has a
// strictly positive pre-activation.
struct ActivationPattern {
  std::vector<Eigen::Array<bool, Eigen::Dynamic, 1>> masks;

  bool operator==(const ActivationPattern& other) const {
    if (masks.size() != other.masks.size()) return false;
    for (std::size_t i = 0; i < masks.size(); ++i) {
      if (masks[i].size() != other.masks[i].size() || (masks[i] != other.masks[i]).any()) return false;
    }
    return true;
  }
};

/// The local linear map of G at a point, kept in factored form (weights plus
/// masks). `apply` computes Lambda_x v and `apply_transpose` computes
/// Lambda_x^T r without forming the n x k product.
class Linearization {
 public:
  Linearization(const GeneratorNetwork& g, const Vector& x) : net_(&g) {
    require_dims(x.size() == g.latent_dim(), "linearize: latent vector has length " +
                                                 std::to_string(x.size()) + ", expected " +
                                                 std::to_string(g.latent_dim()));
    Vector v = x;
    pattern_.masks.reserve(g.depth());
    for (const Matrix& w : g.weights()) {
      Vector pre = w * v;
      pattern_.masks.emplace_back(pre.array() > 0.0);
      v = pre.cwiseMax(0.0);
    }
    output_ = std::move(v);
  }

  const Vector& output() const noexcept { return output_; }
  const ActivationPattern& pattern() const noexcept { return pattern_; }

  Vector apply(const Vector& v) const {
    Vector out = v;
    for (std::size_t i = 0; i < net_->depth(); ++i) {
      out = (net_->layer(i) * out).cwiseProduct(pattern_.masks[i].cast<double>().matrix());
    }
    return out;
  }

  Vector apply_transpose(const Vector& r) const {
    require_dims(r.size() == net_->output_dim(), "Linearization: residual length mismatch");
    Vector out = r;
    for (std::size_t i = net_->depth(); i-- > 0;) {
      out = net_->layer(i).transpose() * out.cwiseProduct(pattern_.masks[i].cast<double>().matrix());
    }
    return out;
  }

 private:
  const GeneratorNetwork* net_;
  ActivationPattern pattern_;
  Vector output_;
};

inline void require_latent(const GeneratorNetwork& g, const Vector& x) {
  require_dims(x.size() == g.latent_dim(), "latent vector has length " + std::to_string(x.size()) +
                                               ", expected " + std::to_string(g.latent_dim()));
}

inline Vector forward(const GeneratorNetwork& g, const Vector& x) {
  require_latent(g, x);
  Vector v = x;
  for (const Matrix& w : g.weights()) v = (w * v).cwiseMax(0.0);
  return v;
}

inline ActivationPattern activation_pattern(const GeneratorNetwork& g, const Vector& x) {
  return Linearization(g, x).pattern();
}

// diag(W v > 0) W. A zero dot product counts as inactive.
inline Matrix active_weights(const Matrix& w, const Vector& v) {
  require_dims(v.size() == w.cols(), "active_weights: vector length does not match columns");
  const Vector pre = w * v;
  Matrix out = w;
  for (Index r = 0; r < w.rows(); ++r)
    if (!(pre[r] > 0.0)) out.row(r).setZero();
  return out;
}

// [W_{1,+,x}, ..., W_{d,+,x}]: each layer masked by its own pre-activation
// along the forward pass of x.
inline std::vector<Matrix> layer_active_weights(const GeneratorNetwork& g, const Vector& x) {
  require_latent(g, x);
  std::vector<Matrix> out;
  out.reserve(g.depth());
  Vector v = x;
  for (const Matrix& w : g.weights()) {
    out.push_back(active_weights(w, v));
    v = (w * v).cwiseMax(0.0);
  }
  return out;
}

// Lambda_x = W_{d,+,x} ... W_{1,+,x}, an explicit n x k matrix.
inline Matrix lambda_matrix(const GeneratorNetwork& g, const Vector& x) {
  const std::vector<Matrix> layers = layer_active_weights(g, x);
  Matrix product = layers.front();
  for (std::size_t i = 1; i < layers.size(); ++i) product = layers[i] * product;
  return product;
}

// f(x) = 1/2 ||G(x) - y||^2
inline double loss(const GeneratorNetwork& g, const Vector& y, const Vector& x) {
  require_dims(y.size() == g.output_dim(), "loss: observation length does not match network output");
  return 0.5 * (forward(g, x) - y).squaredNorm();
}

}  // namespace genprior
