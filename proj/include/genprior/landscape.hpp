#pragma once

// Closed-form quantities describing the expected loss landscape of a random
// ReLU generator: the angle map g, the target direction h_x, the constant
// rho_d locating the spurious critical point, and the Weight Distribution
// Condition matrices.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "genprior/errors.hpp"
#include "genprior/generator.hpp"
#include "genprior/numerics.hpp"

namespace genprior {

namespace detail {

// acos with the argument clamped to [-1, 1]; anything further out than the
// guard is a logic error, not rounding.
inline double clamped_acos(double arg) {
  constexpr double guard = 1e-12;
  if (!(arg >= -1.0 - guard && arg <= 1.0 + guard))
    throw DomainError("acos argument " + std::to_string(arg) + " outside [-1, 1]");
  return std::acos(std::clamp(arg, -1.0, 1.0));
}

}  // namespace detail

/// Angle between nonzero vectors, in [0, pi]. Uses
/// 2 atan2(||a^ - b^||, ||a^ + b^||), which stays accurate near 0 and pi and
/// returns exactly 0 for a == b.
inline double angle_between(const Vector& a, const Vector& b) {
  require_dims(a.size() == b.size(), "angle_between: length mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw DomainError("angle_between: zero vector");
  const Vector ah = a / na;
  const Vector bh = b / nb;
  return 2.0 * std::atan2((ah - bh).norm(), (ah + bh).norm());
}

// g(theta) = acos(((pi - theta) cos theta + sin theta) / pi)
inline double g_theta(double theta) {
  if (!(theta >= 0.0 && theta <= kPi))
    throw DomainError("g_theta: theta = " + std::to_string(theta) + " outside [0, pi]");
  return detail::clamped_acos(((kPi - theta) * std::cos(theta) + std::sin(theta)) / kPi);
}

// [theta_0, g(theta_0), g(g(theta_0)), ...], `count` entries.
inline std::vector<double> angle_sequence(double theta0, std::size_t count) {
  std::vector<double> out;
  out.reserve(count);
  double t = theta0;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(t);
    t = g_theta(t);
  }
  return out;
}

// prod_i (pi - theta_i) / pi
inline double xi_of(const std::vector<double>& thetas) {
  double p = 1.0;
  for (double t : thetas) p *= (kPi - t) / kPi;
  return p;
}

// sum_i sin(theta_i)/pi * prod_{j>i} (pi - theta_j)/pi
inline double zeta_of(const std::vector<double>& thetas) {
  double sum = 0.0;
  double tail = 1.0;  // product over j > i, accumulated from the back
  for (std::size_t i = thetas.size(); i-- > 0;) {
    sum += std::sin(thetas[i]) / kPi * tail;
    tail *= (kPi - thetas[i]) / kPi;
  }
  return sum;
}

// theta-check sequence: theta_0 = pi, theta_i = g(theta_{i-1}).
inline std::vector<double> theta_check(std::size_t count) { return angle_sequence(kPi, count); }

/// rho_d = zeta evaluated along the theta-check sequence of length d. The
/// spurious critical point of the expected loss sits at -rho_d x_*.
inline double rho(int d) {
  if (d < 1) throw DomainError("rho: depth must be positive");
  return zeta_of(theta_check(static_cast<std::size_t>(d)));
}

struct HDecomposition {
  Vector h;
  double xi = 0.0;
  double zeta = 0.0;
  std::vector<double> theta_bar;
};

struct BallCoverReport {
  enum class Status { ok, violated, not_applicable };
  Status status = Status::not_applicable;
  std::size_t samples = 0;
  std::size_t members = 0;
  std::size_t violations = 0;
  std::optional<Vector> counterexample;
  double radius_plus = 0.0;   // ball around x_*
  double radius_minus = 0.0;  // ball around -rho_d x_*
};

/// Everything indexed by (x_*, d): the theta-check sequence, rho_d, and the
/// evaluators for h_x and S_beta membership. Immutable after construction.
class LandscapeContext {
 public:
  LandscapeContext(Vector x_star, int depth) : x_star_(std::move(x_star)), depth_(depth) {
    if (depth_ < 1) throw DomainError("LandscapeContext: depth must be positive");
    x_star_norm_ = x_star_.norm();
    if (x_star_.size() == 0 || x_star_norm_ == 0.0)
      throw DomainError("LandscapeContext: x_star must be nonzero");
    theta_check_ = theta_check(static_cast<std::size_t>(depth_));
    rho_ = zeta_of(theta_check_);
    scale_ = std::ldexp(1.0, -depth_);
  }

  const Vector& x_star() const noexcept { return x_star_; }
  int depth() const noexcept { return depth_; }
  double rho_d() const noexcept { return rho_; }
  const std::vector<double>& theta_check_values() const noexcept { return theta_check_; }

  /// h_x = -2^-d xi x_* + 2^-d (x - zeta ||x_*|| / ||x|| x)
  HDecomposition h(const Vector& x) const {
    require_dims(x.size() == x_star_.size(), "h_of_x: dimension mismatch");
    const double xn = x.norm();
    if (xn == 0.0) throw DomainError("h_of_x: x must be nonzero");
    HDecomposition out;
    out.theta_bar = angle_sequence(angle_between(x, x_star_), static_cast<std::size_t>(depth_));
    out.xi = xi_of(out.theta_bar);
    out.zeta = zeta_of(out.theta_bar);
    out.h = scale_ * (-out.xi * x_star_ + (x - (out.zeta * x_star_norm_ / xn) * x));
    return out;
  }

  // ||h_x|| <= 2^-d beta max(||x||, ||x_*||)
  bool s_beta_member(const Vector& x, double beta) const {
    if (!(beta >= 0.0)) throw DomainError("s_beta_member: beta must be nonnegative");
    const double hn = h(x).h.norm();
    return hn <= scale_ * beta * std::max(x.norm(), x_star_norm_);
  }

  // The hypothesis 64 d^6 sqrt(beta) <= 1 under which S_beta is covered by
  // B(x_*, 5000 d^6 beta ||x_*||) and B(-rho_d x_*, 500 d^11 sqrt(beta) ||x_*||).
  bool ball_cover_applicable(double beta) const {
    const double d = depth_;
    return beta >= 0.0 && 64.0 * std::pow(d, 6) * std::sqrt(beta) <= 1.0;
  }

  double ball_radius_plus(double beta) const { return 5000.0 * std::pow(depth_, 6) * beta * x_star_norm_; }
  double ball_radius_minus(double beta) const {
    return 500.0 * std::pow(depth_, 11) * std::sqrt(beta) * x_star_norm_;
  }

  bool in_cover(const Vector& x, double beta) const {
    return (x - x_star_).norm() <= ball_radius_plus(beta) ||
           (x + rho_ * x_star_).norm() <= ball_radius_minus(beta);
  }

  /// Samples points, keeps those in S_beta and checks each lies in the union
  /// of the two balls. Sampling mixes broad draws (radius up to 3||x_*||) with
  /// log-scale perturbations around x_* and -rho_d x_*, where members live.
  BallCoverReport ball_cover_check(double beta, std::size_t num_samples, Rng& rng) const {
    BallCoverReport rep;
    rep.radius_plus = ball_radius_plus(beta);
    rep.radius_minus = ball_radius_minus(beta);
    if (!ball_cover_applicable(beta)) return rep;
    rep.status = BallCoverReport::Status::ok;
    const Index k = x_star_.size();
    for (std::size_t s = 0; s < num_samples; ++s) {
      Vector x;
      switch (s % 3) {
        case 0:
          x = random_unit_vector(rng, k) * (3.0 * x_star_norm_ * rng.uniform());
          break;
        case 1:
        case 2: {
          const Vector center = (s % 3 == 1) ? Vector(x_star_) : Vector(-rho_ * x_star_);
          const double r = std::pow(10.0, -12.0 + 12.0 * rng.uniform()) * x_star_norm_;
          x = center + r * random_unit_vector(rng, k);
          break;
        }
      }
      if (x.norm() == 0.0) continue;
      ++rep.samples;
      if (!s_beta_member(x, beta)) continue;
      ++rep.members;
      if (!in_cover(x, beta)) {
        ++rep.violations;
        rep.status = BallCoverReport::Status::violated;
        if (!rep.counterexample) rep.counterexample = x;
      }
    }
    return rep;
  }

 private:
  Vector x_star_;
  int depth_;
  double x_star_norm_ = 0.0;
  std::vector<double> theta_check_;
  double rho_ = 0.0;
  double scale_ = 1.0;
};

/// Orthogonal R with R x^ = e_1 and R y^ = cos(theta) e_1 + sin(theta) e_2.
/// Rows are Gram-Schmidt on {x^, y^} followed by e_1, e_2, ... in index
/// order, skipping candidates whose residual norm is below 1e-8.
/// Requires x and y not (anti)parallel.
inline Matrix plane_rotation(const Vector& xh, const Vector& yh) {
  const Index k = xh.size();
  Matrix r(k, k);
  Index filled = 0;
  auto push = [&](Vector v) {
    for (Index j = 0; j < filled; ++j) v -= r.row(j).dot(v) * r.row(j).transpose();
    // second pass keeps the rows orthonormal to working precision
    for (Index j = 0; j < filled; ++j) v -= r.row(j).dot(v) * r.row(j).transpose();
    const double n = v.norm();
    if (n < 1e-8) return false;
    r.row(filled++) = (v / n).transpose();
    return true;
  };
  push(xh);
  if (!push(yh)) throw DomainError("plane_rotation: vectors are (anti)parallel");
  for (Index i = 0; i < k && filled < k; ++i) push(Vector::Unit(k, i));
  return r;
}

// M_{x^<->y^}: swaps x^ and y^ and annihilates span{x, y}^perp.
inline Matrix swap_matrix(const Vector& x, const Vector& y) {
  require_dims(x.size() == y.size() && x.size() >= 2, "swap_matrix: need equal dimensions k >= 2");
  const double nx = x.norm();
  const double ny = y.norm();
  if (nx == 0.0 || ny == 0.0) throw DomainError("swap_matrix: zero vector");
  const Vector xh = x / nx;
  const Vector yh = y / ny;
  const double theta = angle_between(x, y);
  const Index k = x.size();
  const Vector rejection = yh - xh.dot(yh) * xh;
  if (theta == 0.0 || theta == kPi || rejection.norm() < 1e-8) {
    const double sign = xh.dot(yh) >= 0.0 ? 1.0 : -1.0;
    return sign * xh * xh.transpose();
  }
  const Matrix r = plane_rotation(xh, yh);
  Matrix block = Matrix::Zero(k, k);
  block(0, 0) = std::cos(theta);
  block(0, 1) = std::sin(theta);
  block(1, 0) = std::sin(theta);
  block(1, 1) = -std::cos(theta);
  return r.transpose() * block * r;
}

/// Q_{x,y} = (pi - theta)/(2 pi) I + sin(theta)/(2 pi) M_{x^<->y^}, the
/// expectation of sum_i 1{w_i.x>0} 1{w_i.y>0} w_i w_i^T for w_i ~ N(0, I/n).
inline Matrix wdc_q_matrix(const Vector& x, const Vector& y) {
  require_dims(x.size() == y.size() && x.size() >= 2, "wdc_q_matrix: need equal dimensions k >= 2");
  const double theta = angle_between(x, y);
  const Index k = x.size();
  // sin(pi) is not exactly zero in floating point; the antiparallel Q is exactly 0.
  const double s = (theta == kPi) ? 0.0 : std::sin(theta);
  Matrix q = ((kPi - theta) / (2.0 * kPi)) * Matrix::Identity(k, k);
  if (s != 0.0) q += (s / (2.0 * kPi)) * swap_matrix(x, y);
  return q;
}

// sum_i 1{w_i.x > 0} 1{w_i.y > 0} w_i w_i^T = W_{+,x}^T W_{+,y}
inline Matrix wdc_empirical_matrix(const Matrix& w, const Vector& x, const Vector& y) {
  require_dims(x.size() == w.cols() && y.size() == w.cols(), "wdc_empirical_matrix: dimension mismatch");
  const Vector px = w * x;
  const Vector py = w * y;
  Matrix both(w.rows(), w.cols());
  Index used = 0;
  for (Index r = 0; r < w.rows(); ++r)
    if (px[r] > 0.0 && py[r] > 0.0) both.row(used++) = w.row(r);
  if (used == 0) return Matrix::Zero(w.cols(), w.cols());
  const auto top = both.topRows(used);
  return top.transpose() * top;
}

// || sum 1 1 w w^T - Q_{x,y} || for one pair.
inline double wdc_pair_deviation(const Matrix& w, const Vector& x, const Vector& y) {
  const Matrix diff = wdc_empirical_matrix(w, x, y) - wdc_q_matrix(x, y);
  try {
    return spectral_norm(diff, 1e-12, 200000);
  } catch (const ConvergenceError& e) {
    return e.best_estimate();
  }
}

/// Sampled LOWER bound on the WDC constant epsilon of W: the maximum pair
/// deviation over `num_pairs` uniform direction pairs plus the forced pairs
/// (x, x) and (x, -x) for the first sampled x. The true epsilon is a sup over
/// all nonzero pairs and can only be larger.
inline double wdc_deviation(const Matrix& w, Rng& rng, std::size_t num_pairs) {
  if (w.cols() < 2) throw DimensionError("wdc_deviation: need k >= 2 columns");
  if (num_pairs < 1) throw ConfigError("wdc_deviation: num_pairs must be positive");
  const Index k = w.cols();
  double worst = 0.0;
  Vector first;
  for (std::size_t p = 0; p < num_pairs; ++p) {
    const Vector x = random_unit_vector(rng, k);
    const Vector y = random_unit_vector(rng, k);
    if (p == 0) first = x;
    worst = std::max(worst, wdc_pair_deviation(w, x, y));
  }
  worst = std::max(worst, wdc_pair_deviation(w, first, first));
  worst = std::max(worst, wdc_pair_deviation(w, first, Vector(-first)));
  return worst;
}

// n_i / (n_{i-1} log n_{i-1}) per layer. The expansivity constant
// itself is not known, so only the ratios are reported.
inline std::vector<double> expansivity_ratios(const std::vector<Index>& widths) {
  std::vector<double> out;
  for (std::size_t i = 1; i < widths.size(); ++i) {
    const double prev = static_cast<double>(widths[i - 1]);
    const double denom = prev * std::log(std::max(prev, 2.0));
    out.push_back(static_cast<double>(widths[i]) / denom);
  }
  return out;
}

}  // namespace genprior
