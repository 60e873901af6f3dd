#pragma once

// Dense linear algebra types, seeded randomness and the two numerical kernels
// (spectral norm, orthogonal projection) shared by the rest of the library.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>

#include "genprior/errors.hpp"

namespace genprior {

using Index = Eigen::Index;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

namespace detail {

// SplitMix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

}  // namespace detail

// Child seed for stream `index` of `seed`: hash-mix of the pair. Used to give
// every trial / layer / noise draw its own reproducible stream.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return detail::mix64(seed ^ detail::mix64(index + detail::kGolden));
}

/// Counter-based generator: output i is mix64(seed + (i + 1) * golden), i.e.
/// SplitMix64 addressed by an explicit counter. Satisfies
/// UniformRandomBitGenerator so it plugs into <random> distributions.
///
/// A single Rng has one owner. Parallel work takes `derive(i)` children.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    ++counter_;
    return detail::mix64(seed_ + counter_ * detail::kGolden);
  }

  Rng derive(std::uint64_t index) const { return Rng(derive_seed(seed_, index)); }

  std::uint64_t seed() const noexcept { return seed_; }

  double gaussian() { return normal_(*this); }

  double uniform() { return uniform_(*this); }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// Entries i.i.d. N(0, variance), filled in row-major order.
inline Matrix gaussian_matrix(Rng& rng, Index rows, Index cols, double variance) {
  require_dims(rows >= 1 && cols >= 1, "gaussian_matrix: rows and cols must be positive");
  if (!(variance >= 0.0)) throw DomainError("gaussian_matrix: variance must be nonnegative");
  Matrix m(rows, cols);
  if (variance == 0.0) {
    m.setZero();
    return m;
  }
  const double sd = std::sqrt(variance);
  double* data = m.data();
  for (Index i = 0; i < m.size(); ++i) data[i] = sd * rng.gaussian();
  return m;
}

inline Vector gaussian_vector(Rng& rng, Index dim, double variance) {
  require_dims(dim >= 1, "gaussian_vector: dim must be positive");
  if (!(variance >= 0.0)) throw DomainError("gaussian_vector: variance must be nonnegative");
  const double sd = std::sqrt(variance);
  Vector v(dim);
  for (Index i = 0; i < dim; ++i) v[i] = sd * rng.gaussian();
  return v;
}

// Uniform direction on the unit sphere in R^dim.
inline Vector random_unit_vector(Rng& rng, Index dim) {
  Vector v = gaussian_vector(rng, dim, 1.0);
  double norm = v.norm();
  while (norm == 0.0) {
    v = gaussian_vector(rng, dim, 1.0);
    norm = v.norm();
  }
  return v / norm;
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Largest singular value of `m` by power iteration on m^T m.
///
/// Starts from the normalized all-ones vector. If the iterate collapses into
/// the null space (stagnation at zero), the start is replaced by a fixed-seed
/// Gaussian vector, so the result is deterministic. Converged when the Rayleigh
/// quotient changes by less than `tol` relatively and the eigen-residual is
/// below sqrt(tol) relatively. Throws ConvergenceError with the best estimate
/// after `max_iters`.
inline double spectral_norm(const Matrix& m, double tol = 1e-12, int max_iters = 20000) {
  if (m.size() == 0) return 0.0;
  const double fro2 = m.squaredNorm();
  if (fro2 == 0.0) return 0.0;

  Vector v = Vector::Ones(m.cols()) / std::sqrt(static_cast<double>(m.cols()));
  Rng restart_rng(0x5eedULL);
  double lambda = 0.0;
  double prev = -1.0;
  const double collapse = 1e-28 * fro2;
  int restarts = 0;
  for (int it = 0; it < max_iters; ++it) {
    Vector u = m * v;
    const double quotient = u.squaredNorm();
    if (quotient <= collapse) {
      if (++restarts > 8) break;
      v = random_unit_vector(restart_rng, m.cols());
      prev = -1.0;
      continue;
    }
    Vector w = m.transpose() * u;
    lambda = quotient;
    const double residual = (w - lambda * v).norm();
    const double wn = w.norm();
    v = w / wn;
    if (prev >= 0.0 && std::abs(lambda - prev) <= tol * lambda &&
        residual <= std::sqrt(tol) * lambda) {
      return std::sqrt(lambda);
    }
    prev = lambda;
  }
  throw ConvergenceError("spectral_norm: power iteration did not converge", std::sqrt(lambda));
}

/// Orthogonal projection of v onto the column span of `basis`. The span is
/// found by column-pivoted Householder QR; columns whose pivot falls below
/// `rank_tol` times the largest pivot are treated as dependent.
inline Vector project_onto_span(const Matrix& basis, const Vector& v, double rank_tol = 1e-12) {
  require_dims(v.size() == basis.rows(),
               "project_onto_span: vector length " + std::to_string(v.size()) +
                   " does not match basis rows " + std::to_string(basis.rows()));
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(basis);
  qr.setThreshold(rank_tol);
  const Index rank = qr.rank();
  if (rank == 0) return Vector::Zero(v.size());
  // Q^T v, keep the leading `rank` coordinates, map back with Q.
  Vector coords = qr.householderQ().transpose() * v;
  coords.tail(coords.size() - rank).setZero();
  return qr.householderQ() * coords;
}

}  // namespace genprior
