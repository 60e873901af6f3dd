#pragma once

// Table producers behind the landscape, rho-table, wdc-check and
// autoencoder-check subcommands.

#include <algorithm>
#include <cmath>
#include <ostream>
#include <vector>

#include "genprior/autoencoder.hpp"
#include "genprior/generator.hpp"
#include "genprior/landscape.hpp"
#include "genprior/numerics.hpp"
#include "genprior/parallel.hpp"
#include "genprior/sweep.hpp"

namespace genprior {

struct SurfacePoint {
  double x1 = 0.0;
  double x2 = 0.0;
  double f = 0.0;
};

/// f(x) = 1/2 ||G(x) - y||^2 on a grid x1, x2 in [-extent, extent] for a
/// network with k = 2. `grid` points per axis, row-major in x2 then x1.
inline std::vector<SurfacePoint> loss_surface(const GeneratorNetwork& g, const Vector& y, double extent,
                                              int grid) {
  if (g.latent_dim() != 2) throw ConfigError("loss_surface: network must have k = 2");
  if (grid < 2) throw ConfigError("loss_surface: grid needs at least 2 points per axis");
  if (!(extent > 0.0)) throw ConfigError("loss_surface: extent must be positive");
  std::vector<SurfacePoint> out;
  out.reserve(static_cast<std::size_t>(grid) * grid);
  for (int j = 0; j < grid; ++j) {
    for (int i = 0; i < grid; ++i) {
      const double x1 = -extent + 2.0 * extent * i / (grid - 1);
      const double x2 = -extent + 2.0 * extent * j / (grid - 1);
      Vector x(2);
      x << x1, x2;
      out.push_back({x1, x2, loss(g, y, x)});
    }
  }
  return out;
}

inline void write_surface_csv(std::ostream& out, const std::vector<SurfacePoint>& pts) {
  out << "x1,x2,f\n";
  for (const auto& p : pts) out << fmt_double(p.x1) << ',' << fmt_double(p.x2) << ',' << fmt_double(p.f) << "\n";
}

struct HSlicePoint {
  int depth = 0;
  double radius = 0.0;  // ||x|| / ||x_*||
  double theta = 0.0;   // angle(x, x_*)
  double h_norm = 0.0;  // ||h_x|| / ||x_*||
};

/// ||h_x|| along circles x = r ||x_*|| (cos t e + sin t e_perp) in a plane
/// through x_*, for t on a uniform grid in [0, pi].
inline std::vector<HSlicePoint> h_slices(const Vector& x_star, const std::vector<int>& depths,
                                         const std::vector<double>& radii, int grid) {
  if (x_star.size() < 2) throw ConfigError("h_slices: need k >= 2");
  if (grid < 2) throw ConfigError("h_slices: grid needs at least 2 points");
  const double xn = x_star.norm();
  if (xn == 0.0) throw DomainError("h_slices: x_star must be nonzero");
  const Vector e = x_star / xn;
  // first standard basis vector not parallel to x_*, orthogonalized
  Vector perp;
  for (Index i = 0; i < x_star.size(); ++i) {
    Vector c = Vector::Unit(x_star.size(), i);
    c -= e.dot(c) * e;
    if (c.norm() > 1e-8) {
      perp = c / c.norm();
      break;
    }
  }
  std::vector<HSlicePoint> out;
  for (int d : depths) {
    const LandscapeContext ctx(x_star, d);
    for (double r : radii) {
      for (int i = 0; i < grid; ++i) {
        const double t = kPi * i / (grid - 1);
        const Vector x = r * xn * (std::cos(t) * e + std::sin(t) * perp);
        out.push_back({d, r, t, ctx.h(x).h.norm() / xn});
      }
    }
  }
  return out;
}

inline void write_h_slices_csv(std::ostream& out, const std::vector<HSlicePoint>& pts) {
  out << "d,radius,theta,h_norm\n";
  for (const auto& p : pts)
    out << p.depth << ',' << fmt_double(p.radius) << ',' << fmt_double(p.theta) << ',' << fmt_double(p.h_norm)
        << "\n";
}

inline void write_rho_table_csv(std::ostream& out, int max_depth) {
  if (max_depth < 1) throw ConfigError("rho-table: max depth must be positive");
  out << "d,rho,one_minus_rho,upper_bound\n";
  for (int d = 1; d <= max_depth; ++d) {
    const double r = rho(d);
    out << d << ',' << fmt_double(r) << ',' << fmt_double(1.0 - r) << ',' << fmt_double(250.0 / (d + 1)) << "\n";
  }
}

struct WdcRecord {
  Index n = 0;
  int seed_index = 0;
  double deviation = 0.0;
};

/// Sampled WDC deviation for W with i.i.d. N(0, 1/n) entries, n x k, for each
/// n and seed. Seed stream (n_index * 1000 + s) of `base_seed`.
inline std::vector<WdcRecord> wdc_study(const std::vector<Index>& ns, Index k, std::size_t pairs, int seeds,
                                        std::uint64_t base_seed, unsigned threads) {
  if (k < 2) throw ConfigError("wdc-check: k must be at least 2");
  if (seeds < 1 || pairs < 1) throw ConfigError("wdc-check: seeds and pairs must be positive");
  std::vector<WdcRecord> out(ns.size() * static_cast<std::size_t>(seeds));
  parallel_for(out.size(), resolve_threads(threads), [&](std::size_t idx) {
    const std::size_t ni = idx / seeds;
    const int s = static_cast<int>(idx % seeds);
    Rng rng(derive_seed(base_seed, ni * 1000 + static_cast<std::uint64_t>(s)));
    const Matrix w = gaussian_matrix(rng, ns[ni], k, 1.0 / static_cast<double>(ns[ni]));
    out[idx] = {ns[ni], s, wdc_deviation(w, rng, pairs)};
  });
  return out;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

inline std::vector<double> wdc_medians(const std::vector<Index>& ns, const std::vector<WdcRecord>& recs) {
  std::vector<double> out;
  for (Index n : ns) {
    std::vector<double> devs;
    for (const auto& r : recs)
      if (r.n == n) devs.push_back(r.deviation);
    out.push_back(median(devs));
  }
  return out;
}

inline void write_wdc_csv(std::ostream& out, Index k, std::size_t pairs, const std::vector<Index>& ns,
                          const std::vector<WdcRecord>& recs) {
  out << "# k=" << k << " pairs=" << pairs << " (sampled lower bound on the WDC constant)\n";
  out << "n,seed,deviation\n";
  for (const auto& r : recs) out << r.n << ',' << r.seed_index << ',' << fmt_double(r.deviation) << "\n";
  const auto med = wdc_medians(ns, recs);
  for (std::size_t i = 0; i < ns.size(); ++i) out << ns[i] << ",median," << fmt_double(med[i]) << "\n";
}

/// Independent attenuation trials; trial t uses stream t of `base_seed` for
/// both the random autoencoder and its noise draw.
inline std::vector<AttenuationRecord> attenuation_study(const std::vector<Index>& decoder_widths, int trials,
                                                        double sigma2, std::uint64_t base_seed,
                                                        unsigned threads) {
  if (trials < 1) throw ConfigError("autoencoder-check: trials must be positive");
  std::vector<AttenuationRecord> out(static_cast<std::size_t>(trials));
  parallel_for(out.size(), resolve_threads(threads), [&](std::size_t t) {
    Rng rng(derive_seed(base_seed, t));
    const Autoencoder h = Autoencoder::random(rng, decoder_widths);
    out[t] = attenuation_trial(h, rng, sigma2);
  });
  return out;
}

inline void write_attenuation_csv(std::ostream& out, const std::vector<AttenuationRecord>& recs) {
  out << "trial,ratio,bound,local_spec_norm\n";
  for (std::size_t t = 0; t < recs.size(); ++t)
    out << t << ',' << fmt_double(recs[t].ratio) << ',' << fmt_double(recs[t].bound) << ','
        << fmt_double(recs[t].local_spec_norm) << "\n";
}

}  // namespace genprior
