#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "genprior/fit.hpp"
#include "genprior/manifest.hpp"
#include "genprior/parallel.hpp"
#include "genprior/reports.hpp"
#include "genprior/sweep.hpp"
#include "oracles.hpp"

using namespace genprior;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() /
            ("genprior_" + std::string(info->test_suite_name()) + "_" + info->name() + "_" + std::to_string(::getpid()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

ManifestError::Kind load_error_kind(const fs::path& dir) {
  try {
    load_manifest(dir);
  } catch (const ManifestError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected ManifestError";
  return ManifestError::Kind::io;
}

std::string first_line_after_comments(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line))
    if (line.empty() || line[0] != '#') return line;
  return {};
}

SweepConfig small_sweep() {
  SweepConfig cfg;
  cfg.mode = SweepMode::sweep_sigma;
  cfg.widths = {40, 120};
  cfg.k = 4;
  cfg.values = {0.0, 0.5};
  cfg.trials = 3;
  cfg.base_seed = 11;
  cfg.descent.max_iters = 300;
  return cfg;
}

}  // namespace

TEST(FitLine, ExactLine) {
  const std::vector<double> xs{0, 1, 2, 3}, ys{1, 3, 5, 7};
  const auto f = fit_line(xs, ys);
  EXPECT_NEAR(f.slope, 2.0, 1e-15);
  EXPECT_NEAR(f.intercept, 1.0, 1e-15);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-15);
}

TEST(FitLine, ConstantYsHaveZeroRSquared) {
  const std::vector<double> xs{0, 1, 2}, ys{4, 4, 4};
  const auto f = fit_line(xs, ys);
  EXPECT_EQ(f.slope, 0.0);
  EXPECT_EQ(f.intercept, 4.0);
  EXPECT_EQ(f.r_squared, 0.0);
}

TEST(FitLine, MatchesNormalEquationsOracle) {
  Rng rng(1);
  std::vector<double> xs, ys;
  for (int i = 0; i < 50; ++i) {
    xs.push_back(rng.uniform() * 10);
    ys.push_back(-0.7 * xs.back() + 3 + rng.gaussian());
  }
  Matrix design(50, 2);
  for (int i = 0; i < 50; ++i) design.row(i) << xs[i], 1.0;
  oracle::Dense gram(2, std::vector<double>(2, 0.0));
  std::vector<double> rhs(2, 0.0);
  for (int i = 0; i < 50; ++i)
    for (int a = 0; a < 2; ++a) {
      rhs[a] += design(i, a) * ys[i];
      for (int b = 0; b < 2; ++b) gram[a][b] += design(i, a) * design(i, b);
    }
  const auto coef = oracle::solve(gram, rhs);
  const auto f = fit_line(xs, ys);
  EXPECT_NEAR(f.slope, coef[0], 1e-10);
  EXPECT_NEAR(f.intercept, coef[1], 1e-10);
  EXPECT_GE(f.r_squared, -1e-12);
  EXPECT_LE(f.r_squared, 1.0 + 1e-12);
}

TEST(FitLine, Errors) {
  const std::vector<double> one{1.0}, two{1.0, 1.0}, three{1.0, 2.0, 3.0};
  EXPECT_THROW(fit_line(one, one), ConfigError);
  EXPECT_THROW(fit_line(two, two), ConfigError);
  EXPECT_THROW(fit_line(two, three), DimensionError);
}

TEST(Manifest, RoundTripIsBitExact) {
  TempDir tmp;
  Rng rng(2);
  const auto g = GeneratorNetwork::random(rng, {3, 11, 29}, WeightScale::one_over_fanout);
  save_manifest(tmp.path(), g);
  const auto back = load_manifest(tmp.path());
  ASSERT_EQ(back.depth(), g.depth());
  EXPECT_EQ(back.widths(), g.widths());
  EXPECT_EQ(back.scale(), WeightScale::one_over_fanout);
  for (std::size_t i = 0; i < g.depth(); ++i)
    EXPECT_EQ(std::memcmp(back.layer(i).data(), g.layer(i).data(), sizeof(double) * g.layer(i).size()), 0);
}

TEST(Manifest, FileIsLittleEndianRowMajor) {
  TempDir tmp;
  Matrix w(2, 1);
  w << 1.0, -2.0;
  save_manifest(tmp.path(), GeneratorNetwork({w}));
  std::ifstream in(tmp.path() / "W1.bin", std::ios::binary);
  unsigned char bytes[16];
  in.read(reinterpret_cast<char*>(bytes), 16);
  ASSERT_EQ(in.gcount(), 16);
  // 1.0 = 0x3FF0000000000000, -2.0 = 0xC000000000000000
  EXPECT_EQ(bytes[7], 0x3F);
  EXPECT_EQ(bytes[6], 0xF0);
  EXPECT_EQ(bytes[15], 0xC0);
  EXPECT_EQ(bytes[0], 0x00);
}

TEST(Manifest, HandBuiltTwoLayerForward) {
  TempDir tmp;
  std::ofstream(tmp.path() / "manifest.json") << R"({"widths": [2, 3, 4], "scale": "external",
    "layers": [{"rows": 3, "cols": 2, "file": "a.bin"}, {"rows": 4, "cols": 3, "file": "b.bin"}]})";
  const double a[] = {1, 0, 0, 1, 1, -1};
  const double b[] = {1, 1, 1, -1, 0, 0, 0, 2, 0, 0, 0, 3};
  detail::write_doubles(tmp.path() / "a.bin", a, 6);
  detail::write_doubles(tmp.path() / "b.bin", b, 12);
  const auto g = load_manifest(tmp.path());
  Vector x(2);
  x << 2, 1;
  // layer 1: relu([2, 1, 1]) = [2, 1, 1]; layer 2: relu([4, -2, 2, 3])
  Vector expected(4);
  expected << 4, 0, 2, 3;
  EXPECT_EQ(forward(g, x), expected);
}

TEST(Manifest, DistinctErrors) {
  TempDir tmp;
  Rng rng(3);
  const auto g = GeneratorNetwork::random(rng, {2, 5, 9});
  const auto reset = [&] {
    fs::remove_all(tmp.path());
    save_manifest(tmp.path(), g);
  };

  reset();
  fs::resize_file(tmp.path() / "W2.bin", 8 * 44);
  EXPECT_EQ(load_error_kind(tmp.path()), ManifestError::Kind::truncated);

  reset();
  {
    nlohmann::json j;
    std::ifstream(tmp.path() / "manifest.json") >> j;
    j["layers"][1]["cols"] = 4;
    std::ofstream(tmp.path() / "manifest.json") << j.dump();
  }
  EXPECT_EQ(load_error_kind(tmp.path()), ManifestError::Kind::shape_mismatch);

  reset();
  {
    nlohmann::json j;
    std::ifstream(tmp.path() / "manifest.json") >> j;
    j["widths"] = {2, 5};
    std::ofstream(tmp.path() / "manifest.json") << j.dump();
  }
  EXPECT_EQ(load_error_kind(tmp.path()), ManifestError::Kind::shape_mismatch);

  reset();
  std::ofstream(tmp.path() / "manifest.json") << "{\"widths\": [2, 5, 9], \"layers\": ";
  EXPECT_EQ(load_error_kind(tmp.path()), ManifestError::Kind::malformed);

  reset();
  std::ofstream(tmp.path() / "manifest.json") << R"({"widths": [2, 5, 9], "scale": "two_over_fanout"})";
  EXPECT_EQ(load_error_kind(tmp.path()), ManifestError::Kind::malformed);

  reset();
  {
    Matrix bad = g.layer(0);
    bad(1, 1) = std::numeric_limits<double>::infinity();
    detail::write_doubles(tmp.path() / "W1.bin", bad.data(), static_cast<std::size_t>(bad.size()));
  }
  EXPECT_EQ(load_error_kind(tmp.path()), ManifestError::Kind::non_finite);

  reset();
  fs::remove(tmp.path() / "W1.bin");
  EXPECT_EQ(load_error_kind(tmp.path()), ManifestError::Kind::io);

  EXPECT_EQ(load_error_kind(tmp.path() / "missing"), ManifestError::Kind::io);
}

TEST(VectorFile, RoundTripAndSidecar) {
  TempDir tmp;
  Rng rng(4);
  const Vector v = gaussian_vector(rng, 17, 1.0);
  write_vector(tmp.path() / "y.bin", v);
  const Vector back = read_vector(tmp.path() / "y.bin");
  ASSERT_EQ(back.size(), 17);
  EXPECT_EQ(std::memcmp(back.data(), v.data(), sizeof(double) * 17), 0);
  std::ifstream side(tmp.path() / "y.bin.json");
  nlohmann::json j;
  side >> j;
  EXPECT_EQ(j.at("dim").get<int>(), 17);

  std::ofstream(tmp.path() / "y.bin.json") << R"({"dim": 18})";
  try {
    read_vector(tmp.path() / "y.bin");
    FAIL() << "expected truncation";
  } catch (const ManifestError& e) {
    EXPECT_EQ(e.kind(), ManifestError::Kind::truncated);
  }
}

TEST(Sweep, ConfigValidation) {
  SweepConfig cfg = small_sweep();
  EXPECT_NO_THROW(cfg.validate());
  cfg.values.clear();
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_sweep();
  cfg.trials = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_sweep();
  cfg.mode = SweepMode::sweep_k;
  cfg.values = {2.5};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.values = {40};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_sweep();
  cfg.mode = SweepMode::cs_sweep;
  cfg.m = 121;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_sweep();
  cfg.widths = {120, 40};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_sweep();
  cfg.values = {-0.1};
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Sweep, HeaderAndLayout) {
  const SweepConfig cfg = small_sweep();
  const auto rows = run_sweep(cfg);
  ASSERT_EQ(rows.size(), 2u * (3u + 1u));
  const std::string csv = sweep_csv(cfg, rows);
  EXPECT_EQ(first_line_after_comments(csv),
            "point,trial,seed,k,n,m,sigma2,mse_latent,mse_image,noise_energy,iters,negations,status");
  EXPECT_NE(csv.find("# mode=sweep_sigma"), std::string::npos);
  EXPECT_NE(csv.find("negation=every"), std::string::npos);
  for (std::size_t p = 0; p < 2; ++p) {
    for (int t = 0; t < 3; ++t) {
      const auto& r = rows[p * 4 + t];
      EXPECT_EQ(r.point, p);
      EXPECT_EQ(r.trial, t);
      EXPECT_EQ(r.seed, trial_seed(11, p, t));
      EXPECT_EQ(r.seed, derive_seed(11, p * 1000000 + t));
    }
    EXPECT_TRUE(rows[p * 4 + 3].is_mean());
    double mean = 0.0;
    for (int t = 0; t < 3; ++t) mean += rows[p * 4 + t].mse_image / 3;
    EXPECT_NEAR(rows[p * 4 + 3].mse_image, mean, 1e-15 * (1 + mean));
  }
  EXPECT_EQ(mean_rows(rows).size(), 2u);
}

TEST(Sweep, ReproducibleAndThreadIndependent) {
  SweepConfig cfg = small_sweep();
  const std::string once = sweep_csv(cfg, run_sweep(cfg));
  const std::string twice = sweep_csv(cfg, run_sweep(cfg));
  EXPECT_EQ(once, twice);
  cfg.threads = 3;
  EXPECT_EQ(sweep_csv(cfg, run_sweep(cfg)), once);
  cfg.base_seed = 12;
  EXPECT_NE(sweep_csv(cfg, run_sweep(cfg)), once);
}

TEST(Sweep, NoiselessPointRecoversExactly) {
  SweepConfig cfg;
  cfg.mode = SweepMode::sweep_sigma;
  cfg.widths = {100, 300};
  cfg.k = 5;
  cfg.values = {0.0};
  cfg.trials = 5;
  cfg.base_seed = 3;
  const auto means = mean_rows(run_sweep(cfg));
  ASSERT_EQ(means.size(), 1u);
  EXPECT_EQ(means[0].status, "mean");
  EXPECT_LE(means[0].mse_image_normalized, 1e-8);
  EXPECT_LE(means[0].mse_image, 1e-8);
}

TEST(Sweep, ImageErrorGrowsWithLatentDim) {
  SweepConfig cfg;
  cfg.mode = SweepMode::sweep_k;
  cfg.widths = {200, 600};
  cfg.sigma2 = 0.25;
  cfg.values = {2, 8, 32};
  cfg.trials = 6;
  cfg.base_seed = 5;
  cfg.descent.max_iters = 1000;
  const auto means = mean_rows(run_sweep(cfg));
  ASSERT_EQ(means.size(), 3u);
  EXPECT_LT(means[0].mse_image, means[1].mse_image);
  EXPECT_LT(means[1].mse_image, means[2].mse_image);
}

// With m = n Gaussian measurements the compressed problem denoises at the
// same rate as the plain one.
TEST(Sweep, SquareMeasurementMatchesPlainRate) {
  SweepConfig cfg;
  cfg.widths = {100, 300};
  cfg.k = 5;
  cfg.values = {0.25};
  cfg.trials = 10;
  cfg.base_seed = 8;
  cfg.descent.max_iters = 1000;
  cfg.mode = SweepMode::sweep_sigma;
  const double plain = mean_rows(run_sweep(cfg))[0].mse_image;
  cfg.mode = SweepMode::cs_sweep;
  cfg.m = 300;
  const double cs = mean_rows(run_sweep(cfg))[0].mse_image;
  EXPECT_LE(cs, 2.0 * plain);
  EXPECT_GE(cs, 0.5 * plain);
}

TEST(Sweep, DivergedTrialsAreRecordedInRow) {
  SweepConfig cfg = small_sweep();
  cfg.values = {0.5};
  cfg.descent.step_size = 1e6;
  cfg.descent.negation = NegationMode::disabled;
  const auto rows = run_sweep(cfg);
  for (int t = 0; t < 3; ++t) {
    EXPECT_EQ(rows[t].status, "diverged");
    EXPECT_TRUE(std::isnan(rows[t].mse_image));
  }
  EXPECT_EQ(rows[3].status, "mean_diverged_3");
  const std::string csv = sweep_csv(cfg, rows);
  EXPECT_NE(csv.find(",nan,"), std::string::npos);
}

TEST(Parallel, ThreadsResolutionAndExceptions) {
  ::setenv("GENPRIOR_THREADS", "2", 1);
  EXPECT_EQ(resolve_threads(7), 2u);
  ::unsetenv("GENPRIOR_THREADS");
  EXPECT_EQ(resolve_threads(3), 3u);
  EXPECT_GE(resolve_threads(0), 1u);
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) {
                 if (i == 5) throw DomainError("boom");
               }),
               DomainError);
}

TEST(Reports, CsvHeaders) {
  std::ostringstream rho_out;
  write_rho_table_csv(rho_out, 3);
  const std::string rho_csv = rho_out.str();
  EXPECT_EQ(rho_csv.substr(0, rho_csv.find('\n')), "d,rho,one_minus_rho,upper_bound");
  EXPECT_EQ(std::count(rho_csv.begin(), rho_csv.end(), '\n'), 4);
  EXPECT_THROW(write_rho_table_csv(rho_out, 0), ConfigError);

  Rng rng(6);
  const auto g = GeneratorNetwork::random(rng, {2, 10, 30});
  const Vector y = forward(g, Vector::Ones(2));
  const auto surf = loss_surface(g, y, 2.0, 5);
  ASSERT_EQ(surf.size(), 25u);
  bool found_zero = false;
  for (const auto& p : surf) found_zero = found_zero || (p.x1 == 1.0 && p.x2 == 1.0 && p.f == 0.0);
  EXPECT_TRUE(found_zero);
  std::ostringstream surf_out;
  write_surface_csv(surf_out, surf);
  EXPECT_EQ(surf_out.str().substr(0, 8), "x1,x2,f\n");
  EXPECT_THROW(loss_surface(GeneratorNetwork::random(rng, {3, 10}), Vector::Zero(10), 1.0, 5), ConfigError);

  const auto slices = h_slices(Vector::Unit(2, 0), {1, 2}, {1.0}, 3);
  ASSERT_EQ(slices.size(), 6u);
  EXPECT_EQ(slices[0].h_norm, 0.0);  // x = x_*
  std::ostringstream h_out;
  write_h_slices_csv(h_out, slices);
  EXPECT_EQ(h_out.str().substr(0, h_out.str().find('\n')), "d,radius,theta,h_norm");

  const auto recs = wdc_study({64}, 3, 5, 2, 1, 1);
  std::ostringstream wdc_out;
  write_wdc_csv(wdc_out, 3, 5, {64}, recs);
  EXPECT_EQ(first_line_after_comments(wdc_out.str()), "n,seed,deviation");
  EXPECT_NE(wdc_out.str().find("64,median,"), std::string::npos);

  std::ostringstream att_out;
  write_attenuation_csv(att_out, attenuation_study({2, 8, 20}, 3, 1.0, 1, 1));
  EXPECT_EQ(att_out.str().substr(0, att_out.str().find('\n')), "trial,ratio,bound,local_spec_norm");
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(fmt_double(0.1), "0.1");
  EXPECT_EQ(fmt_double(1e-300), "1e-300");
  EXPECT_EQ(fmt_double(std::numeric_limits<double>::quiet_NaN()), "nan");
  const double v = 0.1 + 0.2;
  EXPECT_EQ(std::stod(fmt_double(v)), v);
}
