#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hajnorm/fields.hpp"
#include "hajnorm/lp_bands.hpp"

using namespace hajnorm;

namespace {

std::vector<double> cosine(const MetricMeasureSpace& grid, int freq) {
  std::vector<double> u(grid.size());
  for (std::size_t x = 0; x < grid.size(); ++x) u[x] = std::cos(2 * std::numbers::pi * freq * grid.coords(x)[0]);
  return u;
}

double l2_centered(const MetricMeasureSpace& grid, std::vector<double> u) {
  const double m = weighted_mean(grid, u);
  for (double& v : u) v -= m;
  return lp_norm(grid, u, 2.0);
}

}  // namespace

TEST(LpBands, CutoffShape) {
  EXPECT_EQ(band_cutoff(0.5, 1.0), 1.0);
  EXPECT_EQ(band_cutoff(1.0, 1.0), 1.0);
  EXPECT_EQ(band_cutoff(2.0, 1.0), 0.0);
  EXPECT_NEAR(band_cutoff(1.5, 1.0), 0.5, 1e-15);
  double prev = 1.0;
  for (double r = 1.0; r <= 2.0; r += 0.01) {
    EXPECT_LE(band_cutoff(r, 1.0), prev + 1e-15);
    prev = band_cutoff(r, 1.0);
  }
}

TEST(LpBands, AutomaticRangeCoversFrequencies) {
  const auto bank = build_band_filters({1, 256, 1.0});
  EXPECT_EQ(bank.k_lo, 1);
  EXPECT_EQ(bank.k_hi, 7);
  EXPECT_THROW(build_band_filters({1, 256, 1.0}, std::pair{1, 5}), ConfigError);
}

TEST(LpBands, PartitionOfUnityAndSupport) {
  const GridInfo info{1, 256, 1.0};
  const auto bank = build_band_filters(info);
  const GridFFT fft(info);
  double xi[3];
  for (std::size_t i = 1; i < fft.size(); ++i) {
    double sum = 0.0;
    for (int k = bank.k_lo; k <= bank.k_hi; ++k) sum += bank.multiplier(k)[i];
    EXPECT_NEAR(sum, 1.0, 1e-12);
    fft.frequency(i, xi);
    const double r = std::fabs(xi[0]);
    if (r <= 4.0 || r >= 16.0) {
      EXPECT_EQ(bank.multiplier(3)[i], 0.0);
    }
  }
}

TEST(LpBands, ConstantFieldHasNoBands) {
  const auto grid = build_periodic_grid(1, 64, 1.0);
  const auto c = band_decompose(grid, std::vector<double>(64, 2.5), build_band_filters(*grid.grid()));
  for (const auto& b : c.bands)
    for (double v : b) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(LpBands, PureFrequencyLivesInOneBand) {
  const auto grid = build_periodic_grid(1, 256, 1.0);
  const auto u = cosine(grid, 8);
  const auto c = band_decompose(grid, u, build_band_filters(*grid.grid()));
  for (int k = c.k_lo; k <= c.k_hi; ++k) {
    double m = 0.0;
    for (double v : c.band(k)) m = std::max(m, std::fabs(v));
    if (k == 3)
      EXPECT_NEAR(m, 1.0, 1e-12);
    else
      EXPECT_LT(m, 1e-12) << "band " << k;
  }
  const double s = 0.7, p = 3.0;
  const double single = std::exp2(3 * s) * lp_norm(grid, c.band(3), p);
  for (double q : {1.0, 2.0, kInf}) {
    EXPECT_NEAR(tl_norm(grid, c, s, p, q), single, 1e-10);
    EXPECT_NEAR(besov_norm(grid, c, s, p, q), single, 1e-10);
  }
}

TEST(LpBands, SquaredBankSatisfiesParseval) {
  const auto grid = build_periodic_grid(2, 16, 1.0);
  const auto u = generate_family(grid, {})[0].values;
  const auto c = band_decompose(grid, u, build_band_filters(*grid.grid(), {}, 1.0, true));
  double energy = 0.0;
  for (const auto& b : c.bands) energy += std::pow(lp_norm(grid, b, 2.0), 2);
  EXPECT_NEAR(std::sqrt(energy), l2_centered(grid, u), 1e-10);
  EXPECT_NEAR(tl_norm(grid, c, 0.0, 2.0, 2.0), l2_centered(grid, u), 1e-6);
}

TEST(LpBands, BesovEqualsTriebelLizorkinWhenPEqualsQ) {
  const auto grid = build_periodic_grid(1, 128, 1.0);
  for (const auto& f : generate_family(grid, {})) {
    const auto c = band_decompose(grid, f.values, build_band_filters(*grid.grid()));
    for (double p : {1.0, 2.0, 3.5})
      EXPECT_NEAR(besov_norm(grid, c, 0.5, p, p), tl_norm(grid, c, 0.5, p, p), 1e-12 * tl_norm(grid, c, 0.5, p, p));
  }
}

TEST(LpBands, MonotoneInQ) {
  const auto grid = build_periodic_grid(1, 64, 1.0);
  const auto bank = build_band_filters(*grid.grid());
  for (const auto& f : generate_family(grid, {})) {
    const auto c = band_decompose(grid, f.values, bank);
    double prev = kInf;
    for (double q : {1.0, 2.0, 4.0, kInf}) {
      const double v = tl_norm(grid, c, 0.5, 2.0, q);
      EXPECT_LE(v, prev * (1 + 1e-12));
      prev = v;
    }
  }
}

TEST(LpBands, TranslationInvariance) {
  const auto grid = build_periodic_grid(1, 64, 1.0);
  const auto bank = build_band_filters(*grid.grid());
  const auto u = generate_family(grid, {})[0].values;
  std::vector<double> shifted(64);
  for (std::size_t i = 0; i < 64; ++i) shifted[i] = u[(i + 13) % 64];
  const auto a = band_decompose(grid, u, bank);
  const auto b = band_decompose(grid, shifted, bank);
  for (double q : {2.0, kInf}) {
    EXPECT_NEAR(tl_norm(grid, a, 0.5, 2.0, q), tl_norm(grid, b, 0.5, 2.0, q), 1e-10);
    EXPECT_NEAR(besov_norm(grid, a, 0.5, 2.0, q), besov_norm(grid, b, 0.5, 2.0, q), 1e-10);
    EXPECT_NEAR(tl_norm(grid, a, 0.5, kInf, q), tl_norm(grid, b, 0.5, kInf, q), 1e-10);
  }
}

TEST(LpBands, ZeroFieldHasZeroNorms) {
  const auto grid = build_periodic_grid(1, 32, 1.0);
  const std::vector<double> z(32, 0.0);
  const auto c = band_decompose(grid, z, build_band_filters(*grid.grid()));
  EXPECT_EQ(tl_norm(grid, c, 0.5, 2, 2), 0.0);
  EXPECT_EQ(besov_norm(grid, c, 0.5, 2, 2), 0.0);
  EXPECT_EQ(grand_norm(grid, z, 0.5, 2, 2, default_dictionary(1), GrandFamily::F), 0.0);
}

TEST(LpBands, GrandNormDominatesEverySingleAtom) {
  const auto grid = build_periodic_grid(1, 64, 1.0);
  const auto dict = default_dictionary(1);
  FunctionFamilySpec fs;
  fs.count = 3;
  for (const auto& f : generate_family(grid, fs)) {
    for (auto fam : {GrandFamily::F, GrandFamily::B}) {
      const double full = grand_norm(grid, f.values, 0.5, 2, 2, dict, fam);
      for (const auto& atom : dict.atoms) {
        Dictionary one = dict;
        one.atoms = {atom};
        EXPECT_LE(grand_norm(grid, f.values, 0.5, 2, 2, one, fam), full * (1 + 1e-12));
      }
    }
  }
}

TEST(LpBands, RejectsNonGridSpaces) {
  const auto cloud = build_point_cloud({{0, 0.5}, {0.5, 0}}, {1, 1});
  const auto bank = build_band_filters({1, 8, 1.0});
  EXPECT_THROW(band_decompose(cloud, std::vector<double>{0, 1}, bank), DomainError);
  EXPECT_THROW(grand_norm(cloud, std::vector<double>{0, 1}, 0.5, 2, 2, default_dictionary(1), GrandFamily::F),
               DomainError);
}
