#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hajnorm {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline bool is_inf(double v) { return std::isinf(v) && v > 0; }

/// FNV-1a, 64 bit. Used for content hashes of spaces, specs and reports.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= bytes[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) { update(s.data(), s.size()); }
  void update(double v) { update(&v, sizeof v); }
  void update(std::int64_t v) { update(&v, sizeof v); }
  void update(std::span<const double> v) { update(v.data(), v.size() * sizeof(double)); }

  std::uint64_t digest() const { return state_; }
  std::string hex() const {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out(16, '0');
    std::uint64_t v = state_;
    for (int i = 15; i >= 0; --i) {
      out[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
      v >>= 4;
    }
    return out;
  }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string hash_string(std::string_view s) {
  Fnv1a h;
  h.update(s);
  return h.hex();
}

/// Pairwise (cascade) summation; fixed order, so results are reproducible.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 16) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

/// |x|^p with fast paths for the exponents that dominate experiments.
inline double abs_pow(double x, double p) {
  x = std::fabs(x);
  if (p == 1.0) return x;
  if (p == 2.0) return x * x;
  if (x == 0.0) return p == 0.0 ? 1.0 : 0.0;
  if (p >= 0.0 && p <= 64.0 && p == std::floor(p)) {
    // binary powering
    unsigned n = static_cast<unsigned>(p);
    double r = 1.0;
    while (n) {
      if (n & 1u) r *= x;
      x *= x;
      n >>= 1u;
    }
    return r;
  }
  return std::pow(x, p);
}

/// Positive root, inverse of abs_pow.
inline double root(double x, double p) {
  if (p == 1.0) return x;
  if (p == 2.0) return std::sqrt(x);
  if (x == 0.0) return 0.0;
  return std::pow(x, 1.0 / p);
}

/// Quasi-norm of a nonnegative sequence: (sum w_i v_i^e)^(1/e), or max for e = inf.
inline double weighted_norm(std::span<const double> values, std::span<const double> weights, double e) {
  if (is_inf(e)) {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::fabs(v));
    return m;
  }
  std::vector<double> terms(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    terms[i] = w * abs_pow(values[i], e);
  }
  return root(pairwise_sum(terms), e);
}

}  // namespace hajnorm
