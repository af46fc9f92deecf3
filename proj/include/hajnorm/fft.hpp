#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "hajnorm/error.hpp"
#include "hajnorm/space.hpp"

namespace hajnorm {

using cplx = std::complex<double>;

/// Separable n-D DFT on a periodic grid (axis 0 varies fastest). Inverse includes the 1/N factor.
class GridFFT {
 public:
  explicit GridFFT(const GridInfo& grid) : n_dim_(grid.n_dim), res_(static_cast<std::size_t>(grid.resolution)), side_(grid.side_length) {
    total_ = 1;
    for (int d = 0; d < n_dim_; ++d) total_ *= res_;
  }

  std::size_t size() const { return total_; }
  int n_dim() const { return n_dim_; }
  std::size_t resolution() const { return res_; }

  std::vector<cplx> forward(std::span<const double> u) const {
    std::vector<cplx> a(u.begin(), u.end());
    transform(a, false);
    return a;
  }

  std::vector<double> inverse_real(std::vector<cplx> a) const {
    transform(a, true);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i].real();
    return out;
  }

  /// Physical frequency vector of flat index i (signed, in cycles per unit length).
  void frequency(std::size_t i, double* xi) const {
    for (int d = 0; d < n_dim_; ++d) {
      const std::size_t m = i % res_;
      i /= res_;
      const double signed_m = m <= res_ / 2 ? static_cast<double>(m) : static_cast<double>(m) - static_cast<double>(res_);
      xi[d] = signed_m / side_;
    }
  }

  double frequency_norm(std::size_t i) const {
    double xi[3] = {0, 0, 0};
    frequency(i, xi);
    double acc = 0.0;
    for (int d = 0; d < n_dim_; ++d) acc += xi[d] * xi[d];
    return std::sqrt(acc);
  }

 private:
  void transform(std::vector<cplx>& a, bool inverse) const {
    if (a.size() != total_) throw ValidationError("field size does not match grid");
    std::vector<cplx> line(res_), out(res_);
    std::size_t stride = 1;
    for (int d = 0; d < n_dim_; ++d) {
      for (std::size_t base = 0; base < total_; ++base) {
        if ((base / stride) % res_ != 0) continue;
        for (std::size_t t = 0; t < res_; ++t) line[t] = a[base + t * stride];
        if (inverse)
          fft_.inv(out, line);
        else
          fft_.fwd(out, line);
        for (std::size_t t = 0; t < res_; ++t) a[base + t * stride] = out[t];
      }
      stride *= res_;
    }
  }

  int n_dim_;
  std::size_t res_;
  double side_;
  std::size_t total_ = 1;
  mutable Eigen::FFT<double> fft_;
};

}  // namespace hajnorm
