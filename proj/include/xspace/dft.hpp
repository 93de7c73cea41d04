#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "xspace/error.hpp"

namespace xspace {

/// Real DFT of length n in Hermitian-packed form.
///
/// Packing: [Re c0, Re c1, Im c1, Re c2, Im c2, ...]; for even n the last
/// entry is Re c_{n/2}. Im c0 and Im c_{n/2} vanish for real input and are
/// omitted, so the packed vector has exactly n entries and the map is a
/// linear bijection on R^n. Forward is unnormalized, inverse scales by 1/n.
///
/// Transforms are direct O(n^2) sums over a twiddle table indexed by
/// (k*t) mod n, which keeps every twiddle exact to one rounding.
class PackedDft {
 public:
  explicit PackedDft(std::size_t n) : n_(n), cos_(n), sin_(n) {
    require(n >= 1, Errc::invalid_params, "DFT length must be positive");
    const double step = 2.0 * std::numbers::pi / static_cast<double>(n);
    for (std::size_t m = 0; m < n; ++m) {
      cos_[m] = std::cos(step * static_cast<double>(m));
      sin_[m] = std::sin(step * static_cast<double>(m));
    }
  }

  std::size_t size() const noexcept { return n_; }

  /// Number of complex bins stored with both Re and Im.
  std::size_t paired_bins() const noexcept { return (n_ - 1) / 2; }
  bool has_nyquist() const noexcept { return n_ % 2 == 0; }

  /// Packed index of Re c_k and Im c_k (k in 1..paired_bins()).
  static std::size_t re_index(std::size_t k) noexcept { return k == 0 ? 0 : 2 * k - 1; }
  static std::size_t im_index(std::size_t k) noexcept { return 2 * k; }

  void forward(std::span<const double> x, std::span<double> out) const {
    const std::size_t n = n_;
    double dc = 0.0;
    for (double v : x) dc += v;
    out[0] = dc;
    for (std::size_t k = 1; k <= paired_bins(); ++k) {
      double re = 0.0, im = 0.0;
      std::size_t m = 0;
      for (std::size_t t = 0; t < n; ++t) {
        re += x[t] * cos_[m];
        im -= x[t] * sin_[m];
        m += k;
        if (m >= n) m -= n;
      }
      out[re_index(k)] = re;
      out[im_index(k)] = im;
    }
    if (has_nyquist()) {
      double re = 0.0;
      for (std::size_t t = 0; t < n; ++t) re += (t % 2 == 0) ? x[t] : -x[t];
      out[n - 1] = re;
    }
  }

  void inverse(std::span<const double> z, std::span<double> out) const {
    const std::size_t n = n_;
    const double scale = 1.0 / static_cast<double>(n);
    for (std::size_t t = 0; t < n; ++t) {
      double acc = z[0];
      std::size_t m = 0;
      for (std::size_t k = 1; k <= paired_bins(); ++k) {
        m += t;
        if (m >= n) m -= n;
        acc += 2.0 * (z[re_index(k)] * cos_[m] - z[im_index(k)] * sin_[m]);
      }
      if (has_nyquist()) acc += (t % 2 == 0) ? z[n - 1] : -z[n - 1];
      out[t] = acc * scale;
    }
  }

  /// Applies the transpose of the inverse map: out = A g where x = z^T A.
  void inverse_transpose(std::span<const double> g, std::span<double> out) const {
    const std::size_t n = n_;
    const double scale = 1.0 / static_cast<double>(n);
    double dc = 0.0;
    for (double v : g) dc += v;
    out[0] = dc * scale;
    for (std::size_t k = 1; k <= paired_bins(); ++k) {
      double re = 0.0, im = 0.0;
      std::size_t m = 0;
      for (std::size_t t = 0; t < n; ++t) {
        re += g[t] * cos_[m];
        im -= g[t] * sin_[m];
        m += k;
        if (m >= n) m -= n;
      }
      out[re_index(k)] = 2.0 * re * scale;
      out[im_index(k)] = 2.0 * im * scale;
    }
    if (has_nyquist()) {
      double re = 0.0;
      for (std::size_t t = 0; t < n; ++t) re += (t % 2 == 0) ? g[t] : -g[t];
      out[n - 1] = re * scale;
    }
  }

 private:
  std::size_t n_;
  std::vector<double> cos_;
  std::vector<double> sin_;
};

}  // namespace xspace
