#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "xspace/error.hpp"

namespace xspace {

/// Singular-spectrum analysis of a single series.
///
/// The trajectory matrix X (window x (n - window + 1), X[i][j] = x[i + j]) is
/// factored through the eigenvectors of the lag covariance X X^T; those are
/// the left singular vectors of X. Each elementary component is the
/// diagonal average of u u^T X. Components are returned as `groups` series:
/// groups - 1 leading eigentriples one per group, the last group holding
/// the remainder, computed as x minus the other groups so the groups sum
/// to x exactly.
inline std::vector<std::vector<double>> ssa_decompose(std::span<const double> x, std::size_t window,
                                                      std::size_t groups) {
  const std::size_t n = x.size();
  require(window >= 2 && 2 * window <= n, Errc::invalid_params, "SSA window must satisfy 2 <= L <= N/2");
  require(groups >= 1 && groups <= window, Errc::invalid_params, "SSA component count must satisfy 1 <= K <= L");

  const std::size_t cols = n - window + 1;
  Eigen::MatrixXd traj(window, cols);
  for (std::size_t i = 0; i < window; ++i)
    for (std::size_t j = 0; j < cols; ++j) traj(i, j) = x[i + j];

  const Eigen::MatrixXd lag = traj * traj.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(lag);
  require(eig.info() == Eigen::Success, Errc::invalid_params, "SSA eigendecomposition failed");

  // Eigen returns ascending eigenvalues.
  std::vector<Eigen::Index> order(window);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return eig.eigenvalues()(a) > eig.eigenvalues()(b);
  });

  std::vector<std::vector<double>> out(groups, std::vector<double>(n, 0.0));
  std::vector<double> counts(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    counts[t] = static_cast<double>(std::min({t + 1, window, cols, n - t}));
  }

  for (std::size_t g = 0; g + 1 < groups; ++g) {
    const Eigen::VectorXd u = eig.eigenvectors().col(order[g]);
    const Eigen::RowVectorXd v = u.transpose() * traj;
    auto& comp = out[g];
    for (std::size_t i = 0; i < window; ++i)
      for (std::size_t j = 0; j < cols; ++j) comp[i + j] += u(static_cast<Eigen::Index>(i)) * v(static_cast<Eigen::Index>(j));
    for (std::size_t t = 0; t < n; ++t) comp[t] /= counts[t];
  }

  auto& rest = out[groups - 1];
  for (std::size_t t = 0; t < n; ++t) {
    double r = x[t];
    for (std::size_t g = 0; g + 1 < groups; ++g) r -= out[g][t];
    rest[t] = r;
  }
  return out;
}

}  // namespace xspace
