#pragma once

// Shared aliases and small utilities used across the solver.

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace deom {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

inline constexpr cplx I{0.0, 1.0};
inline constexpr double PI = 3.14159265358979323846;

// Run a loop body over [0, n) on `workers` threads with a fixed block
// partition. Bodies must write disjoint outputs; the partition (and hence
// the result) is independent of the worker count.
inline void parallel_for(std::size_t n, int workers,
                         const std::function<void(std::size_t, std::size_t)>& body) {
  if (workers <= 1 || n < 2) {
    body(0, n);
    return;
  }
  const std::size_t nw = std::min<std::size_t>(workers, n);
  std::vector<std::thread> pool;
  pool.reserve(nw);
  const std::size_t chunk = (n + nw - 1) / nw;
  for (std::size_t w = 0; w < nw; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back(body, lo, hi);
  }
  for (auto& t : pool) t.join();
}

}  // namespace deom
