#include "songci/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <vector>

namespace songci::kernels {

namespace serial {

void gemv(std::span<const double> w, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = w.data() + i * cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

void gemv_t_acc(std::span<const double> w, std::size_t rows, std::size_t cols, std::span<const double> g,
                std::span<double> out) {
  for (std::size_t j = 0; j < cols; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < rows; ++i) acc += w[i * cols + j] * g[i];
    out[j] += acc;
  }
}

void ger_acc(std::span<double> grad, std::size_t rows, std::size_t cols, std::span<const double> g,
             std::span<const double> x) {
  for (std::size_t i = 0; i < rows; ++i) {
    double* row = grad.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) row[j] += g[i] * x[j];
  }
}

void gemm(std::span<const double> a, std::span<const double> b, std::size_t m, std::size_t k, std::size_t n,
          std::span<double> c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

}  // namespace serial

void gemv(std::span<const double> w, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double* row = w.data() + static_cast<std::size_t>(i) * cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += row[j] * x[j];
    y[static_cast<std::size_t>(i)] = acc;
  }
}

void gemv_t_acc(std::span<const double> w, std::size_t rows, std::size_t cols, std::span<const double> g,
                std::span<double> out) {
  // Column blocks; within a block rows stream in order so each column's
  // partial sum sees the same sequence of additions as the reference.
  constexpr std::size_t kBlock = 64;
  const auto blocks = static_cast<std::ptrdiff_t>((cols + kBlock - 1) / kBlock);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelThreshold)
  for (std::ptrdiff_t bi = 0; bi < blocks; ++bi) {
    const std::size_t j0 = static_cast<std::size_t>(bi) * kBlock;
    const std::size_t j1 = std::min(cols, j0 + kBlock);
    double acc[kBlock] = {};
    for (std::size_t i = 0; i < rows; ++i) {
      const double gi = g[i];
      const double* row = w.data() + i * cols;
      for (std::size_t j = j0; j < j1; ++j) acc[j - j0] += row[j] * gi;
    }
    for (std::size_t j = j0; j < j1; ++j) out[j] += acc[j - j0];
  }
}

void ger_acc(std::span<double> grad, std::size_t rows, std::size_t cols, std::span<const double> g,
             std::span<const double> x) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelThreshold)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double gi = g[static_cast<std::size_t>(i)];
    if (gi == 0.0) continue;
    double* row = grad.data() + static_cast<std::size_t>(i) * cols;
    for (std::size_t j = 0; j < cols; ++j) row[j] += gi * x[j];
  }
}

void gemm(std::span<const double> a, std::span<const double> b, std::size_t m, std::size_t k, std::size_t n,
          std::span<double> c) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k >= kParallelThreshold)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    std::vector<double> acc(n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += aip * brow[j];
    }
    std::copy(acc.begin(), acc.end(), c.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
}

void set_num_threads(int threads) {
  omp_set_num_threads(threads > 0 ? threads : omp_get_num_procs());
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace songci::kernels
