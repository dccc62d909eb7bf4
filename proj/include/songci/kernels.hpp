#pragma once

#include <cstddef>
#include <span>

// Dense kernels behind the autodiff ops. The default namespace holds the
// OpenMP versions; `serial` holds straight-line reference loops. Each parallel
// kernel evaluates every output element with the same summation order as its
// reference, so the two agree bit for bit at any thread count.
namespace songci::kernels {

// Work below this many multiply-adds stays on the calling thread.
inline constexpr std::size_t kParallelThreshold = std::size_t{1} << 15;

// y = W x, W is rows x cols row-major.
void gemv(std::span<const double> w, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y);
// out += W^T g
void gemv_t_acc(std::span<const double> w, std::size_t rows, std::size_t cols, std::span<const double> g,
                std::span<double> out);
// G += g x^T
void ger_acc(std::span<double> grad, std::size_t rows, std::size_t cols, std::span<const double> g,
             std::span<const double> x);
// C = A B with A m x k, B k x n.
void gemm(std::span<const double> a, std::span<const double> b, std::size_t m, std::size_t k, std::size_t n,
          std::span<double> c);

namespace serial {
void gemv(std::span<const double> w, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y);
void gemv_t_acc(std::span<const double> w, std::size_t rows, std::size_t cols, std::span<const double> g,
                std::span<double> out);
void ger_acc(std::span<double> grad, std::size_t rows, std::size_t cols, std::span<const double> g,
             std::span<const double> x);
void gemm(std::span<const double> a, std::span<const double> b, std::size_t m, std::size_t k, std::size_t n,
          std::span<double> c);
}  // namespace serial

// 0 restores the OpenMP default.
void set_num_threads(int threads);
int max_threads();

}  // namespace songci::kernels
