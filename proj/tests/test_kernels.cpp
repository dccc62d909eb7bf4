#include <doctest.h>

#include <vector>

#include "songci/kernels.hpp"
#include "songci/rng.hpp"

using namespace songci;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

struct Shape2 {
  std::size_t rows, cols;
};

// Small shapes stay serial; the large ones cross kParallelThreshold.
const Shape2 kShapes[] = {{1, 1}, {3, 7}, {64, 64}, {300, 200}, {1000, 500}};

}  // namespace

TEST_CASE("parallel kernels match the serial reference bit for bit") {
  for (int threads : {1, 2, 3, 8}) {
    kernels::set_num_threads(threads);
    for (const auto& s : kShapes) {
      CAPTURE(threads);
      CAPTURE(s.rows);
      const auto w = random_vec(s.rows * s.cols, 1);
      const auto x = random_vec(s.cols, 2);
      const auto g = random_vec(s.rows, 3);

      std::vector<double> y(s.rows), y_ref(s.rows);
      kernels::gemv(w, s.rows, s.cols, x, y);
      kernels::serial::gemv(w, s.rows, s.cols, x, y_ref);
      CHECK(y == y_ref);

      auto out = random_vec(s.cols, 4), out_ref = out;
      kernels::gemv_t_acc(w, s.rows, s.cols, g, out);
      kernels::serial::gemv_t_acc(w, s.rows, s.cols, g, out_ref);
      CHECK(out == out_ref);

      auto grad = random_vec(s.rows * s.cols, 5), grad_ref = grad;
      kernels::ger_acc(grad, s.rows, s.cols, g, x);
      kernels::serial::ger_acc(grad_ref, s.rows, s.cols, g, x);
      CHECK(grad == grad_ref);

      const std::size_t n = 17;
      const auto b = random_vec(s.cols * n, 6);
      std::vector<double> c(s.rows * n), c_ref(s.rows * n);
      kernels::gemm(w, b, s.rows, s.cols, n, c);
      kernels::serial::gemm(w, b, s.rows, s.cols, n, c_ref);
      CHECK(c == c_ref);
    }
  }
  kernels::set_num_threads(0);
}

TEST_CASE("serial kernels agree with textbook loops") {
  const std::size_t rows = 4, cols = 3;
  const auto w = random_vec(rows * cols, 7);
  const auto x = random_vec(cols, 8);
  const auto g = random_vec(rows, 9);

  std::vector<double> y(rows);
  kernels::serial::gemv(w, rows, cols, x, y);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * x[c];
    CHECK(y[r] == doctest::Approx(acc).epsilon(1e-14));
  }

  std::vector<double> out(cols, 1.0);
  kernels::serial::gemv_t_acc(w, rows, cols, g, out);
  for (std::size_t c = 0; c < cols; ++c) {
    double acc = 1.0;
    for (std::size_t r = 0; r < rows; ++r) acc += w[r * cols + c] * g[r];
    CHECK(out[c] == doctest::Approx(acc).epsilon(1e-14));
  }

  std::vector<double> grad(rows * cols, 0.5);
  kernels::serial::ger_acc(grad, rows, cols, g, x);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) CHECK(grad[r * cols + c] == doctest::Approx(0.5 + g[r] * x[c]));

  // Identity times B is B.
  std::vector<double> eye(cols * cols, 0.0);
  for (std::size_t i = 0; i < cols; ++i) eye[i * cols + i] = 1.0;
  const auto b = random_vec(cols * 5, 10);
  std::vector<double> c(cols * 5);
  kernels::serial::gemm(eye, b, cols, cols, 5, c);
  CHECK(c == b);
}
