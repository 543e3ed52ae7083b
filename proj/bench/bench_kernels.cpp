// Times the serial reference kernels against their parallel dispatch twins
// and reports the speedup per kernel and size. Also cross-checks that both
// paths produce identical bytes on the benchmarked inputs.
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "rad/kernels.hpp"
#include "rad/rng.hpp"

namespace {

double now() {
#ifdef _OPENMP
  return omp_get_wtime();
#else
  return 0.0;
#endif
}

std::vector<double> random_buffer(rad::Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal(0.5);
  return v;
}

// Repeats fn until ~0.2s elapsed, returns seconds per call.
double time_call(const std::function<void()>& fn) {
  fn();  // warm
  int reps = 1;
  double elapsed = 0.0;
  for (;;) {
    const double t0 = now();
    for (int i = 0; i < reps; ++i) fn();
    elapsed = now() - t0;
    if (elapsed > 0.2 || reps > (1 << 20)) break;
    reps *= 2;
  }
  return elapsed / reps;
}

struct Row {
  std::string name;
  double serial_s;
  double parallel_s;
  bool identical;
};

void print_row(const Row& r) {
  std::printf("%-26s  %10.3f  %10.3f  %7.2fx  %s\n", r.name.c_str(),
              r.serial_s * 1e6, r.parallel_s * 1e6, r.serial_s / r.parallel_s,
              r.identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
  using namespace rad;
  kernels::set_parallel_threshold(0);

#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (built without OpenMP)\n");
#endif
  std::printf("%-26s  %10s  %10s  %8s\n", "kernel", "serial us", "parallel us",
              "speedup");

  Rng rng(7);
  bool all_identical = true;

  for (const std::size_t n : {64u, 192u}) {
    const std::vector<double> a = random_buffer(rng, n * n);
    const std::vector<double> b = random_buffer(rng, n * n);
    std::vector<double> cs(n * n), cp(n * n);
    Row r;
    r.name = "matmul_nn " + std::to_string(n) + "x" + std::to_string(n);
    r.serial_s = time_call([&] {
      kernels::serial::matmul_nn(cs.data(), a.data(), b.data(), n, n, n);
    });
    r.parallel_s = time_call(
        [&] { kernels::matmul_nn(cp.data(), a.data(), b.data(), n, n, n); });
    r.identical = std::memcmp(cs.data(), cp.data(), n * n * sizeof(double)) == 0;
    all_identical = all_identical && r.identical;
    print_row(r);
  }

  {
    const std::size_t rrows = 256, cc = 256;
    const std::vector<double> in = random_buffer(rng, rrows * cc);
    std::vector<double> os(rrows * cc), op(rrows * cc);
    Row r;
    r.name = "softmax_rows 256x256";
    r.serial_s = time_call(
        [&] { kernels::serial::softmax_rows(os.data(), in.data(), rrows, cc); });
    r.parallel_s =
        time_call([&] { kernels::softmax_rows(op.data(), in.data(), rrows, cc); });
    r.identical = std::memcmp(os.data(), op.data(), rrows * cc * sizeof(double)) == 0;
    all_identical = all_identical && r.identical;
    print_row(r);
  }

  {
    const std::size_t rrows = 256, cc = 128;
    const std::vector<double> in = random_buffer(rng, rrows * cc);
    const std::vector<double> gain = random_buffer(rng, cc);
    const std::vector<double> bias = random_buffer(rng, cc);
    std::vector<double> os(rrows * cc), op(rrows * cc);
    std::vector<double> mean_s(rrows), rstd_s(rrows), mean_p(rrows), rstd_p(rrows);
    Row r;
    r.name = "layer_norm_rows 256x128";
    r.serial_s = time_call([&] {
      kernels::serial::layer_norm_rows(os.data(), mean_s.data(), rstd_s.data(),
                                       in.data(), gain.data(), bias.data(), rrows,
                                       cc, 1e-5);
    });
    r.parallel_s = time_call([&] {
      kernels::layer_norm_rows(op.data(), mean_p.data(), rstd_p.data(), in.data(),
                               gain.data(), bias.data(), rrows, cc, 1e-5);
    });
    r.identical = std::memcmp(os.data(), op.data(), rrows * cc * sizeof(double)) == 0;
    all_identical = all_identical && r.identical;
    print_row(r);
  }

  {
    const std::size_t n = 1 << 18;
    const std::vector<double> in = random_buffer(rng, n);
    std::vector<double> os(n), op(n);
    Row r;
    r.name = "gelu 262144";
    r.serial_s =
        time_call([&] { kernels::serial::gelu(os.data(), in.data(), n); });
    r.parallel_s = time_call([&] { kernels::gelu(op.data(), in.data(), n); });
    r.identical = std::memcmp(os.data(), op.data(), n * sizeof(double)) == 0;
    all_identical = all_identical && r.identical;
    print_row(r);
  }

  if (!all_identical) {
    std::printf("serial and parallel outputs diverged\n");
    return 1;
  }
  return 0;
}
