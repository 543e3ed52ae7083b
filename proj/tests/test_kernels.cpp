#include "rad/kernels.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "oracles.hpp"
#include "rad/rng.hpp"

using namespace rad;

namespace {

std::vector<double> rand_vec(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal(scale);
  return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

struct ForceParallel {
  std::size_t saved;
  ForceParallel() : saved(kernels::parallel_threshold()) { kernels::set_parallel_threshold(0); }
  ~ForceParallel() { kernels::set_parallel_threshold(saved); }
};

}  // namespace

TEST_CASE("matmul matches a triple-loop reference") {
  Rng rng(11);
  const std::size_t r = 7, k = 5, c = 9;
  auto a = rand_vec(r * k, rng);
  auto b = rand_vec(k * c, rng);
  std::vector<double> got(r * c);
  kernels::serial::matmul_nn(got.data(), a.data(), b.data(), r, k, c);
  auto want = oracle::matmul(a, b, r, k, c);
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-13));
}

TEST_CASE("matmul_nt and matmul_tn agree with explicit transposition") {
  Rng rng(12);
  const std::size_t r = 4, k = 6, c = 3;
  auto a = rand_vec(r * k, rng);
  auto b = rand_vec(c * k, rng);  // nt: B is (c x k), result = A * B^T
  std::vector<double> bt(k * c);
  kernels::serial::transpose(bt.data(), b.data(), c, k);
  std::vector<double> got(r * c), want(r * c);
  kernels::serial::matmul_nt(got.data(), a.data(), b.data(), r, k, c);
  kernels::serial::matmul_nn(want.data(), a.data(), bt.data(), r, k, c);
  CHECK(bitwise_equal(got, want));

  auto a2 = rand_vec(k * r, rng);  // tn: A is (k x r), result = A^T * B2
  auto b2 = rand_vec(k * c, rng);
  std::vector<double> a2t(r * k);
  kernels::serial::transpose(a2t.data(), a2.data(), k, r);
  std::vector<double> got2(r * c), want2(r * c);
  kernels::serial::matmul_tn(got2.data(), a2.data(), b2.data(), r, k, c);
  kernels::serial::matmul_nn(want2.data(), a2t.data(), b2.data(), r, k, c);
  CHECK(bitwise_equal(got2, want2));
}

TEST_CASE("row softmax matches the scalar formula and sums to one") {
  Rng rng(13);
  const std::size_t r = 5, c = 11;
  auto x = rand_vec(r * c, rng, 3.0);
  std::vector<double> got(r * c);
  kernels::serial::softmax_rows(got.data(), x.data(), r, c);
  for (std::size_t i = 0; i < r; ++i) {
    std::vector<double> row(x.begin() + i * c, x.begin() + (i + 1) * c);
    auto want = oracle::softmax(row);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      CHECK(got[i * c + j] == doctest::Approx(want[j]).epsilon(1e-14));
      sum += got[i * c + j];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("row softmax survives large magnitudes") {
  std::vector<double> x = {1000.0, 1001.0, 999.0, -1000.0, 0.0, -999.5};
  std::vector<double> got(6);
  kernels::serial::softmax_rows(got.data(), x.data(), 2, 3);
  for (double v : got) CHECK(std::isfinite(v));
  CHECK(got[0] + got[1] + got[2] == doctest::Approx(1.0));
  CHECK(got[3] + got[4] + got[5] == doctest::Approx(1.0));
  CHECK(got[4] > 0.99);
}

TEST_CASE("causal softmax zeroes out future positions exactly") {
  Rng rng(14);
  const std::size_t n = 6;
  auto x = rand_vec(n * n, rng);
  std::vector<double> got(n * n);
  kernels::serial::causal_softmax_rows(got.data(), x.data(), n);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j > i) CHECK(got[i * n + j] == 0.0);
      sum += got[i * n + j];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    // visible prefix must agree with a plain softmax over that prefix
    std::vector<double> row(x.begin() + i * n, x.begin() + i * n + i + 1);
    auto want = oracle::softmax(row);
    for (std::size_t j = 0; j <= i; ++j)
      CHECK(got[i * n + j] == doctest::Approx(want[j]).epsilon(1e-14));
  }
}

TEST_CASE("layer norm matches the scalar reference") {
  Rng rng(15);
  const std::size_t r = 4, c = 8;
  auto x = rand_vec(r * c, rng, 2.0);
  auto g = rand_vec(c, rng);
  auto b = rand_vec(c, rng);
  std::vector<double> got(r * c), mean(r), rstd(r);
  kernels::serial::layer_norm_rows(got.data(), mean.data(), rstd.data(), x.data(), g.data(),
                                   b.data(), r, c, 1e-5);
  for (std::size_t i = 0; i < r; ++i) {
    std::vector<double> row(x.begin() + i * c, x.begin() + (i + 1) * c);
    auto want = oracle::layer_norm(row, g, b, 1e-5);
    for (std::size_t j = 0; j < c; ++j)
      CHECK(got[i * c + j] == doctest::Approx(want[j]).epsilon(1e-12));
  }
}

TEST_CASE("gelu reproduces frozen reference values") {
  // reference values computed from x * Phi(x) at 50-digit precision
  const std::vector<std::pair<double, double>> cases = {
      {-3.0, -0.00404969409489028358},
      {-1.5, -0.10021080190328709901},
      {-0.7, -0.16937455655615110929},
      {-0.1, -0.046017216272297104188},
      {0.0, 0.0},
      {0.1, 0.053982783727702901364},
      {0.5, 0.34573123063700655182},
      {1.0, 0.84134474606854294859},
      {2.0, 1.9544997361036415856},
      {3.5, 3.4991857982233756624},
  };
  std::vector<double> in, out(cases.size());
  for (auto& [x, _] : cases) in.push_back(x);
  kernels::serial::gelu(out.data(), in.data(), in.size());
  for (std::size_t i = 0; i < cases.size(); ++i)
    CHECK(out[i] == doctest::Approx(cases[i].second).epsilon(1e-14));
}

TEST_CASE("gelu derivative matches finite differences") {
  std::vector<double> xs = {-2.5, -1.0, -0.3, 0.0, 0.4, 1.2, 2.8};
  std::vector<double> dout(xs.size(), 1.0), din(xs.size(), 0.0);
  kernels::serial::gelu_backward(din.data(), xs.data(), dout.data(), xs.size());
  const double h = 1e-6;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double fp, fm, xp = xs[i] + h, xm = xs[i] - h;
    kernels::serial::gelu(&fp, &xp, 1);
    kernels::serial::gelu(&fm, &xm, 1);
    CHECK(din[i] == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("parallel kernels are bitwise identical to the serial reference") {
  ForceParallel force;
  Rng rng(16);
  const std::size_t r = 17, k = 13, c = 19;
  auto a = rand_vec(r * k, rng);
  auto b = rand_vec(k * c, rng);
  auto bt = rand_vec(c * k, rng);
  auto at = rand_vec(k * r, rng);

  std::vector<double> s(r * c), p(r * c);
  kernels::serial::matmul_nn(s.data(), a.data(), b.data(), r, k, c);
  kernels::matmul_nn(p.data(), a.data(), b.data(), r, k, c);
  CHECK(bitwise_equal(s, p));

  kernels::serial::matmul_nt(s.data(), a.data(), bt.data(), r, k, c);
  kernels::matmul_nt(p.data(), a.data(), bt.data(), r, k, c);
  CHECK(bitwise_equal(s, p));

  kernels::serial::matmul_tn(s.data(), at.data(), b.data(), r, k, c);
  kernels::matmul_tn(p.data(), at.data(), b.data(), r, k, c);
  CHECK(bitwise_equal(s, p));

  auto x = rand_vec(r * k, rng, 2.0);
  auto y = rand_vec(r * k, rng, 2.0);
  std::vector<double> se(r * k), pe(r * k);
  kernels::serial::add(se.data(), x.data(), y.data(), se.size());
  kernels::add(pe.data(), x.data(), y.data(), pe.size());
  CHECK(bitwise_equal(se, pe));
  kernels::serial::mul(se.data(), x.data(), y.data(), se.size());
  kernels::mul(pe.data(), x.data(), y.data(), pe.size());
  CHECK(bitwise_equal(se, pe));
  kernels::serial::gelu(se.data(), x.data(), se.size());
  kernels::gelu(pe.data(), x.data(), pe.size());
  CHECK(bitwise_equal(se, pe));

  const std::size_t n = 23;
  auto sq = rand_vec(n * n, rng, 3.0);
  std::vector<double> ss(n * n), ps(n * n);
  kernels::serial::softmax_rows(ss.data(), sq.data(), n, n);
  kernels::softmax_rows(ps.data(), sq.data(), n, n);
  CHECK(bitwise_equal(ss, ps));
  kernels::serial::causal_softmax_rows(ss.data(), sq.data(), n);
  kernels::causal_softmax_rows(ps.data(), sq.data(), n);
  CHECK(bitwise_equal(ss, ps));

  auto gain = rand_vec(k, rng);
  auto bias = rand_vec(k, rng);
  std::vector<double> sm(r), sr(r), pm(r), pr(r);
  std::vector<double> sl(r * k), pl(r * k);
  kernels::serial::layer_norm_rows(sl.data(), sm.data(), sr.data(), x.data(), gain.data(),
                                   bias.data(), r, k, 1e-5);
  kernels::layer_norm_rows(pl.data(), pm.data(), pr.data(), x.data(), gain.data(),
                           bias.data(), r, k, 1e-5);
  CHECK(bitwise_equal(sl, pl));
  CHECK(bitwise_equal(sm, pm));
  CHECK(bitwise_equal(sr, pr));

  // backward twins
  auto dout = rand_vec(r * k, rng);
  std::vector<double> dsx(r * k, 0.1), dpx(r * k, 0.1);
  std::vector<double> dsg(k, 0.2), dpg(k, 0.2);
  std::vector<double> dsb(k, 0.3), dpb(k, 0.3);
  kernels::serial::layer_norm_rows_backward(dsx.data(), dsg.data(), dsb.data(), x.data(),
                                            gain.data(), dout.data(), sm.data(), sr.data(),
                                            r, k);
  kernels::layer_norm_rows_backward(dpx.data(), dpg.data(), dpb.data(), x.data(),
                                    gain.data(), dout.data(), pm.data(), pr.data(), r, k);
  CHECK(bitwise_equal(dsx, dpx));
  CHECK(bitwise_equal(dsg, dpg));
  CHECK(bitwise_equal(dsb, dpb));

  auto sdout = rand_vec(n * n, rng);
  std::vector<double> dss(n * n, 0.05), dps(n * n, 0.05);
  kernels::serial::softmax_rows_backward(dss.data(), ss.data(), sdout.data(), n, n);
  kernels::softmax_rows_backward(dps.data(), ps.data(), sdout.data(), n, n);
  CHECK(bitwise_equal(dss, dps));

  std::vector<double> dgs(r * k, 0.0), dgp(r * k, 0.0);
  kernels::serial::gelu_backward(dgs.data(), x.data(), dout.data(), r * k);
  kernels::gelu_backward(dgp.data(), x.data(), dout.data(), r * k);
  CHECK(bitwise_equal(dgs, dgp));

  std::vector<double> accs(r * k, 1.5), accp(r * k, 1.5);
  kernels::serial::accumulate_scaled(accs.data(), x.data(), -0.75, r * k);
  kernels::accumulate_scaled(accp.data(), x.data(), -0.75, r * k);
  CHECK(bitwise_equal(accs, accp));
  kernels::serial::accumulate_product(accs.data(), x.data(), y.data(), r * k);
  kernels::accumulate_product(accp.data(), x.data(), y.data(), r * k);
  CHECK(bitwise_equal(accs, accp));

  std::vector<double> cs(k, 0.5), cp(k, 0.5);
  kernels::serial::col_sums_accumulate(cs.data(), x.data(), r, k);
  kernels::col_sums_accumulate(cp.data(), x.data(), r, k);
  CHECK(bitwise_equal(cs, cp));

  std::vector<double> ts(r * k), tp(r * k);
  kernels::serial::transpose(ts.data(), x.data(), r, k);
  kernels::transpose(tp.data(), x.data(), r, k);
  CHECK(bitwise_equal(ts, tp));

  std::vector<double> rb_s(r * k), rb_p(r * k);
  kernels::serial::add_row_bias(rb_s.data(), x.data(), bias.data(), r, k);
  kernels::add_row_bias(rb_p.data(), x.data(), bias.data(), r, k);
  CHECK(bitwise_equal(rb_s, rb_p));
}

TEST_CASE("dispatch falls back to serial below the work threshold") {
  kernels::set_parallel_threshold(1u << 30);
  Rng rng(17);
  auto a = rand_vec(12, rng);
  auto b = rand_vec(12, rng);
  std::vector<double> s(12), p(12);
  kernels::serial::add(s.data(), a.data(), b.data(), 12);
  kernels::add(p.data(), a.data(), b.data(), 12);
  CHECK(bitwise_equal(s, p));
  kernels::set_parallel_threshold(32768);
}
