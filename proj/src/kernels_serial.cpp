#include "rad/kernels.hpp"

#include <cmath>

namespace rad::kernels::serial {

void matmul_nn(double* c, const double* a, const double* b,
               std::size_t r, std::size_t k, std::size_t cc) {
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < cc; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * cc + j];
      c[i * cc + j] = acc;
    }
  }
}

void matmul_nt(double* c, const double* a, const double* b,
               std::size_t r, std::size_t k, std::size_t cc) {
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < cc; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * cc + j] = acc;
    }
  }
}

void matmul_tn(double* c, const double* a, const double* b,
               std::size_t r, std::size_t k, std::size_t cc) {
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < cc; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[p * r + i] * b[p * cc + j];
      c[i * cc + j] = acc;
    }
  }
}

void add(double* out, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(double* out, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(double* out, const double* a, const double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(double* out, const double* a, double s, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

void accumulate_scaled(double* dst, const double* src, double s, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += src[i] * s;
}

void accumulate_product(double* dst, const double* x, const double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += x[i] * y[i];
}

void softmax_rows(double* out, const double* in, std::size_t r, std::size_t c) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = in + i * c;
    double* orow = out + i * c;
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j)
      if (row[j] > mx) mx = row[j];
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < c; ++j) orow[j] *= inv;
  }
}

void causal_softmax_rows(double* out, const double* in, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = in + i * n;
    double* orow = out + i * n;
    double mx = row[0];
    for (std::size_t j = 1; j <= i; ++j)
      if (row[j] > mx) mx = row[j];
    double sum = 0.0;
    for (std::size_t j = 0; j <= i; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j <= i; ++j) orow[j] *= inv;
    for (std::size_t j = i + 1; j < n; ++j) orow[j] = 0.0;
  }
}

void softmax_rows_backward(double* din, const double* y, const double* dout,
                           std::size_t r, std::size_t c) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* yr = y + i * c;
    const double* dr = dout + i * c;
    double dot = 0.0;
    for (std::size_t j = 0; j < c; ++j) dot += dr[j] * yr[j];
    for (std::size_t j = 0; j < c; ++j) din[i * c + j] += yr[j] * (dr[j] - dot);
  }
}

void layer_norm_rows(double* out, double* mean, double* rstd, const double* in,
                     const double* gain, const double* bias,
                     std::size_t r, std::size_t c, double eps) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = in + i * c;
    double m = 0.0;
    for (std::size_t j = 0; j < c; ++j) m += row[j];
    m /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = row[j] - m;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double rs = 1.0 / std::sqrt(var + eps);
    mean[i] = m;
    rstd[i] = rs;
    for (std::size_t j = 0; j < c; ++j)
      out[i * c + j] = (row[j] - m) * rs * gain[j] + bias[j];
  }
}

void layer_norm_rows_backward(double* din, double* dgain, double* dbias,
                              const double* in, const double* gain,
                              const double* dout, const double* mean,
                              const double* rstd, std::size_t r, std::size_t c) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = in + i * c;
    const double* dr = dout + i * c;
    const double m = mean[i];
    const double rs = rstd[i];
    double s1 = 0.0;
    double s2 = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double yn = (row[j] - m) * rs;
      const double dz = dr[j] * gain[j];
      s1 += dz;
      s2 += dz * yn;
    }
    s1 /= static_cast<double>(c);
    s2 /= static_cast<double>(c);
    for (std::size_t j = 0; j < c; ++j) {
      const double yn = (row[j] - m) * rs;
      const double dz = dr[j] * gain[j];
      din[i * c + j] += rs * (dz - s1 - yn * s2);
    }
  }
  // column reductions kept separate so the parallel twin can split by column
  for (std::size_t j = 0; j < c; ++j) {
    double dg = 0.0;
    double db = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
      const double yn = (in[i * c + j] - mean[i]) * rstd[i];
      dg += dout[i * c + j] * yn;
      db += dout[i * c + j];
    }
    dgain[j] += dg;
    dbias[j] += db;
  }
}

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

void gelu(double* out, const double* in, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double x = in[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
}

void gelu_backward(double* din, const double* in, const double* dout,
                   std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double x = in[i];
    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    din[i] += dout[i] * (cdf + x * pdf);
  }
}

void add_row_bias(double* out, const double* mat, const double* bias,
                  std::size_t r, std::size_t c) {
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = mat[i * c + j] + bias[j];
}

void col_sums_accumulate(double* dbias, const double* dout,
                         std::size_t r, std::size_t c) {
  for (std::size_t j = 0; j < c; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < r; ++i) acc += dout[i * c + j];
    dbias[j] += acc;
  }
}

void transpose(double* out, const double* in, std::size_t r, std::size_t c) {
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
}

}  // namespace rad::kernels::serial
