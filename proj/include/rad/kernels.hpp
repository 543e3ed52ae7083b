#pragma once

#include <cstddef>

// Dense numeric kernels on raw row-major buffers. Every kernel exists twice:
// rad::kernels::serial holds the plain reference loops, and the functions in
// rad::kernels dispatch to OpenMP-parallel versions of the same arithmetic.
// Parallelization is strictly per output element (static row/chunk split, no
// cross-thread floating-point reductions), so both versions produce
// bit-identical results for any thread count. Tests assert that equivalence;
// the bench target measures the gap.

namespace rad::kernels {

// Work threshold below which the parallel versions stay on one thread.
// Tests set it to 0 to force parallel execution on small inputs.
std::size_t parallel_threshold();
void set_parallel_threshold(std::size_t flops);

namespace serial {

// c[r×cc] = a[r×k] · b[k×cc]
void matmul_nn(double* c, const double* a, const double* b,
               std::size_t r, std::size_t k, std::size_t cc);
// c[r×cc] = a[r×k] · b[cc×k]^T
void matmul_nt(double* c, const double* a, const double* b,
               std::size_t r, std::size_t k, std::size_t cc);
// c[r×cc] = a[k×r]^T · b[k×cc]
void matmul_tn(double* c, const double* a, const double* b,
               std::size_t r, std::size_t k, std::size_t cc);

void add(double* out, const double* a, const double* b, std::size_t n);
void sub(double* out, const double* a, const double* b, std::size_t n);
void mul(double* out, const double* a, const double* b, std::size_t n);
void scale(double* out, const double* a, double s, std::size_t n);
// dst[i] += src[i] * s
void accumulate_scaled(double* dst, const double* src, double s, std::size_t n);
// dst[i] += x[i] * y[i]
void accumulate_product(double* dst, const double* x, const double* y, std::size_t n);

// row-wise softmax with max subtraction
void softmax_rows(double* out, const double* in, std::size_t r, std::size_t c);
// square score matrix; row i gets zero weight on columns j > i
void causal_softmax_rows(double* out, const double* in, std::size_t n);
// din[i][j] += y[i][j] * (dout[i][j] - sum_k dout[i][k] * y[i][k])
void softmax_rows_backward(double* din, const double* y, const double* dout,
                           std::size_t r, std::size_t c);

// out = (in - mean) * rstd * gain + bias per row; mean/rstd saved for backward
void layer_norm_rows(double* out, double* mean, double* rstd, const double* in,
                     const double* gain, const double* bias,
                     std::size_t r, std::size_t c, double eps);
void layer_norm_rows_backward(double* din, double* dgain, double* dbias,
                              const double* in, const double* gain,
                              const double* dout, const double* mean,
                              const double* rstd, std::size_t r, std::size_t c);

// exact erf form: 0.5 * x * (1 + erf(x / sqrt(2)))
void gelu(double* out, const double* in, std::size_t n);
void gelu_backward(double* din, const double* in, const double* dout,
                   std::size_t n);

void add_row_bias(double* out, const double* mat, const double* bias,
                  std::size_t r, std::size_t c);
// dbias[j] += sum_i dout[i][j]
void col_sums_accumulate(double* dbias, const double* dout,
                         std::size_t r, std::size_t c);

void transpose(double* out, const double* in, std::size_t r, std::size_t c);

}  // namespace serial

// Parallel dispatch twins (same signatures, same arithmetic).
void matmul_nn(double* c, const double* a, const double* b,
               std::size_t r, std::size_t k, std::size_t cc);
void matmul_nt(double* c, const double* a, const double* b,
               std::size_t r, std::size_t k, std::size_t cc);
void matmul_tn(double* c, const double* a, const double* b,
               std::size_t r, std::size_t k, std::size_t cc);
void add(double* out, const double* a, const double* b, std::size_t n);
void sub(double* out, const double* a, const double* b, std::size_t n);
void mul(double* out, const double* a, const double* b, std::size_t n);
void scale(double* out, const double* a, double s, std::size_t n);
void accumulate_scaled(double* dst, const double* src, double s, std::size_t n);
void accumulate_product(double* dst, const double* x, const double* y, std::size_t n);
void softmax_rows(double* out, const double* in, std::size_t r, std::size_t c);
void causal_softmax_rows(double* out, const double* in, std::size_t n);
void softmax_rows_backward(double* din, const double* y, const double* dout,
                           std::size_t r, std::size_t c);
void layer_norm_rows(double* out, double* mean, double* rstd, const double* in,
                     const double* gain, const double* bias,
                     std::size_t r, std::size_t c, double eps);
void layer_norm_rows_backward(double* din, double* dgain, double* dbias,
                              const double* in, const double* gain,
                              const double* dout, const double* mean,
                              const double* rstd, std::size_t r, std::size_t c);
void gelu(double* out, const double* in, std::size_t n);
void gelu_backward(double* din, const double* in, const double* dout,
                   std::size_t n);
void add_row_bias(double* out, const double* mat, const double* bias,
                  std::size_t r, std::size_t c);
void col_sums_accumulate(double* dbias, const double* dout,
                         std::size_t r, std::size_t c);
void transpose(double* out, const double* in, std::size_t r, std::size_t c);

}  // namespace rad::kernels
