#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rad/errors.hpp"
#include "rad/rng.hpp"

// Dense 64-bit tensor with reverse-mode automatic differentiation.
// Values are row-major; a Tensor is a cheap handle onto a shared graph node.
// The computation graph is single-threaded; kernels may parallelize their
// inner loops but traversal and gradient accumulation stay on one thread.

namespace rad {

using TokenId = std::int32_t;

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily; same length as value when present
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backprop;
};

}  // namespace detail

bool grad_enabled();

// RAII scope that disables graph recording (nestable).
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<std::size_t> shape, double fill);
  static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double v);
  static Tensor randn(std::vector<std::size_t> shape, Rng& rng, double stddev,
                      bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const;
  std::size_t ndim() const;
  std::size_t numel() const;
  std::size_t rows() const;  // 2-D only
  std::size_t cols() const;  // 2-D only

  const std::vector<double>& values() const;
  // Direct mutation of a leaf's storage (optimizer updates, finite differences).
  std::vector<double>& mutable_values();
  double item() const;                       // scalar tensors
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool v);
  bool has_grad() const;
  const std::vector<double>& grad() const;   // throws if backward never reached this node
  double grad_at(std::size_t i) const;       // 0.0 when no gradient was accumulated
  void zero_grad();

  // Reverse-mode pass from a scalar; visits each node once in topological
  // order and accumulates (never overwrites) into existing grad buffers.
  void backward();

  Tensor detach() const;
  const char* op_name() const;

  detail::Node* node() const { return node_.get(); }

 private:
  explicit Tensor(detail::NodePtr n) : node_(std::move(n)) {}
  detail::NodePtr node_;

  friend Tensor make_op(const char* name, std::vector<std::size_t> shape,
                        std::vector<double> value, std::vector<Tensor> parents,
                        std::function<void(detail::Node&)> backprop);
};

// Builds a graph node from precomputed values. backprop reads self.grad and
// accumulates into the parents' grad buffers; it is dropped entirely when
// gradient tracking is off or no parent requires gradients.
Tensor make_op(const char* name, std::vector<std::size_t> shape,
               std::vector<double> value, std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backprop);

// ---- differentiable operations ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor causal_softmax_rows(const Tensor& a);  // square score matrix
Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double eps = 1e-5);
Tensor gelu(const Tensor& x);
Tensor add_row_bias(const Tensor& mat, const Tensor& bias);
Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1);
Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor gather_rows(const Tensor& table, const std::vector<TokenId>& ids);
// Row-wise selection: row t of the result is replacements row t where
// use_replacement[t] is set, otherwise base row t. Replacement rows enter as
// constants; gradients flow only into the kept base rows.
Tensor compose_rows(const Tensor& base, const Tensor& replacements,
                    const std::vector<std::uint8_t>& use_replacement);
Tensor mean_all(const Tensor& a);
Tensor sum_all(const Tensor& a);
// Mean negative log probability of targets under per-row distributions,
// restricted to rows where keep[t] is set; log is clamped at 1e-12.
Tensor nll_from_probs(const Tensor& probs, const std::vector<TokenId>& targets,
                      const std::vector<std::uint8_t>& keep);
Tensor dropout(const Tensor& x, double rate, Rng& rng);

// Central-difference check of reverse-mode gradients. f must rebuild the loss
// graph from the current parameter values on every call. Returns the maximum
// over all coordinates of |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
double grad_check(const std::function<Tensor()>& f, std::vector<Tensor>& params,
                  double h);

std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace rad
