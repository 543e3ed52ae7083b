#include "rad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "rad/kernels.hpp"

namespace rad {

namespace {

thread_local int g_no_grad_depth = 0;

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

void ensure_grad(detail::Node& n) {
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
}

detail::Node& deref(const Tensor& t, const char* who) {
  if (!t.defined()) throw ContractError(std::string(who) + ": undefined tensor");
  return *t.node();
}

void require_2d(const detail::Node& n, const char* who) {
  if (n.shape.size() != 2)
    throw DimensionError(std::string(who) + ": expected a 2-D tensor, got shape " +
                         shape_str(n.shape));
}

void require_same_shape(const detail::Node& a, const detail::Node& b, const char* who) {
  if (a.shape != b.shape)
    throw DimensionError(std::string(who) + ": shape mismatch (" + shape_str(a.shape) +
                         " vs " + shape_str(b.shape) + ")");
}

void require_finite(const detail::Node& n, const char* who) {
  for (double v : n.value)
    if (!std::isfinite(v))
      throw NumericError(std::string(who) + ": non-finite input entry");
}

}  // namespace

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool grad_enabled() { return g_no_grad_depth == 0; }

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

// ---- Tensor basics ----

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  auto n = std::make_shared<detail::Node>();
  n->value.assign(product(shape), 0.0);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double fill) {
  auto n = std::make_shared<detail::Node>();
  n->value.assign(product(shape), fill);
  n->shape = std::move(shape);
  return Tensor(std::move(n));
}

Tensor Tensor::from_data(std::vector<std::size_t> shape, std::vector<double> data,
                         bool requires_grad) {
  if (product(shape) != data.size())
    throw DimensionError("from_data: shape " + shape_str(shape) + " expects " +
                         std::to_string(product(shape)) + " values, got " +
                         std::to_string(data.size()));
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return from_data({1}, {v}); }

Tensor Tensor::randn(std::vector<std::size_t> shape, Rng& rng, double stddev,
                     bool requires_grad) {
  auto n = std::make_shared<detail::Node>();
  n->value.resize(product(shape));
  for (double& v : n->value) v = rng.normal(stddev);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

const std::vector<std::size_t>& Tensor::shape() const { return deref(*this, "shape").shape; }
std::size_t Tensor::ndim() const { return deref(*this, "ndim").shape.size(); }
std::size_t Tensor::numel() const { return deref(*this, "numel").value.size(); }

std::size_t Tensor::rows() const {
  auto& n = deref(*this, "rows");
  require_2d(n, "rows");
  return n.shape[0];
}

std::size_t Tensor::cols() const {
  auto& n = deref(*this, "cols");
  require_2d(n, "cols");
  return n.shape[1];
}

const std::vector<double>& Tensor::values() const { return deref(*this, "values").value; }
std::vector<double>& Tensor::mutable_values() { return deref(*this, "mutable_values").value; }

double Tensor::item() const {
  auto& n = deref(*this, "item");
  if (n.value.size() != 1)
    throw ContractError("item: tensor of shape " + shape_str(n.shape) + " is not scalar");
  return n.value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  auto& n = deref(*this, "at");
  require_2d(n, "at");
  if (r >= n.shape[0] || c >= n.shape[1])
    throw DimensionError("at: index out of range for shape " + shape_str(n.shape));
  return n.value[r * n.shape[1] + c];
}

bool Tensor::requires_grad() const { return deref(*this, "requires_grad").requires_grad; }
void Tensor::set_requires_grad(bool v) { deref(*this, "set_requires_grad").requires_grad = v; }
bool Tensor::has_grad() const { return !deref(*this, "has_grad").grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  auto& n = deref(*this, "grad");
  if (n.grad.empty())
    throw ContractError("grad: no gradient present; run backward first");
  return n.grad;
}

double Tensor::grad_at(std::size_t i) const {
  auto& n = deref(*this, "grad_at");
  return n.grad.empty() ? 0.0 : n.grad[i];
}

void Tensor::zero_grad() {
  auto& n = deref(*this, "zero_grad");
  std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  auto& n = deref(*this, "detach");
  return from_data(n.shape, n.value, false);
}

const char* Tensor::op_name() const { return deref(*this, "op_name").op; }

void Tensor::backward() {
  auto& root = deref(*this, "backward");
  if (root.value.size() != 1)
    throw ContractError("backward: root must be scalar, got shape " + shape_str(root.shape));

  // iterative post-order so deep generation graphs cannot overflow the stack
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(&root, 0);
  visited.insert(&root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  ensure_grad(root);
  root.grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->requires_grad && n->backprop && !n->grad.empty()) n->backprop(*n);
  }
}

// ---- op construction ----

Tensor make_op(const char* name, std::vector<std::size_t> shape,
               std::vector<double> value, std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backprop) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = name;
  bool track = false;
  if (grad_enabled()) {
    for (const Tensor& p : parents)
      if (p.defined() && p.requires_grad()) track = true;
  }
  if (track) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (Tensor& p : parents) n->parents.push_back(p.node_);
    n->backprop = std::move(backprop);
  }
  return Tensor(std::move(n));
}

namespace {

// Accumulates g into parent i's grad buffer when that parent is tracked.
double* parent_grad(detail::Node& self, std::size_t i) {
  detail::Node& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  ensure_grad(p);
  return p.grad.data();
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  auto& na = deref(a, "add");
  auto& nb = deref(b, "add");
  require_same_shape(na, nb, "add");
  std::vector<double> out(na.value.size());
  kernels::add(out.data(), na.value.data(), nb.value.data(), out.size());
  return make_op("add", na.shape, std::move(out), {a, b}, [](detail::Node& self) {
    const std::size_t n = self.value.size();
    if (double* g = parent_grad(self, 0)) kernels::accumulate_scaled(g, self.grad.data(), 1.0, n);
    if (double* g = parent_grad(self, 1)) kernels::accumulate_scaled(g, self.grad.data(), 1.0, n);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  auto& na = deref(a, "sub");
  auto& nb = deref(b, "sub");
  require_same_shape(na, nb, "sub");
  std::vector<double> out(na.value.size());
  kernels::sub(out.data(), na.value.data(), nb.value.data(), out.size());
  return make_op("sub", na.shape, std::move(out), {a, b}, [](detail::Node& self) {
    const std::size_t n = self.value.size();
    if (double* g = parent_grad(self, 0)) kernels::accumulate_scaled(g, self.grad.data(), 1.0, n);
    if (double* g = parent_grad(self, 1)) kernels::accumulate_scaled(g, self.grad.data(), -1.0, n);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  auto& na = deref(a, "mul");
  auto& nb = deref(b, "mul");
  require_same_shape(na, nb, "mul");
  std::vector<double> out(na.value.size());
  kernels::mul(out.data(), na.value.data(), nb.value.data(), out.size());
  return make_op("mul", na.shape, std::move(out), {a, b}, [](detail::Node& self) {
    const std::size_t n = self.value.size();
    if (double* g = parent_grad(self, 0))
      kernels::accumulate_product(g, self.grad.data(), self.parents[1]->value.data(), n);
    if (double* g = parent_grad(self, 1))
      kernels::accumulate_product(g, self.grad.data(), self.parents[0]->value.data(), n);
  });
}

Tensor scale(const Tensor& a, double s) {
  auto& na = deref(a, "scale");
  std::vector<double> out(na.value.size());
  kernels::scale(out.data(), na.value.data(), s, out.size());
  return make_op("scale", na.shape, std::move(out), {a}, [s](detail::Node& self) {
    if (double* g = parent_grad(self, 0))
      kernels::accumulate_scaled(g, self.grad.data(), s, self.value.size());
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  auto& na = deref(a, "matmul");
  auto& nb = deref(b, "matmul");
  require_2d(na, "matmul");
  require_2d(nb, "matmul");
  if (na.shape[1] != nb.shape[0])
    throw DimensionError("matmul: inner dimensions disagree (" + shape_str(na.shape) +
                         " vs " + shape_str(nb.shape) + ")");
  const std::size_t r = na.shape[0], k = na.shape[1], c = nb.shape[1];
  std::vector<double> out(r * c);
  kernels::matmul_nn(out.data(), na.value.data(), nb.value.data(), r, k, c);
  return make_op("matmul", {r, c}, std::move(out), {a, b}, [r, k, c](detail::Node& self) {
    if (double* g = parent_grad(self, 0)) {
      std::vector<double> tmp(r * k);
      kernels::matmul_nt(tmp.data(), self.grad.data(), self.parents[1]->value.data(), r, c, k);
      kernels::accumulate_scaled(g, tmp.data(), 1.0, tmp.size());
    }
    if (double* g = parent_grad(self, 1)) {
      std::vector<double> tmp(k * c);
      kernels::matmul_tn(tmp.data(), self.parents[0]->value.data(), self.grad.data(), k, r, c);
      kernels::accumulate_scaled(g, tmp.data(), 1.0, tmp.size());
    }
  });
}

Tensor transpose(const Tensor& a) {
  auto& na = deref(a, "transpose");
  require_2d(na, "transpose");
  const std::size_t r = na.shape[0], c = na.shape[1];
  std::vector<double> out(r * c);
  kernels::transpose(out.data(), na.value.data(), r, c);
  return make_op("transpose", {c, r}, std::move(out), {a}, [r, c](detail::Node& self) {
    if (double* g = parent_grad(self, 0)) {
      std::vector<double> tmp(r * c);
      kernels::transpose(tmp.data(), self.grad.data(), c, r);
      kernels::accumulate_scaled(g, tmp.data(), 1.0, tmp.size());
    }
  });
}

Tensor softmax_rows(const Tensor& a) {
  auto& na = deref(a, "softmax_rows");
  require_2d(na, "softmax_rows");
  require_finite(na, "softmax_rows");
  const std::size_t r = na.shape[0], c = na.shape[1];
  if (r > 0 && c == 0) throw DimensionError("softmax_rows: empty rows");
  std::vector<double> out(r * c);
  kernels::softmax_rows(out.data(), na.value.data(), r, c);
  return make_op("softmax_rows", na.shape, std::move(out), {a}, [r, c](detail::Node& self) {
    if (double* g = parent_grad(self, 0))
      kernels::softmax_rows_backward(g, self.value.data(), self.grad.data(), r, c);
  });
}

Tensor causal_softmax_rows(const Tensor& a) {
  auto& na = deref(a, "causal_softmax_rows");
  require_2d(na, "causal_softmax_rows");
  if (na.shape[0] != na.shape[1])
    throw DimensionError("causal_softmax_rows: matrix must be square, got " +
                         shape_str(na.shape));
  require_finite(na, "causal_softmax_rows");
  const std::size_t n = na.shape[0];
  std::vector<double> out(n * n);
  kernels::causal_softmax_rows(out.data(), na.value.data(), n);
  // masked columns have zero output, so the generic softmax backward leaves
  // their input gradients at exactly zero
  return make_op("causal_softmax_rows", na.shape, std::move(out), {a},
                 [n](detail::Node& self) {
                   if (double* g = parent_grad(self, 0))
                     kernels::softmax_rows_backward(g, self.value.data(), self.grad.data(), n, n);
                 });
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  auto& nx = deref(x, "layer_norm_rows");
  auto& ng = deref(gain, "layer_norm_rows");
  auto& nb = deref(bias, "layer_norm_rows");
  require_2d(nx, "layer_norm_rows");
  const std::size_t r = nx.shape[0], c = nx.shape[1];
  if (ng.value.size() != c || nb.value.size() != c)
    throw DimensionError("layer_norm_rows: gain/bias length must match columns (" +
                         shape_str(nx.shape) + " vs " + shape_str(ng.shape) + ")");
  std::vector<double> out(r * c);
  auto mean = std::make_shared<std::vector<double>>(r);
  auto rstd = std::make_shared<std::vector<double>>(r);
  kernels::layer_norm_rows(out.data(), mean->data(), rstd->data(), nx.value.data(),
                           ng.value.data(), nb.value.data(), r, c, eps);
  return make_op("layer_norm_rows", nx.shape, std::move(out), {x, gain, bias},
                 [r, c, mean, rstd](detail::Node& self) {
                   double* dx = parent_grad(self, 0);
                   double* dg = parent_grad(self, 1);
                   double* db = parent_grad(self, 2);
                   std::vector<double> dx_sink, dg_sink, db_sink;
                   if (!dx) { dx_sink.assign(r * c, 0.0); dx = dx_sink.data(); }
                   if (!dg) { dg_sink.assign(c, 0.0); dg = dg_sink.data(); }
                   if (!db) { db_sink.assign(c, 0.0); db = db_sink.data(); }
                   kernels::layer_norm_rows_backward(dx, dg, db, self.parents[0]->value.data(),
                                                     self.parents[1]->value.data(),
                                                     self.grad.data(), mean->data(),
                                                     rstd->data(), r, c);
                 });
}

Tensor gelu(const Tensor& x) {
  auto& nx = deref(x, "gelu");
  std::vector<double> out(nx.value.size());
  kernels::gelu(out.data(), nx.value.data(), out.size());
  return make_op("gelu", nx.shape, std::move(out), {x}, [](detail::Node& self) {
    if (double* g = parent_grad(self, 0))
      kernels::gelu_backward(g, self.parents[0]->value.data(), self.grad.data(),
                             self.value.size());
  });
}

Tensor add_row_bias(const Tensor& mat, const Tensor& bias) {
  auto& nm = deref(mat, "add_row_bias");
  auto& nb = deref(bias, "add_row_bias");
  require_2d(nm, "add_row_bias");
  const std::size_t r = nm.shape[0], c = nm.shape[1];
  if (nb.value.size() != c)
    throw DimensionError("add_row_bias: bias length must match columns (" +
                         shape_str(nm.shape) + " vs " + shape_str(nb.shape) + ")");
  std::vector<double> out(r * c);
  kernels::add_row_bias(out.data(), nm.value.data(), nb.value.data(), r, c);
  return make_op("add_row_bias", nm.shape, std::move(out), {mat, bias},
                 [r, c](detail::Node& self) {
                   if (double* g = parent_grad(self, 0))
                     kernels::accumulate_scaled(g, self.grad.data(), 1.0, r * c);
                   if (double* g = parent_grad(self, 1))
                     kernels::col_sums_accumulate(g, self.grad.data(), r, c);
                 });
}

Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1) {
  auto& na = deref(a, "slice_rows");
  require_2d(na, "slice_rows");
  const std::size_t r = na.shape[0], c = na.shape[1];
  if (r0 > r1 || r1 > r)
    throw DimensionError("slice_rows: range [" + std::to_string(r0) + ", " +
                         std::to_string(r1) + ") invalid for shape " + shape_str(na.shape));
  std::vector<double> out(na.value.begin() + static_cast<std::ptrdiff_t>(r0 * c),
                          na.value.begin() + static_cast<std::ptrdiff_t>(r1 * c));
  return make_op("slice_rows", {r1 - r0, c}, std::move(out), {a},
                 [r0, c](detail::Node& self) {
                   if (double* g = parent_grad(self, 0))
                     kernels::accumulate_scaled(g + r0 * c, self.grad.data(), 1.0,
                                                self.value.size());
                 });
}

Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
  auto& na = deref(a, "slice_cols");
  require_2d(na, "slice_cols");
  const std::size_t r = na.shape[0], c = na.shape[1];
  if (c0 > c1 || c1 > c)
    throw DimensionError("slice_cols: range [" + std::to_string(c0) + ", " +
                         std::to_string(c1) + ") invalid for shape " + shape_str(na.shape));
  const std::size_t w = c1 - c0;
  std::vector<double> out(r * w);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = na.value[i * c + c0 + j];
  return make_op("slice_cols", {r, w}, std::move(out), {a},
                 [r, c, c0, w](detail::Node& self) {
                   if (double* g = parent_grad(self, 0))
                     for (std::size_t i = 0; i < r; ++i)
                       for (std::size_t j = 0; j < w; ++j)
                         g[i * c + c0 + j] += self.grad[i * w + j];
                 });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no parts");
  std::size_t c = 0, r = 0;
  bool have_c = false;
  for (const Tensor& p : parts) {
    auto& np = deref(p, "concat_rows");
    require_2d(np, "concat_rows");
    if (!have_c) { c = np.shape[1]; have_c = true; }
    if (np.shape[1] != c)
      throw DimensionError("concat_rows: column counts differ (" + shape_str(np.shape) + ")");
    r += np.shape[0];
  }
  std::vector<double> out;
  out.reserve(r * c);
  for (const Tensor& p : parts)
    out.insert(out.end(), p.values().begin(), p.values().end());
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return make_op("concat_rows", {r, c}, std::move(out), std::move(parents),
                 [](detail::Node& self) {
                   std::size_t off = 0;
                   for (std::size_t i = 0; i < self.parents.size(); ++i) {
                     const std::size_t sz = self.parents[i]->value.size();
                     if (double* g = parent_grad(self, i))
                       kernels::accumulate_scaled(g, self.grad.data() + off, 1.0, sz);
                     off += sz;
                   }
                 });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no parts");
  const std::size_t r = deref(parts[0], "concat_cols").shape.at(0);
  std::size_t c = 0;
  for (const Tensor& p : parts) {
    auto& np = deref(p, "concat_cols");
    require_2d(np, "concat_cols");
    if (np.shape[0] != r)
      throw DimensionError("concat_cols: row counts differ (" + shape_str(np.shape) + ")");
    c += np.shape[1];
  }
  std::vector<double> out(r * c);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t w = p.cols();
    const auto& v = p.values();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * c + off + j] = v[i * w + j];
    off += w;
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return make_op("concat_cols", {r, c}, std::move(out), std::move(parents),
                 [r, c](detail::Node& self) {
                   std::size_t off = 0;
                   for (std::size_t i = 0; i < self.parents.size(); ++i) {
                     const std::size_t w = self.parents[i]->shape[1];
                     if (double* g = parent_grad(self, i))
                       for (std::size_t row = 0; row < r; ++row)
                         for (std::size_t j = 0; j < w; ++j)
                           g[row * w + j] += self.grad[row * c + off + j];
                     off += w;
                   }
                 });
}

Tensor gather_rows(const Tensor& table, const std::vector<TokenId>& ids) {
  auto& nt = deref(table, "gather_rows");
  require_2d(nt, "gather_rows");
  const std::size_t v = nt.shape[0], c = nt.shape[1];
  for (TokenId id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= v)
      throw VocabularyError("gather_rows: id " + std::to_string(id) +
                            " outside table of " + std::to_string(v) + " rows");
  std::vector<double> out(ids.size() * c);
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(nt.value.begin() + static_cast<std::size_t>(ids[i]) * c, c,
                out.begin() + i * c);
  auto ids_copy = std::make_shared<std::vector<TokenId>>(ids);
  return make_op("gather_rows", {ids.size(), c}, std::move(out), {table},
                 [c, ids_copy](detail::Node& self) {
                   if (double* g = parent_grad(self, 0))
                     for (std::size_t i = 0; i < ids_copy->size(); ++i)
                       kernels::serial::accumulate_scaled(
                           g + static_cast<std::size_t>((*ids_copy)[i]) * c,
                           self.grad.data() + i * c, 1.0, c);
                 });
}

Tensor compose_rows(const Tensor& base, const Tensor& replacements,
                    const std::vector<std::uint8_t>& use_replacement) {
  auto& nb = deref(base, "compose_rows");
  auto& nr = deref(replacements, "compose_rows");
  require_same_shape(nb, nr, "compose_rows");
  require_2d(nb, "compose_rows");
  const std::size_t r = nb.shape[0], c = nb.shape[1];
  if (use_replacement.size() != r)
    throw DimensionError("compose_rows: mask length " + std::to_string(use_replacement.size()) +
                         " does not match " + std::to_string(r) + " rows");
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const auto& src = use_replacement[i] ? nr.value : nb.value;
    std::copy_n(src.begin() + i * c, c, out.begin() + i * c);
  }
  auto mask = std::make_shared<std::vector<std::uint8_t>>(use_replacement);
  return make_op("compose_rows", nb.shape, std::move(out), {base},
                 [c, mask](detail::Node& self) {
                   if (double* g = parent_grad(self, 0))
                     for (std::size_t i = 0; i < mask->size(); ++i)
                       if (!(*mask)[i])
                         kernels::serial::accumulate_scaled(g + i * c,
                                                            self.grad.data() + i * c, 1.0, c);
                 });
}

Tensor mean_all(const Tensor& a) {
  auto& na = deref(a, "mean_all");
  if (na.value.empty()) throw ContractError("mean_all: empty tensor");
  double s = 0.0;
  for (double v : na.value) s += v;
  const double inv = 1.0 / static_cast<double>(na.value.size());
  return make_op("mean_all", {1}, {s * inv}, {a}, [inv](detail::Node& self) {
    if (double* g = parent_grad(self, 0)) {
      const double go = self.grad[0] * inv;
      for (std::size_t i = 0; i < self.parents[0]->value.size(); ++i) g[i] += go;
    }
  });
}

Tensor sum_all(const Tensor& a) {
  auto& na = deref(a, "sum_all");
  double s = 0.0;
  for (double v : na.value) s += v;
  return make_op("sum_all", {1}, {s}, {a}, [](detail::Node& self) {
    if (double* g = parent_grad(self, 0)) {
      const double go = self.grad[0];
      for (std::size_t i = 0; i < self.parents[0]->value.size(); ++i) g[i] += go;
    }
  });
}

Tensor nll_from_probs(const Tensor& probs, const std::vector<TokenId>& targets,
                      const std::vector<std::uint8_t>& keep) {
  auto& np = deref(probs, "nll_from_probs");
  require_2d(np, "nll_from_probs");
  const std::size_t r = np.shape[0], v = np.shape[1];
  if (targets.size() != r || keep.size() != r)
    throw DimensionError("nll_from_probs: " + std::to_string(r) + " rows vs " +
                         std::to_string(targets.size()) + " targets, " +
                         std::to_string(keep.size()) + " mask entries");
  std::size_t count = 0;
  for (std::size_t t = 0; t < r; ++t) {
    if (!keep[t]) continue;
    if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= v)
      throw VocabularyError("nll_from_probs: target id " + std::to_string(targets[t]) +
                            " outside distribution of size " + std::to_string(v));
    ++count;
  }
  if (count == 0) throw ContractError("nll_from_probs: every position is masked out");

  constexpr double kClamp = 1e-12;
  double loss = 0.0;
  for (std::size_t t = 0; t < r; ++t) {
    if (!keep[t]) continue;
    loss -= std::log(std::max(np.value[t * v + static_cast<std::size_t>(targets[t])], kClamp));
  }
  loss /= static_cast<double>(count);

  auto tgt = std::make_shared<std::vector<TokenId>>(targets);
  auto kp = std::make_shared<std::vector<std::uint8_t>>(keep);
  return make_op("nll_from_probs", {1}, {loss}, {probs},
                 [v, count, tgt, kp](detail::Node& self) {
                   double* g = parent_grad(self, 0);
                   if (!g) return;
                   const double go = self.grad[0] / static_cast<double>(count);
                   const auto& pv = self.parents[0]->value;
                   for (std::size_t t = 0; t < tgt->size(); ++t) {
                     if (!(*kp)[t]) continue;
                     const std::size_t idx = t * v + static_cast<std::size_t>((*tgt)[t]);
                     if (pv[idx] > kClamp) g[idx] -= go / pv[idx];
                   }
                 });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  auto& nx = deref(x, "dropout");
  if (rate < 0.0 || rate >= 1.0)
    throw ContractError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  if (rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(nx.value.size());
  std::vector<double> out(nx.value.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    out[i] = nx.value[i] * (*mask)[i];
  }
  return make_op("dropout", nx.shape, std::move(out), {x}, [mask](detail::Node& self) {
    if (double* g = parent_grad(self, 0))
      kernels::accumulate_product(g, self.grad.data(), mask->data(), self.value.size());
  });
}

double grad_check(const std::function<Tensor()>& f, std::vector<Tensor>& params,
                  double h) {
  if (h < 1e-6 || h > 1e-3)
    throw ContractError("grad_check: step must lie in [1e-6, 1e-3], got " + std::to_string(h));

  Tensor loss = f();
  if (loss.numel() != 1)
    throw ContractError("grad_check: f must produce a scalar, got shape " +
                        shape_str(loss.shape()));
  for (Tensor& p : params) p.zero_grad();
  loss.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Tensor& p : params) {
    std::vector<double> g(p.numel(), 0.0);
    if (p.has_grad()) g = p.grad();
    analytic.push_back(std::move(g));
  }

  double worst = 0.0;
  NoGradGuard ng;  // finite-difference evaluations need values only
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& vals = params[pi].mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double fp = f().item();
      vals[i] = orig - h;
      const double fm = f().item();
      vals[i] = orig;
      const double g_fd = (fp - fm) / (2.0 * h);
      const double g_ad = analytic[pi][i];
      const double denom = std::max({1.0, std::fabs(g_ad), std::fabs(g_fd)});
      worst = std::max(worst, std::fabs(g_ad - g_fd) / denom);
    }
  }
  return worst;
}

}  // namespace rad
