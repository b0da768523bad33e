#include "srn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "fast_math.hpp"
#include "gemm.hpp"
#include "srn/errors.hpp"

namespace srn {

using detail::Node;

namespace {

template <typename T>
using BackwardFn = std::function<void(Node<T>&)>;

template <typename T>
Tensor<T> make_op(Shape shape, std::vector<T> value, std::initializer_list<Tensor<T>> inputs,
                  const char* name, BackwardFn<T> fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = name;
  if (grad_enabled()) {
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const auto& t : inputs) node->parents.push_back(t.node());
      node->backward_fn = std::move(fn);
    }
  }
  return Tensor<T>::from_node(std::move(node));
}

// Gradient buffer of parent `i`, or null when it does not need one.
template <typename T>
T* parent_grad(Node<T>& self, std::size_t i) {
  auto& p = self.parents[i];
  return p->requires_grad ? p->grad_buffer().data() : nullptr;
}

template <typename T>
const T* parent_value(Node<T>& self, std::size_t i) {
  return self.parents[i]->value.data();
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes differ " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& x, const char* name, F f, D dfdx_from_xy) {
  std::vector<T> y(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  return make_op<T>(x.shape(), std::move(y), {x}, name, [dfdx_from_xy](Node<T>& self) {
    T* gx = parent_grad(self, 0);
    if (!gx) return;
    const T* xv = parent_value(self, 0);
    for (std::size_t i = 0; i < self.value.size(); ++i)
      gx[i] += self.grad[i] * dfdx_from_xy(xv[i], self.value[i]);
  });
}

}  // namespace

// ---------------------------------------------------------------- masks

AttentionMask::AttentionMask(std::size_t queries, std::size_t keys,
                             std::vector<std::uint8_t> allowed)
    : queries_(queries), keys_(keys), allowed_(std::move(allowed)) {
  if (allowed_.size() != queries * keys) {
    throw DimensionError("attention mask: expected " + std::to_string(queries * keys) +
                         " entries, got " + std::to_string(allowed_.size()));
  }
  for (std::size_t q = 0; q < queries; ++q) {
    bool any = false;
    for (std::size_t k = 0; k < keys; ++k) any = any || allowed_[q * keys + k];
    if (!any) {
      throw ContractError("attention mask row " + std::to_string(q) + " allows no keys");
    }
  }
}

AttentionMask AttentionMask::all(std::size_t queries, std::size_t keys) {
  return AttentionMask(queries, keys, std::vector<std::uint8_t>(queries * keys, 1));
}

AttentionMask AttentionMask::causal(std::size_t length) {
  std::vector<std::uint8_t> m(length * length, 0);
  for (std::size_t q = 0; q < length; ++q)
    for (std::size_t k = 0; k <= q; ++k) m[q * length + k] = 1;
  return AttentionMask(length, length, std::move(m));
}

AttentionMask AttentionMask::anti_causal(std::size_t length) {
  std::vector<std::uint8_t> m(length * length, 0);
  for (std::size_t q = 0; q < length; ++q)
    for (std::size_t k = q; k < length; ++k) m[q * length + k] = 1;
  return AttentionMask(length, length, std::move(m));
}

// ---------------------------------------------------------------- elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a, b);
  std::vector<T> y(a.numel());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  return make_op<T>(a.shape(), std::move(y), {a, b}, "add", [](Node<T>& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (T* g = parent_grad(self, p))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("sub", a, b);
  std::vector<T> y(a.numel());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
  return make_op<T>(a.shape(), std::move(y), {a, b}, "sub", [](Node<T>& self) {
    if (T* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (T* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a, b);
  std::vector<T> y(a.numel());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  return make_op<T>(a.shape(), std::move(y), {a, b}, "mul", [](Node<T>& self) {
    const T* av = parent_value(self, 0);
    const T* bv = parent_value(self, 1);
    if (T* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    if (T* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary(
      x, "scale", [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset) {
  return unary(
      x, "add_scalar", [offset](T v) { return v + offset; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary(
      x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      x, "sigmoid", [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary(
      x, "relu", [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sin(const Tensor<T>& x) {
  return unary(
      x, "sin", [](T v) { return std::sin(v); }, [](T v, T) { return std::cos(v); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary(
      x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  return unary(
      x, "log", [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return unary(
      x, "square", [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

// ---------------------------------------------------------------- reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.data()) total += v;
  return make_op<T>(Shape{}, {total}, {x}, "sum", [](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      const std::size_t n = self.parents[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  if (bias.rank() != 1 || x.rank() == 0 || x.shape().back() != bias.dim(0)) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) +
                         " does not match trailing extent of " + shape_str(x.shape()));
  }
  const std::size_t n = bias.dim(0), rows = x.numel() / n;
  std::vector<T> y(x.data().begin(), x.data().end());
  const T* bv = bias.data().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] += bv[j];
  return make_op<T>(x.shape(), std::move(y), {x, bias}, "add_bias", [n, rows](Node<T>& self) {
    const T* dy = self.grad.data();
    if (T* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += dy[i];
    if (T* g = parent_grad(self, 1))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) g[j] += dy[r * n + j];
  });
}

// ---------------------------------------------------------------- matmul

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const bool batched = a.rank() == 3;
  const bool ok_rank = (a.rank() == 2 && b.rank() == 2) || (a.rank() == 3 && b.rank() == 3);
  if (!ok_rank || (batched && a.dim(0) != b.dim(0)) ||
      a.shape()[a.rank() - 1] != b.shape()[b.rank() - 2]) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t batch = batched ? a.dim(0) : 1;
  const std::size_t m = a.shape()[a.rank() - 2];
  const std::size_t k = a.shape()[a.rank() - 1];
  const std::size_t n = b.shape()[b.rank() - 1];
  std::vector<T> c(batch * m * n, T(0));
  for (std::size_t s = 0; s < batch; ++s)
    kernels::gemm_acc(m, k, n, a.data().data() + s * m * k, b.data().data() + s * k * n,
                      c.data() + s * m * n);
  Shape shape = batched ? Shape{batch, m, n} : Shape{m, n};
  return make_op<T>(std::move(shape), std::move(c), {a, b}, "matmul",
                    [batch, m, k, n](Node<T>& self) {
                      const T* av = parent_value(self, 0);
                      const T* bv = parent_value(self, 1);
                      T* ga = parent_grad(self, 0);
                      T* gb = parent_grad(self, 1);
                      for (std::size_t s = 0; s < batch; ++s) {
                        const T* gc = self.grad.data() + s * m * n;
                        if (ga) kernels::gemm_nt_acc(m, n, k, gc, bv + s * k * n, ga + s * m * k);
                        if (gb) kernels::gemm_tn_acc(m, k, n, av + s * m * k, gc, gb + s * k * n);
                      }
                    });
}

// ---------------------------------------------------------------- softmax / loss

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw IndexError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                     shape_str(x.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t n = x.dim(axis);
  std::vector<T> y(x.numel());
  auto xv = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
      T total = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const T e = std::exp(xv[base + j * inner] - mx);
        y[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) y[base + j * inner] /= total;
    }
  }
  return make_op<T>(x.shape(), std::move(y), {x}, "softmax", [outer, inner, n](Node<T>& self) {
    T* gx = parent_grad(self, 0);
    if (!gx) return;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        T dot = 0;
        for (std::size_t j = 0; j < n; ++j)
          dot += self.grad[base + j * inner] * self.value[base + j * inner];
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t i = base + j * inner;
          gx[i] += self.value[i] * (self.grad[i] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> cross_entropy_mean(const Tensor<T>& logits, std::span<const int> targets) {
  if (logits.rank() != 2 || logits.dim(0) != targets.size()) {
    throw DimensionError("cross_entropy_mean: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(targets.size()) + " targets");
  }
  const std::size_t rows = logits.dim(0), classes = logits.dim(1);
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= classes) {
      throw IndexError("cross_entropy_mean: target " + std::to_string(t) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
  }
  auto xv = logits.data();
  auto probs = std::make_shared<std::vector<T>>(rows * classes);
  std::vector<int> tgt(targets.begin(), targets.end());
  T total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * classes;
    const T mx = *std::max_element(row, row + classes);
    T z = 0;
    for (std::size_t j = 0; j < classes; ++j) z += std::exp(row[j] - mx);
    const T log_z = std::log(z);
    for (std::size_t j = 0; j < classes; ++j)
      (*probs)[r * classes + j] = std::exp(row[j] - mx - log_z);
    total -= row[tgt[r]] - mx - log_z;
  }
  const T loss = total / static_cast<T>(rows);
  return make_op<T>(Shape{}, {loss}, {logits}, "cross_entropy_mean",
                    [probs, tgt = std::move(tgt), rows, classes](Node<T>& self) {
                      T* g = parent_grad(self, 0);
                      if (!g) return;
                      const T s = self.grad[0] / static_cast<T>(rows);
                      for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t j = 0; j < classes; ++j) {
                          T p = (*probs)[r * classes + j];
                          if (static_cast<int>(j) == tgt[r]) p -= T(1);
                          g[r * classes + j] += s * p;
                        }
                      }
                    });
}

// ---------------------------------------------------------------- layout

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
  }
  std::vector<T> y(x.data().begin(), x.data().end());
  return make_op<T>(std::move(shape), std::move(y), {x}, "reshape", [](Node<T>& self) {
    if (T* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
    throw DimensionError("concat_cols: " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t rows = a.dim(0), na = a.dim(1), nb = b.dim(1), n = na + nb;
  std::vector<T> y(rows * n);
  auto av = a.data(), bv = b.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.data() + r * na, na, y.data() + r * n);
    std::copy_n(bv.data() + r * nb, nb, y.data() + r * n + na);
  }
  return make_op<T>(Shape{rows, n}, std::move(y), {a, b}, "concat_cols",
                    [rows, na, nb, n](Node<T>& self) {
                      T* ga = parent_grad(self, 0);
                      T* gb = parent_grad(self, 1);
                      for (std::size_t r = 0; r < rows; ++r) {
                        const T* g = self.grad.data() + r * n;
                        if (ga)
                          for (std::size_t j = 0; j < na; ++j) ga[r * na + j] += g[j];
                        if (gb)
                          for (std::size_t j = 0; j < nb; ++j) gb[r * nb + j] += g[na + j];
                      }
                    });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t count) {
  if (x.rank() != 2 || count == 0 || start + count > x.dim(1)) {
    throw IndexError("slice_cols: [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") outside " + shape_str(x.shape()));
  }
  const std::size_t rows = x.dim(0), n = x.dim(1);
  std::vector<T> y(rows * count);
  auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(xv.data() + r * n + start, count, y.data() + r * count);
  return make_op<T>(Shape{rows, count}, std::move(y), {x}, "slice_cols",
                    [rows, n, start, count](Node<T>& self) {
                      T* g = parent_grad(self, 0);
                      if (!g) return;
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < count; ++j)
                          g[r * n + start + j] += self.grad[r * count + j];
                    });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t start, std::size_t count) {
  if (x.rank() == 0 || count == 0 || start + count > x.dim(0)) {
    throw IndexError("slice_rows: [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") outside " + shape_str(x.shape()));
  }
  const std::size_t stride = x.numel() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = count;
  std::vector<T> y(x.data().begin() + start * stride,
                   x.data().begin() + (start + count) * stride);
  const std::size_t offset = start * stride;
  return make_op<T>(std::move(shape), std::move(y), {x}, "slice_rows", [offset](Node<T>& self) {
    if (T* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[offset + i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  Shape shape = parts[0].shape();
  if (shape.empty()) throw DimensionError("concat_rows: scalars cannot be stacked");
  std::size_t rows = 0;
  std::vector<T> y;
  for (const auto& p : parts) {
    if (p.rank() != shape.size() ||
        !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1)) {
      throw DimensionError("concat_rows: " + shape_str(shape) + " vs " + shape_str(p.shape()));
    }
    rows += p.dim(0);
    y.insert(y.end(), p.data().begin(), p.data().end());
  }
  shape[0] = rows;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) sizes.push_back(p.numel());

  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(y);
  node->op = "concat_rows";
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (grad_enabled() && any) {
    node->requires_grad = true;
    for (const auto& p : parts) node->parents.push_back(p.node());
    node->backward_fn = [sizes](Node<T>& self) {
      std::size_t offset = 0;
      for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (T* g = parent_grad(self, i))
          for (std::size_t j = 0; j < sizes[i]; ++j) g[j] += self.grad[offset + j];
        offset += sizes[i];
      }
    };
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
Tensor<T> embed(std::span<const int> indices, const Tensor<T>& table) {
  if (table.rank() != 2) throw DimensionError("embed: table must be 2D, got " + shape_str(table.shape()));
  const std::size_t rows = table.dim(0), d = table.dim(1);
  std::vector<int> idx(indices.begin(), indices.end());
  if (idx.empty()) throw DimensionError("embed: empty index list");
  std::vector<T> y(idx.size() * d);
  auto tv = table.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= rows) {
      throw IndexError("embed: index " + std::to_string(idx[i]) + " outside table of " +
                       std::to_string(rows) + " rows");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(idx[i]) * d, d, y.data() + i * d);
  }
  const std::size_t count = idx.size();
  return make_op<T>(Shape{count, d}, std::move(y), {table}, "embed",
                    [idx = std::move(idx), d](Node<T>& self) {
                      T* g = parent_grad(self, 0);
                      if (!g) return;
                      for (std::size_t i = 0; i < idx.size(); ++i)
                        for (std::size_t j = 0; j < d; ++j)
                          g[static_cast<std::size_t>(idx[i]) * d + j] += self.grad[i * d + j];
                    });
}

// ---------------------------------------------------------------- normalization

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  if (x.rank() == 0 || gamma.rank() != 1 || beta.shape() != gamma.shape() ||
      x.shape().back() != gamma.dim(0)) {
    throw DimensionError("layer_norm: x " + shape_str(x.shape()) + ", gamma " +
                         shape_str(gamma.shape()) + ", beta " + shape_str(beta.shape()));
  }
  const std::size_t d = gamma.dim(0), rows = x.numel() / d;
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  std::vector<T> y(x.numel());
  auto xv = x.data(), gv = gamma.data(), bv = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * d;
    T mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (row[j] - mu) * is;
      (*xhat)[r * d + j] = h;
      y[r * d + j] = gv[j] * h + bv[j];
    }
  }
  return make_op<T>(x.shape(), std::move(y), {x, gamma, beta}, "layer_norm",
                    [xhat, inv_std, d, rows](Node<T>& self) {
                      const T* gv = parent_value(self, 1);
                      T* gx = parent_grad(self, 0);
                      T* gg = parent_grad(self, 1);
                      T* gb = parent_grad(self, 2);
                      std::vector<T> dxhat(d);
                      for (std::size_t r = 0; r < rows; ++r) {
                        const T* dy = self.grad.data() + r * d;
                        const T* h = xhat->data() + r * d;
                        if (gg)
                          for (std::size_t j = 0; j < d; ++j) gg[j] += dy[j] * h[j];
                        if (gb)
                          for (std::size_t j = 0; j < d; ++j) gb[j] += dy[j];
                        if (!gx) continue;
                        T m1 = 0, m2 = 0;
                        for (std::size_t j = 0; j < d; ++j) {
                          dxhat[j] = dy[j] * gv[j];
                          m1 += dxhat[j];
                          m2 += dxhat[j] * h[j];
                        }
                        m1 /= static_cast<T>(d);
                        m2 /= static_cast<T>(d);
                        const T is = (*inv_std)[r];
                        for (std::size_t j = 0; j < d; ++j)
                          gx[r * d + j] += is * (dxhat[j] - m1 - h[j] * m2);
                      }
                    });
}

// ---------------------------------------------------------------- attention

template <typename T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               const AttentionMask& mask, std::size_t groups, std::size_t heads,
                               std::vector<T>* weights) {
  if (q.rank() != 2 || k.rank() != 2 || v.shape() != k.shape() || q.dim(1) != k.dim(1)) {
    throw DimensionError("attention: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) +
                         ", v " + shape_str(v.shape()));
  }
  const std::size_t d = q.dim(1);
  if (groups == 0 || heads == 0 || d % heads != 0 || q.dim(0) % groups != 0 ||
      k.dim(0) % groups != 0) {
    throw ConfigError("attention: width " + std::to_string(d) + " rows " +
                      std::to_string(q.dim(0)) + " not divisible into " +
                      std::to_string(groups) + " groups × " + std::to_string(heads) + " heads");
  }
  const std::size_t lq = q.dim(0) / groups, lk = k.dim(0) / groups, dh = d / heads;
  if (mask.queries() != lq || mask.keys() != lk) {
    throw DimensionError("attention: mask [" + std::to_string(mask.queries()) + "," +
                         std::to_string(mask.keys()) + "] for " + std::to_string(lq) + "×" +
                         std::to_string(lk) + " scores");
  }
  const T inv_scale = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<T> bias(lq * lk);
  for (std::size_t i = 0; i < lq; ++i)
    for (std::size_t j = 0; j < lk; ++j) bias[i * lk + j] = mask.allowed(i, j) ? T(0) : T(-1e9);

  auto probs = std::make_shared<std::vector<T>>(groups * heads * lq * lk);
  std::vector<T> out(groups * lq * d, T(0));
  auto qv = q.data(), kv = k.data(), vv = v.data();
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t h = 0; h < heads; ++h) {
      T* p = probs->data() + ((g * heads + h) * lq) * lk;
      for (std::size_t i = 0; i < lq; ++i) {
        const T* qi = qv.data() + (g * lq + i) * d + h * dh;
        T* pi = p + i * lk;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < lk; ++j) {
          const T* kj = kv.data() + (g * lk + j) * d + h * dh;
          T s = 0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          s = s * inv_scale + bias[i * lk + j];
          pi[j] = s;
          mx = std::max(mx, s);
        }
        T z = 0;
        for (std::size_t j = 0; j < lk; ++j) {
          pi[j] = std::exp(pi[j] - mx);
          z += pi[j];
        }
        for (std::size_t j = 0; j < lk; ++j) pi[j] /= z;
        T* oi = out.data() + (g * lq + i) * d + h * dh;
        for (std::size_t j = 0; j < lk; ++j) {
          const T* vj = vv.data() + (g * lk + j) * d + h * dh;
          const T w = pi[j];
          for (std::size_t c = 0; c < dh; ++c) oi[c] += w * vj[c];
        }
      }
    }
  }
  if (weights) *weights = *probs;
  return make_op<T>(
      Shape{groups * lq, d}, std::move(out), {q, k, v}, "scaled_dot_attention",
      [probs, groups, heads, lq, lk, d, dh, inv_scale](Node<T>& self) {
        const T* qv = parent_value(self, 0);
        const T* kv = parent_value(self, 1);
        const T* vv = parent_value(self, 2);
        T* gq = parent_grad(self, 0);
        T* gk = parent_grad(self, 1);
        T* gv = parent_grad(self, 2);
        std::vector<T> dp(lk);
        for (std::size_t g = 0; g < groups; ++g) {
          for (std::size_t h = 0; h < heads; ++h) {
            const T* p = probs->data() + ((g * heads + h) * lq) * lk;
            for (std::size_t i = 0; i < lq; ++i) {
              const T* doi = self.grad.data() + (g * lq + i) * d + h * dh;
              const T* pi = p + i * lk;
              T dot = 0;
              for (std::size_t j = 0; j < lk; ++j) {
                const T* vj = vv + (g * lk + j) * d + h * dh;
                T s = 0;
                for (std::size_t c = 0; c < dh; ++c) s += doi[c] * vj[c];
                dp[j] = s;
                dot += s * pi[j];
                if (gv) {
                  T* gvj = gv + (g * lk + j) * d + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) gvj[c] += pi[j] * doi[c];
                }
              }
              const T* qi = qv + (g * lq + i) * d + h * dh;
              for (std::size_t j = 0; j < lk; ++j) {
                const T ds = pi[j] * (dp[j] - dot) * inv_scale;
                if (ds == T(0)) continue;
                const T* kj = kv + (g * lk + j) * d + h * dh;
                if (gq) {
                  T* gqi = gq + (g * lq + i) * d + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds * kj[c];
                }
                if (gk) {
                  T* gkj = gk + (g * lk + j) * d + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) gkj[c] += ds * qi[c];
                }
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------- convolution

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (x.rank() != 4 || weight.rank() != 2 || bias.rank() != 1) {
    throw DimensionError("conv2d: x " + shape_str(x.shape()) + ", weight " +
                         shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()));
  }
  const std::size_t batch = x.dim(0), height = x.dim(1), width = x.dim(2), cin = x.dim(3);
  const std::size_t cols = kernel * kernel * cin, cout = weight.dim(1);
  if (weight.dim(0) != cols || bias.dim(0) != cout) {
    throw DimensionError("conv2d: weight " + shape_str(weight.shape()) + " does not fit " +
                         std::to_string(kernel) + "x" + std::to_string(kernel) + "x" +
                         std::to_string(cin) + " -> bias " + shape_str(bias.shape()));
  }
  if (stride == 0 || height + 2 * padding < kernel || width + 2 * padding < kernel) {
    throw DimensionError("conv2d: kernel larger than padded input " + shape_str(x.shape()));
  }
  const std::size_t ho = (height + 2 * padding - kernel) / stride + 1;
  const std::size_t wo = (width + 2 * padding - kernel) / stride + 1;
  const std::size_t rows = batch * ho * wo;

  auto col = std::make_shared<std::vector<T>>(rows * cols, T(0));
  auto xv = x.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        T* dst = col->data() + ((b * ho + oy) * wo + ox) * cols;
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(padding);
          if (iy < 0 || iy >= static_cast<long>(height)) continue;
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(padding);
            if (ix < 0 || ix >= static_cast<long>(width)) continue;
            std::copy_n(xv.data() + ((b * height + iy) * width + ix) * cin, cin,
                        dst + (ky * kernel + kx) * cin);
          }
        }
      }

  std::vector<T> y(rows * cout);
  auto bv = bias.data();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(bv.data(), cout, y.data() + r * cout);
  kernels::gemm_acc(rows, cols, cout, col->data(), weight.data().data(), y.data());

  return make_op<T>(
      Shape{batch, ho, wo, cout}, std::move(y), {x, weight, bias}, "conv2d",
      [col, batch, height, width, cin, ho, wo, rows, cols, cout, kernel, stride,
       padding](Node<T>& self) {
        const T* dy = self.grad.data();
        if (T* gb = parent_grad(self, 2))
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cout; ++c) gb[c] += dy[r * cout + c];
        if (T* gw = parent_grad(self, 1)) kernels::gemm_tn_acc(rows, cols, cout, col->data(), dy, gw);
        T* gx = parent_grad(self, 0);
        if (!gx) return;
        std::vector<T> dcol(rows * cols, T(0));
        kernels::gemm_nt_acc(rows, cout, cols, dy, parent_value(self, 1), dcol.data());
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t oy = 0; oy < ho; ++oy)
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const T* src = dcol.data() + ((b * ho + oy) * wo + ox) * cols;
              for (std::size_t ky = 0; ky < kernel; ++ky) {
                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(padding);
                if (iy < 0 || iy >= static_cast<long>(height)) continue;
                for (std::size_t kx = 0; kx < kernel; ++kx) {
                  const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(padding);
                  if (ix < 0 || ix >= static_cast<long>(width)) continue;
                  T* dst = gx + ((b * height + iy) * width + ix) * cin;
                  const T* s = src + (ky * kernel + kx) * cin;
                  for (std::size_t c = 0; c < cin; ++c) dst[c] += s[c];
                }
              }
            }
      });
}

template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x) {
  if (x.rank() != 4) throw DimensionError("upsample2x: expected NHWC, got " + shape_str(x.shape()));
  const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  std::vector<T> y(b * 4 * h * w * c);
  auto xv = x.data();
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t i = 0; i < 2 * h; ++i)
      for (std::size_t j = 0; j < 2 * w; ++j)
        std::copy_n(xv.data() + ((n * h + i / 2) * w + j / 2) * c, c,
                    y.data() + ((n * 2 * h + i) * 2 * w + j) * c);
  return make_op<T>(Shape{b, 2 * h, 2 * w, c}, std::move(y), {x}, "upsample2x",
                    [b, h, w, c](Node<T>& self) {
                      T* g = parent_grad(self, 0);
                      if (!g) return;
                      for (std::size_t n = 0; n < b; ++n)
                        for (std::size_t i = 0; i < 2 * h; ++i)
                          for (std::size_t j = 0; j < 2 * w; ++j) {
                            const T* src = self.grad.data() + ((n * 2 * h + i) * 2 * w + j) * c;
                            T* dst = g + ((n * h + i / 2) * w + j / 2) * c;
                            for (std::size_t k = 0; k < c; ++k) dst[k] += src[k];
                          }
                    });
}

template <typename T>
Tensor<T> avg_pool2x(const Tensor<T>& x) {
  if (x.rank() != 4 || x.dim(1) % 2 || x.dim(2) % 2) {
    throw DimensionError("avg_pool2x: expected NHWC with even H, W, got " + shape_str(x.shape()));
  }
  const std::size_t b = x.dim(0), h = x.dim(1) / 2, w = x.dim(2) / 2, c = x.dim(3);
  std::vector<T> y(b * h * w * c, T(0));
  auto xv = x.data();
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        T* dst = y.data() + ((n * h + i) * w + j) * c;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const T* src = xv.data() + ((n * 2 * h + 2 * i + dy) * 2 * w + 2 * j + dx) * c;
            for (std::size_t k = 0; k < c; ++k) dst[k] += src[k];
          }
        for (std::size_t k = 0; k < c; ++k) dst[k] *= T(0.25);
      }
  return make_op<T>(Shape{b, h, w, c}, std::move(y), {x}, "avg_pool2x",
                    [b, h, w, c](Node<T>& self) {
                      T* g = parent_grad(self, 0);
                      if (!g) return;
                      for (std::size_t n = 0; n < b; ++n)
                        for (std::size_t i = 0; i < h; ++i)
                          for (std::size_t j = 0; j < w; ++j) {
                            const T* src = self.grad.data() + ((n * h + i) * w + j) * c;
                            for (std::size_t dy = 0; dy < 2; ++dy)
                              for (std::size_t dx = 0; dx < 2; ++dx) {
                                T* dst = g + ((n * 2 * h + 2 * i + dy) * 2 * w + 2 * j + dx) * c;
                                for (std::size_t k = 0; k < c; ++k) dst[k] += T(0.25) * src[k];
                              }
                          }
                    });
}

// ---------------------------------------------------------------- additive attention

template <typename T>
Tensor<T> additive_scores(const Tensor<T>& query, const Tensor<T>& keys, const Tensor<T>& w) {
  if (query.rank() != 3 || keys.rank() != 3 || w.rank() != 1 || query.dim(2) != keys.dim(2) ||
      w.dim(0) != keys.dim(2) || (query.dim(0) != 1 && query.dim(0) != keys.dim(0))) {
    throw DimensionError("additive_scores: query " + shape_str(query.shape()) + ", keys " +
                         shape_str(keys.shape()) + ", w " + shape_str(w.shape()));
  }
  const std::size_t bq = query.dim(0), nq = query.dim(1), batch = keys.dim(0), p = keys.dim(1),
                    d = keys.dim(2);
  auto th = std::make_shared<std::vector<T>>(batch * nq * p * d);
  std::vector<T> out(batch * nq * p);
  auto qv = query.data(), kv = keys.data(), wv = w.data();
  for (std::size_t b = 0; b < batch; ++b) {
    const T* qb = qv.data() + (bq == 1 ? 0 : b) * nq * d;
    for (std::size_t t = 0; t < nq; ++t) {
      const T* qt = qb + t * d;
      for (std::size_t j = 0; j < p; ++j) {
        const T* kj = kv.data() + (b * p + j) * d;
        T* tj = th->data() + ((b * nq + t) * p + j) * d;
        for (std::size_t c = 0; c < d; ++c) tj[c] = detail::tanh_approx(qt[c] + kj[c]);
        out[(b * nq + t) * p + j] = detail::dot_lanes(wv.data(), tj, d);
      }
    }
  }
  return make_op<T>(Shape{batch, nq, p}, std::move(out), {query, keys, w}, "additive_scores",
                    [th, bq, nq, batch, p, d](Node<T>& self) {
                      const T* wv = parent_value(self, 2);
                      T* gq = parent_grad(self, 0);
                      T* gk = parent_grad(self, 1);
                      T* gw = parent_grad(self, 2);
                      for (std::size_t b = 0; b < batch; ++b)
                        for (std::size_t t = 0; t < nq; ++t)
                          for (std::size_t j = 0; j < p; ++j) {
                            const T g = self.grad[(b * nq + t) * p + j];
                            if (g == T(0)) continue;
                            const T* tj = th->data() + ((b * nq + t) * p + j) * d;
                            T* gqt = gq ? gq + ((bq == 1 ? 0 : b) * nq + t) * d : nullptr;
                            T* gkj = gk ? gk + (b * p + j) * d : nullptr;
                            for (std::size_t c = 0; c < d; ++c) {
                              if (gw) gw[c] += g * tj[c];
                              const T pre = g * wv[c] * (T(1) - tj[c] * tj[c]);
                              if (gqt) gqt[c] += pre;
                              if (gkj) gkj[c] += pre;
                            }
                          }
                    });
}

template <typename T>
Tensor<T> shift_sequence(const Tensor<T>& x, const Tensor<T>& fill, std::size_t groups,
                         bool forward) {
  if (x.rank() != 2 || fill.rank() != 2 || fill.dim(0) != 1 || fill.dim(1) != x.dim(1) ||
      groups == 0 || x.dim(0) % groups != 0) {
    throw DimensionError("shift_sequence: x " + shape_str(x.shape()) + ", fill " +
                         shape_str(fill.shape()) + ", groups " + std::to_string(groups));
  }
  const std::size_t len = x.dim(0) / groups, d = x.dim(1);
  std::vector<T> y(x.numel());
  auto xv = x.data(), fv = fill.data();
  // Source row for output position t, or len when the fill row is used.
  auto source = [len, forward](std::size_t t) -> std::size_t {
    if (forward) return t == 0 ? len : t - 1;
    return t + 1 == len ? len : t + 1;
  };
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t s = source(t);
      const T* src = s == len ? fv.data() : xv.data() + (g * len + s) * d;
      std::copy_n(src, d, y.data() + (g * len + t) * d);
    }
  return make_op<T>(x.shape(), std::move(y), {x, fill}, "shift_sequence",
                    [groups, len, d, source](Node<T>& self) {
                      T* gx = parent_grad(self, 0);
                      T* gf = parent_grad(self, 1);
                      for (std::size_t g = 0; g < groups; ++g)
                        for (std::size_t t = 0; t < len; ++t) {
                          const std::size_t s = source(t);
                          T* dst = s == len ? gf : (gx ? gx + (g * len + s) * d : nullptr);
                          if (!dst) continue;
                          const T* src = self.grad.data() + (g * len + t) * d;
                          for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
                        }
                    });
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& x) {
  if (x.rank() != 2) throw DimensionError("argmax_rows: expected 2D, got " + shape_str(x.shape()));
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<int> out(rows);
  auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * cols;
    std::size_t best = 0;
    for (std::size_t j = 1; j < cols; ++j)
      if (row[j] > row[best]) best = j;
    out[r] = static_cast<int>(best);
  }
  return out;
}

#define SRN_INSTANTIATE_OPS(T)                                                                 \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> scale(const Tensor<T>&, T);                                                \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                           \
  template Tensor<T> tanh(const Tensor<T>&);                                                    \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                 \
  template Tensor<T> relu(const Tensor<T>&);                                                    \
  template Tensor<T> sin(const Tensor<T>&);                                                     \
  template Tensor<T> exp(const Tensor<T>&);                                                     \
  template Tensor<T> log(const Tensor<T>&);                                                     \
  template Tensor<T> square(const Tensor<T>&);                                                  \
  template Tensor<T> sum(const Tensor<T>&);                                                     \
  template Tensor<T> mean(const Tensor<T>&);                                                    \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                    \
  template Tensor<T> cross_entropy_mean(const Tensor<T>&, std::span<const int>);                \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                          \
  template Tensor<T> concat_cols(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                    \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                    \
  template Tensor<T> concat_rows(const std::vector<Tensor<T>>&);                                \
  template Tensor<T> embed(std::span<const int>, const Tensor<T>&);                             \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);       \
  template Tensor<T> scaled_dot_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                          const AttentionMask&, std::size_t, std::size_t,       \
                                          std::vector<T>*);                                     \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,  \
                            std::size_t, std::size_t);                                          \
  template Tensor<T> upsample2x(const Tensor<T>&);                                              \
  template Tensor<T> avg_pool2x(const Tensor<T>&);                                              \
  template Tensor<T> additive_scores(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> shift_sequence(const Tensor<T>&, const Tensor<T>&, std::size_t, bool);     \
  template std::vector<int> argmax_rows(const Tensor<T>&);

SRN_INSTANTIATE_OPS(float)
SRN_INSTANTIATE_OPS(double)

}  // namespace srn
