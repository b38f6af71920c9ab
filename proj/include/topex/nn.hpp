// Copyright 2026 The topex Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "topex/common.hpp"

// Minimal reverse-mode differentiation over 2-D float64 tensors: enough for
// MLPs, attention blocks, and the policy-gradient losses used by the planner.
namespace topex::nn {

struct Node {
  int rows = 0;
  int cols = 0;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor zeros(int rows, int cols, bool requires_grad = false) {
    return from(rows, cols, std::vector<double>(static_cast<std::size_t>(rows) * cols, 0.0), requires_grad);
  }
  static Tensor from(int rows, int cols, std::vector<double> values, bool requires_grad = false) {
    if (rows < 0 || cols < 0 || values.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
      throw ShapeError("Tensor: values length does not match shape");
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }
  static Tensor scalar(double v) { return from(1, 1, {v}); }

  bool defined() const { return node_ != nullptr; }
  int rows() const { return node_->rows; }
  int cols() const { return node_->cols; }
  std::array<int, 2> shape() const { return {node_->rows, node_->cols}; }
  std::size_t numel() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  double operator()(int r, int c) const { return node_->value[static_cast<std::size_t>(r) * node_->cols + c]; }
  double item() const {
    if (numel() != 1) throw ShapeError("item: tensor is not a scalar");
    return node_->value[0];
  }
  std::vector<double>& values() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }
  std::vector<double>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const std::vector<double>& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& ptr() const { return node_; }

  /// Reverse sweep from this (scalar) tensor; gradients accumulate.
  void backward() const {
    if (numel() != 1) throw ShapeError("backward: loss must be a scalar");
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, i] = stack.back();
      if (i < n->parents.size()) {
        Node* p = n->parents[i++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    if (!node_->requires_grad) return;
    for (Node* n : order) n->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
      if ((*it)->backward && (*it)->requires_grad) (*it)->backward(**it);
  }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

inline Tensor make_result(int rows, int cols, std::vector<std::shared_ptr<Node>> parents) {
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
  n->parents = std::move(parents);
  return Tensor(std::move(n));
}

inline void check_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Operations

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions disagree");
  const int n = a.rows(), k = a.cols(), m = b.cols();
  Tensor out = detail::make_result(n, m, {a.ptr(), b.ptr()});
  auto& o = out.values();
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < k; ++p) {
      const double aip = av[static_cast<std::size_t>(i) * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[static_cast<std::size_t>(p) * m];
      double* orow = &o[static_cast<std::size_t>(i) * m];
      for (int j = 0; j < m; ++j) orow[j] += aip * brow[j];
    }
  out.node().backward = [n, k, m](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    if (A.requires_grad)
      for (int i = 0; i < n; ++i)
        for (int p = 0; p < k; ++p) {
          double s = 0.0;
          for (int j = 0; j < m; ++j) s += self.grad[static_cast<std::size_t>(i) * m + j] * B.value[static_cast<std::size_t>(p) * m + j];
          A.grad[static_cast<std::size_t>(i) * k + p] += s;
        }
    if (B.requires_grad)
      for (int i = 0; i < n; ++i)
        for (int p = 0; p < k; ++p) {
          const double aip = A.value[static_cast<std::size_t>(i) * k + p];
          if (aip == 0.0) continue;
          for (int j = 0; j < m; ++j) B.grad[static_cast<std::size_t>(p) * m + j] += aip * self.grad[static_cast<std::size_t>(i) * m + j];
        }
  };
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same(a, b, "add");
  Tensor out = detail::make_result(a.rows(), a.cols(), {a.ptr(), b.ptr()});
  for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] = a.values()[i] + b.values()[i];
  out.node().backward = [](Node& self) {
    for (int p = 0; p < 2; ++p) {
      Node& P = *self.parents[p];
      if (!P.requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) P.grad[i] += self.grad[i];
    }
  };
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same(a, b, "sub");
  Tensor out = detail::make_result(a.rows(), a.cols(), {a.ptr(), b.ptr()});
  for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] = a.values()[i] - b.values()[i];
  out.node().backward = [](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (A.requires_grad) A.grad[i] += self.grad[i];
      if (B.requires_grad) B.grad[i] -= self.grad[i];
    }
  };
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same(a, b, "mul");
  Tensor out = detail::make_result(a.rows(), a.cols(), {a.ptr(), b.ptr()});
  for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] = a.values()[i] * b.values()[i];
  out.node().backward = [](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (A.requires_grad) A.grad[i] += self.grad[i] * B.value[i];
      if (B.requires_grad) B.grad[i] += self.grad[i] * A.value[i];
    }
  };
  return out;
}

inline Tensor scale(const Tensor& a, double s) {
  Tensor out = detail::make_result(a.rows(), a.cols(), {a.ptr()});
  for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] = a.values()[i] * s;
  out.node().backward = [s](Node& self) {
    Node& A = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i] * s;
  };
  return out;
}

inline Tensor add_scalar(const Tensor& a, double s) {
  Tensor out = detail::make_result(a.rows(), a.cols(), {a.ptr()});
  for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] = a.values()[i] + s;
  out.node().backward = [](Node& self) {
    Node& A = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i];
  };
  return out;
}

/// a (n x c) + row (1 x c), broadcast over rows.
inline Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: bias shape mismatch");
  const int n = a.rows(), c = a.cols();
  Tensor out = detail::make_result(n, c, {a.ptr(), row.ptr()});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j)
      out.values()[static_cast<std::size_t>(i) * c + j] = a.values()[static_cast<std::size_t>(i) * c + j] + row.values()[j];
  out.node().backward = [n, c](Node& self) {
    Node& A = *self.parents[0];
    Node& R = *self.parents[1];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j) {
        const double g = self.grad[static_cast<std::size_t>(i) * c + j];
        if (A.requires_grad) A.grad[static_cast<std::size_t>(i) * c + j] += g;
        if (R.requires_grad) R.grad[j] += g;
      }
  };
  return out;
}

inline Tensor relu(const Tensor& a) {
  Tensor out = detail::make_result(a.rows(), a.cols(), {a.ptr()});
  for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
  out.node().backward = [](Node& self) {
    Node& A = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (A.value[i] > 0.0) A.grad[i] += self.grad[i];
  };
  return out;
}

inline Tensor exp(const Tensor& a) {
  Tensor out = detail::make_result(a.rows(), a.cols(), {a.ptr()});
  for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] = std::exp(a.values()[i]);
  out.node().backward = [](Node& self) {
    Node& A = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i] * self.value[i];
  };
  return out;
}

inline Tensor log(const Tensor& a) {
  Tensor out = detail::make_result(a.rows(), a.cols(), {a.ptr()});
  for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] = std::log(a.values()[i]);
  out.node().backward = [](Node& self) {
    Node& A = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i] / A.value[i];
  };
  return out;
}

/// Element-wise clamp; gradient is zero outside [lo, hi].
inline Tensor clamp(const Tensor& a, double lo, double hi) {
  Tensor out = detail::make_result(a.rows(), a.cols(), {a.ptr()});
  for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] = std::clamp(a.values()[i], lo, hi);
  out.node().backward = [lo, hi](Node& self) {
    Node& A = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (A.value[i] >= lo && A.value[i] <= hi) A.grad[i] += self.grad[i];
  };
  return out;
}

/// Element-wise minimum; ties route the gradient to the first argument.
inline Tensor minimum(const Tensor& a, const Tensor& b) {
  detail::check_same(a, b, "minimum");
  Tensor out = detail::make_result(a.rows(), a.cols(), {a.ptr(), b.ptr()});
  for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] = std::min(a.values()[i], b.values()[i]);
  out.node().backward = [](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (A.value[i] <= B.value[i]) {
        if (A.requires_grad) A.grad[i] += self.grad[i];
      } else if (B.requires_grad) {
        B.grad[i] += self.grad[i];
      }
    }
  };
  return out;
}

inline Tensor transpose(const Tensor& a) {
  const int n = a.rows(), m = a.cols();
  Tensor out = detail::make_result(m, n, {a.ptr()});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out.values()[static_cast<std::size_t>(j) * n + i] = a.values()[static_cast<std::size_t>(i) * m + j];
  out.node().backward = [n, m](Node& self) {
    Node& A = *self.parents[0];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) A.grad[static_cast<std::size_t>(i) * m + j] += self.grad[static_cast<std::size_t>(j) * n + i];
  };
  return out;
}

inline Tensor reshape(const Tensor& a, int rows, int cols) {
  if (static_cast<std::size_t>(rows) * cols != a.numel()) throw ShapeError("reshape: element count changes");
  Tensor out = detail::make_result(rows, cols, {a.ptr()});
  out.values() = a.values();
  out.node().backward = [](Node& self) {
    Node& A = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i];
  };
  return out;
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) throw ShapeError("concat_cols: row counts differ");
  const int n = a.rows(), ca = a.cols(), cb = b.cols();
  Tensor out = detail::make_result(n, ca + cb, {a.ptr(), b.ptr()});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < ca; ++j) out.values()[static_cast<std::size_t>(i) * (ca + cb) + j] = a.values()[static_cast<std::size_t>(i) * ca + j];
    for (int j = 0; j < cb; ++j) out.values()[static_cast<std::size_t>(i) * (ca + cb) + ca + j] = b.values()[static_cast<std::size_t>(i) * cb + j];
  }
  out.node().backward = [n, ca, cb](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    for (int i = 0; i < n; ++i) {
      if (A.requires_grad)
        for (int j = 0; j < ca; ++j) A.grad[static_cast<std::size_t>(i) * ca + j] += self.grad[static_cast<std::size_t>(i) * (ca + cb) + j];
      if (B.requires_grad)
        for (int j = 0; j < cb; ++j) B.grad[static_cast<std::size_t>(i) * cb + j] += self.grad[static_cast<std::size_t>(i) * (ca + cb) + ca + j];
    }
  };
  return out;
}

/// Rows [begin, end) of a.
inline Tensor slice_rows(const Tensor& a, int begin, int end) {
  if (begin < 0 || end > a.rows() || begin > end) throw ShapeError("slice_rows: range out of bounds");
  const int c = a.cols();
  Tensor out = detail::make_result(end - begin, c, {a.ptr()});
  std::copy(a.values().begin() + static_cast<std::ptrdiff_t>(begin) * c, a.values().begin() + static_cast<std::ptrdiff_t>(end) * c,
            out.values().begin());
  out.node().backward = [begin, c](Node& self) {
    Node& A = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[static_cast<std::size_t>(begin) * c + i] += self.grad[i];
  };
  return out;
}

/// Selects rows by index (repeats allowed).
inline Tensor gather_rows(const Tensor& a, std::vector<int> idx) {
  const int c = a.cols();
  for (int i : idx)
    if (i < 0 || i >= a.rows()) throw ShapeError("gather_rows: index out of range");
  Tensor out = detail::make_result(static_cast<int>(idx.size()), c, {a.ptr()});
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(a.values().begin() + static_cast<std::ptrdiff_t>(idx[r]) * c, c, out.values().begin() + static_cast<std::ptrdiff_t>(r) * c);
  out.node().backward = [idx = std::move(idx), c](Node& self) {
    Node& A = *self.parents[0];
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (int j = 0; j < c; ++j) A.grad[static_cast<std::size_t>(idx[r]) * c + j] += self.grad[r * c + j];
  };
  return out;
}

/// Selects columns by index (repeats allowed).
inline Tensor gather_cols(const Tensor& a, std::vector<int> idx) {
  const int n = a.rows(), c = a.cols(), m = static_cast<int>(idx.size());
  for (int j : idx)
    if (j < 0 || j >= c) throw ShapeError("gather_cols: index out of range");
  Tensor out = detail::make_result(n, m, {a.ptr()});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out.values()[static_cast<std::size_t>(i) * m + j] = a.values()[static_cast<std::size_t>(i) * c + idx[j]];
  out.node().backward = [idx = std::move(idx), n, c, m](Node& self) {
    Node& A = *self.parents[0];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) A.grad[static_cast<std::size_t>(i) * c + idx[j]] += self.grad[static_cast<std::size_t>(i) * m + j];
  };
  return out;
}

/// out[i * m + j] = a[i] + b[j] for a (n x h), b (m x h): all row pairs.
inline Tensor pairwise_sum(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw ShapeError("pairwise_sum: widths differ");
  const int n = a.rows(), m = b.rows(), h = a.cols();
  Tensor out = detail::make_result(n * m, h, {a.ptr(), b.ptr()});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      for (int t = 0; t < h; ++t)
        out.values()[(static_cast<std::size_t>(i) * m + j) * h + t] =
            a.values()[static_cast<std::size_t>(i) * h + t] + b.values()[static_cast<std::size_t>(j) * h + t];
  out.node().backward = [n, m, h](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j)
        for (int t = 0; t < h; ++t) {
          const double g = self.grad[(static_cast<std::size_t>(i) * m + j) * h + t];
          if (A.requires_grad) A.grad[static_cast<std::size_t>(i) * h + t] += g;
          if (B.requires_grad) B.grad[static_cast<std::size_t>(j) * h + t] += g;
        }
  };
  return out;
}

/// Row-wise softmax stabilised by max subtraction.
inline Tensor softmax_rows(const Tensor& s) {
  const int n = s.rows(), m = s.cols();
  Tensor out = detail::make_result(n, m, {s.ptr()});
  for (int i = 0; i < n; ++i) {
    const double* row = &s.values()[static_cast<std::size_t>(i) * m];
    double* o = &out.values()[static_cast<std::size_t>(i) * m];
    const double mx = *std::max_element(row, row + m);
    double z = 0.0;
    for (int j = 0; j < m; ++j) z += (o[j] = std::exp(row[j] - mx));
    for (int j = 0; j < m; ++j) o[j] /= z;
  }
  out.node().backward = [n, m](Node& self) {
    Node& S = *self.parents[0];
    for (int i = 0; i < n; ++i) {
      const double* y = &self.value[static_cast<std::size_t>(i) * m];
      const double* g = &self.grad[static_cast<std::size_t>(i) * m];
      double dot = 0.0;
      for (int j = 0; j < m; ++j) dot += y[j] * g[j];
      for (int j = 0; j < m; ++j) S.grad[static_cast<std::size_t>(i) * m + j] += y[j] * (g[j] - dot);
    }
  };
  return out;
}

/// Divides each row by its sum. A row summing to zero stays zero.
inline Tensor normalize_rows(const Tensor& s) {
  const int n = s.rows(), m = s.cols();
  Tensor out = detail::make_result(n, m, {s.ptr()});
  std::vector<double> sums(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) sums[i] += s.values()[static_cast<std::size_t>(i) * m + j];
    if (sums[i] == 0.0) continue;
    for (int j = 0; j < m; ++j) out.values()[static_cast<std::size_t>(i) * m + j] = s.values()[static_cast<std::size_t>(i) * m + j] / sums[i];
  }
  out.node().backward = [n, m, sums = std::move(sums)](Node& self) {
    Node& S = *self.parents[0];
    for (int i = 0; i < n; ++i) {
      if (sums[i] == 0.0) continue;
      double dot = 0.0;
      for (int j = 0; j < m; ++j) dot += self.grad[static_cast<std::size_t>(i) * m + j] * self.value[static_cast<std::size_t>(i) * m + j];
      for (int j = 0; j < m; ++j)
        S.grad[static_cast<std::size_t>(i) * m + j] += (self.grad[static_cast<std::size_t>(i) * m + j] - dot) / sums[i];
    }
  };
  return out;
}

inline Tensor sum(const Tensor& a) {
  Tensor out = detail::make_result(1, 1, {a.ptr()});
  out.values()[0] = std::accumulate(a.values().begin(), a.values().end(), 0.0);
  out.node().backward = [](Node& self) {
    Node& A = *self.parents[0];
    for (auto& g : A.grad) g += self.grad[0];
  };
  return out;
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(std::max<std::size_t>(1, a.numel()))); }

/// Column means as a 1 x c row.
inline Tensor mean_rows(const Tensor& a) {
  const int n = a.rows(), c = a.cols();
  if (n == 0) throw ShapeError("mean_rows: empty tensor");
  Tensor out = detail::make_result(1, c, {a.ptr()});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) out.values()[j] += a.values()[static_cast<std::size_t>(i) * c + j] / n;
  out.node().backward = [n, c](Node& self) {
    Node& A = *self.parents[0];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j) A.grad[static_cast<std::size_t>(i) * c + j] += self.grad[j] / n;
  };
  return out;
}

// ---------------------------------------------------------------------------
// Vector helpers

/// Cosine similarity in [-1, 1]. Throws UndefinedSimilarity on a zero vector.
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw UndefinedSimilarity("cosine_similarity: zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Parameters and layers

/// Named parameter registry; insertion order defines checkpoint order.
class ParameterSet {
 public:
  Tensor& add(std::string name, Tensor t) {
    for (const auto& [n, _] : params_)
      if (n == name) throw ConfigError("duplicate parameter name " + name);
    params_.emplace_back(std::move(name), std::move(t));
    return params_.back().second;
  }
  std::vector<std::pair<std::string, Tensor>>& items() { return params_; }
  const std::vector<std::pair<std::string, Tensor>>& items() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : params_) n += t.numel();
    return n;
  }
  void zero_grad() {
    for (auto& [_, t] : params_) t.zero_grad();
  }
  Tensor* find(const std::string& name) {
    for (auto& [n, t] : params_)
      if (n == name) return &t;
    return nullptr;
  }

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
};

/// Uniform fan-in initialisation U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline Tensor init_uniform(int rows, int cols, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(1, fan_in)));
  std::vector<double> v(static_cast<std::size_t>(rows) * cols);
  for (auto& x : v) x = uniform(rng, -bound, bound);
  return Tensor::from(rows, cols, std::move(v), true);
}

struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out

  Linear() = default;
  Linear(ParameterSet& ps, const std::string& name, int in, int out, Rng& rng)
      : weight(ps.add(name + ".w", init_uniform(in, out, in, rng))),
        bias(ps.add(name + ".b", init_uniform(1, out, in, rng))) {}

  int in_features() const { return weight.rows(); }
  int out_features() const { return weight.cols(); }
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }

  static Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add_row(matmul(x, w), b); }
};

inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return Linear::linear(x, w, b); }

/// ReLU between layers, linear output.
struct Mlp {
  std::vector<Linear> layers;

  Mlp() = default;
  Mlp(ParameterSet& ps, const std::string& name, const std::vector<int>& widths, Rng& rng) {
    if (widths.size() < 2) throw ConfigError("Mlp: need at least input and output widths");
    for (std::size_t i = 0; i + 1 < widths.size(); ++i)
      layers.emplace_back(ps, name + "." + std::to_string(i), widths[i], widths[i + 1], rng);
  }
  int in_features() const { return layers.front().in_features(); }
  int out_features() const { return layers.back().out_features(); }

  Tensor operator()(const Tensor& x) const {
    if (x.cols() != in_features()) throw ShapeError("Mlp: input width mismatch");
    Tensor h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      h = layers[i](h);
      if (i + 1 < layers.size()) h = relu(h);
    }
    return h;
  }
};

/// Single-head scaled dot-product attention with a residual connection:
/// out = Q_src + softmax((Q_src Wq)(KV_src Wk)^T / sqrt(d)) (KV_src Wv).
struct Attention {
  Tensor wq, wk, wv;

  Attention() = default;
  Attention(ParameterSet& ps, const std::string& name, int dim, Rng& rng)
      : wq(ps.add(name + ".wq", init_uniform(dim, dim, dim, rng))),
        wk(ps.add(name + ".wk", init_uniform(dim, dim, dim, rng))),
        wv(ps.add(name + ".wv", init_uniform(dim, dim, dim, rng))) {}

  int dim() const { return wq.rows(); }

  /// Returns (output, attention weights).
  std::pair<Tensor, Tensor> forward(const Tensor& query_src, const Tensor& key_val_src) const {
    if (query_src.cols() != dim() || key_val_src.cols() != dim()) throw ShapeError("Attention: feature width mismatch");
    const Tensor q = matmul(query_src, wq);
    const Tensor k = matmul(key_val_src, wk);
    const Tensor v = matmul(key_val_src, wv);
    const Tensor weights = softmax_rows(scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(dim()))));
    return {add(query_src, matmul(weights, v)), weights};
  }
  Tensor operator()(const Tensor& query_src, const Tensor& key_val_src) const { return forward(query_src, key_val_src).first; }
};

inline Tensor attention(const Tensor& query_src, const Tensor& key_val_src, const Attention& params) {
  return params(query_src, key_val_src);
}

// ---------------------------------------------------------------------------
// Optimiser

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double max_grad_norm = 0.5;  // <= 0 disables clipping
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step = 0;
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// One Adam update over every parameter with its accumulated gradient.
inline void optimizer_step(ParameterSet& params, AdamState& state, const AdamConfig& cfg) {
  auto& items = params.items();
  if (state.m.empty()) {
    for (auto& [_, t] : items) {
      state.m.emplace_back(t.numel(), 0.0);
      state.v.emplace_back(t.numel(), 0.0);
    }
  }
  if (state.m.size() != items.size()) throw ShapeError("optimizer_step: state does not match parameters");
  double norm2 = 0.0;
  for (auto& [name, t] : items) {
    if (!t.has_grad()) t.zero_grad();
    if (t.grad().size() != t.numel()) throw ShapeError("optimizer_step: gradient shape mismatch for " + name);
    for (double g : t.grad()) {
      if (!std::isfinite(g)) throw TrainingDivergence("non-finite gradient in " + name);
      norm2 += g * g;
    }
  }
  double clip = 1.0;
  const double norm = std::sqrt(norm2);
  if (cfg.max_grad_norm > 0.0 && norm > cfg.max_grad_norm) clip = cfg.max_grad_norm / norm;
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < items.size(); ++p) {
    auto& t = items[p].second;
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double g = t.grad()[i] * clip;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      t.values()[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints: text header, then per tensor `name rows cols` and hex floats.

inline std::string save_checkpoint(const ParameterSet& params) {
  std::string out = "topex-checkpoint 1 " + std::to_string(params.size()) + "\n";
  char buf[64];
  for (const auto& [name, t] : params.items()) {
    out += name + " " + std::to_string(t.rows()) + " " + std::to_string(t.cols()) + "\n";
    for (std::size_t i = 0; i < t.numel(); ++i) {
      std::snprintf(buf, sizeof(buf), "%a", t.values()[i]);
      out += buf;
      out.push_back(i + 1 == t.numel() ? '\n' : ' ');
    }
    if (t.numel() == 0) out.push_back('\n');
  }
  return out;
}

/// Loads values into an existing parameter set with matching names and shapes.
inline void load_checkpoint(ParameterSet& params, const std::string& text) {
  std::istringstream in(text);
  std::string magic;
  int version = 0;
  std::size_t count = 0;
  if (!(in >> magic >> version >> count) || magic != "topex-checkpoint" || version != 1)
    throw FormatError("checkpoint: bad header");
  if (count != params.size()) throw FormatError("checkpoint: parameter count mismatch");
  for (std::size_t p = 0; p < count; ++p) {
    std::string name;
    int rows = 0, cols = 0;
    if (!(in >> name >> rows >> cols)) throw FormatError("checkpoint: truncated");
    Tensor* t = params.find(name);
    if (t == nullptr) throw FormatError("checkpoint: unknown parameter " + name);
    if (t->rows() != rows || t->cols() != cols) throw FormatError("checkpoint: shape mismatch for " + name);
    for (std::size_t i = 0; i < t->numel(); ++i) {
      std::string tok;
      if (!(in >> tok)) throw FormatError("checkpoint: truncated values for " + name);
      t->values()[i] = std::strtod(tok.c_str(), nullptr);
    }
  }
}

}  // namespace topex::nn
