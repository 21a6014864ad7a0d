#include "mists/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace mists {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool backward_done = false;
  Primitive kind = Primitive::kLeaf;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  static Tensor wrap(std::shared_ptr<Node> node) { return Tensor(std::move(node)); }
  static const std::shared_ptr<Node>& unwrap(const Tensor& t) { return t.node_; }

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

using detail::Node;

namespace {

const std::shared_ptr<Node>& node_of(const Tensor& t) {
  const auto& node = Node::unwrap(t);
  if (!node) throw std::invalid_argument("use of an undefined tensor");
  return node;
}

// Creates the output node. The backward closure and parents are attached only
// when some input needs gradients.
Tensor make_result(Primitive kind, Shape shape, std::vector<double> value,
                   std::initializer_list<const Tensor*> inputs,
                   std::function<void(Node&)> backward_fn) {
  auto out = std::make_shared<Node>();
  out->shape = std::move(shape);
  out->value = std::move(value);
  out->kind = kind;
  bool needs = false;
  for (const Tensor* in : inputs) needs = needs || node_of(*in)->requires_grad;
  if (needs) {
    out->requires_grad = true;
    for (const Tensor* in : inputs) out->parents.push_back(node_of(*in));
    out->backward_fn = std::move(backward_fn);
  }
  return Node::wrap(std::move(out));
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(Primitive kind, const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ShapeError(kind, shape,
                     "axis " + std::to_string(axis) + " out of range");
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void require_same_shape(Primitive kind, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError(kind, a.shape(), b.shape());
}

template <typename Fwd, typename Deriv>
Tensor unary(Primitive kind, const Tensor& a, Fwd fwd, Deriv deriv) {
  const auto& in = a.values();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return make_result(kind, a.shape(), std::move(out), {&a},
                     [deriv](Node& self) {
                       Node& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       auto& g = p.ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         g[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
                       }
                     });
}

void accumulate(Node& target, std::span<const double> contribution) {
  if (!target.requires_grad) return;
  auto& g = target.ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += contribution[i];
}

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[m x n] += a[m x k] * b[n x k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      c[i * n + j] += acc;
    }
  }
}

// c[k x n] += a[m x k]^T * b[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view primitive_name(Primitive kind) {
  switch (kind) {
    case Primitive::kLeaf: return "leaf";
    case Primitive::kMatmul: return "matmul";
    case Primitive::kAdd: return "add";
    case Primitive::kSub: return "sub";
    case Primitive::kMul: return "mul";
    case Primitive::kScale: return "scale";
    case Primitive::kNeg: return "neg";
    case Primitive::kTanh: return "tanh";
    case Primitive::kSigmoid: return "sigmoid";
    case Primitive::kRelu: return "relu";
    case Primitive::kExp: return "exp";
    case Primitive::kLog: return "log";
    case Primitive::kSquare: return "square";
    case Primitive::kSum: return "sum";
    case Primitive::kMean: return "mean";
    case Primitive::kConcat: return "concat";
    case Primitive::kSlice: return "slice";
    case Primitive::kSoftmax: return "softmax";
    case Primitive::kLogSumExp: return "logsumexp";
    case Primitive::kAddRow: return "add_row";
    case Primitive::kTranspose: return "transpose";
  }
  return "unknown";
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

ShapeError::ShapeError(Primitive kind, const Shape& lhs, const Shape& rhs,
                       std::string_view detail)
    : std::invalid_argument(std::string(primitive_name(kind)) +
                            ": incompatible shapes " + shape_string(lhs) +
                            " and " + shape_string(rhs) +
                            (detail.empty() ? "" : " (" + std::string(detail) + ")")) {}

ShapeError::ShapeError(Primitive kind, const Shape& shape,
                       std::string_view detail)
    : std::invalid_argument(std::string(primitive_name(kind)) +
                            ": invalid shape " + shape_string(shape) + " (" +
                            std::string(detail) + ")") {}

// ---------------------------------------------------------------------------

Tensor::Tensor() = default;

Tensor::Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : node_(std::make_shared<Node>()) {
  for (std::size_t extent : shape) {
    if (extent == 0) throw ShapeError(Primitive::kLeaf, shape, "zero extent");
  }
  if (shape_numel(shape) != values.size()) {
    throw ShapeError(Primitive::kLeaf, shape,
                     "expected " + std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }
Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({1, n}, std::move(values));
}

const Shape& Tensor::shape() const { return node_of(*this)->shape; }
std::size_t Tensor::numel() const { return node_of(*this)->value.size(); }

std::size_t Tensor::rows() const {
  const auto& s = shape();
  return s.size() == 2 ? s[0] : 1;
}

std::size_t Tensor::cols() const {
  const auto& s = shape();
  return s.empty() ? 1 : s.back();
}

std::span<const double> Tensor::values() const { return node_of(*this)->value; }

std::span<double> Tensor::mutable_values() {
  auto& node = *node_of(*this);
  if (node.kind != Primitive::kLeaf) {
    throw std::logic_error("mutable_values on a non-leaf tensor");
  }
  return node.value;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError(Primitive::kLeaf, shape(), "item() needs one element");
  }
  return values()[0];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  return values()[i * cols() + j];
}

Tensor& Tensor::set_requires_grad(bool flag) {
  auto& node = *node_of(*this);
  if (node.kind != Primitive::kLeaf) {
    throw std::logic_error("requires_grad can only be set on leaf tensors");
  }
  node.requires_grad = flag;
  return *this;
}

bool Tensor::requires_grad() const { return node_of(*this)->requires_grad; }
bool Tensor::is_leaf() const { return node_of(*this)->kind == Primitive::kLeaf; }
Primitive Tensor::kind() const { return node_of(*this)->kind; }
bool Tensor::has_grad() const { return !node_of(*this)->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_of(*this)->grad; }

void Tensor::zero_grad() {
  auto& node = *node_of(*this);
  std::fill(node.grad.begin(), node.grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  const auto& node = *node_of(*this);
  return Tensor(node.shape, node.value);
}

void Tensor::backward() const {
  const auto& root = node_of(*this);
  if (root->value.size() != 1) {
    throw ShapeError(Primitive::kLeaf, root->shape,
                     "backward requires a scalar loss");
  }
  if (!root->requires_grad) {
    throw std::logic_error("backward on a tensor that does not require grad");
  }
  if (root->backward_done) {
    throw std::logic_error("backward already ran on this graph");
  }

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
  root->backward_done = true;
}

// ---------------------------------------------------------------------------
// Primitives

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError(Primitive::kMatmul, a.shape(), b.shape());
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  return make_result(Primitive::kMatmul, {m, n}, std::move(out), {&a, &b},
                     [m, k, n](Node& self) {
                       Node& pa = *self.parents[0];
                       Node& pb = *self.parents[1];
                       if (pa.requires_grad) {
                         gemm_nt(self.grad.data(), pb.value.data(),
                                 pa.ensure_grad().data(), m, n, k);
                       }
                       if (pb.requires_grad) {
                         gemm_tn(pa.value.data(), self.grad.data(),
                                 pb.ensure_grad().data(), m, k, n);
                       }
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(Primitive::kAdd, a, b);
  const auto& x = a.values();
  const auto& y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return make_result(Primitive::kAdd, a.shape(), std::move(out), {&a, &b},
                     [](Node& self) {
                       accumulate(*self.parents[0], self.grad);
                       accumulate(*self.parents[1], self.grad);
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(Primitive::kSub, a, b);
  const auto& x = a.values();
  const auto& y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return make_result(Primitive::kSub, a.shape(), std::move(out), {&a, &b},
                     [](Node& self) {
                       accumulate(*self.parents[0], self.grad);
                       Node& pb = *self.parents[1];
                       if (!pb.requires_grad) return;
                       auto& g = pb.ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(Primitive::kMul, a, b);
  const auto& x = a.values();
  const auto& y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return make_result(Primitive::kMul, a.shape(), std::move(out), {&a, &b},
                     [](Node& self) {
                       Node& pa = *self.parents[0];
                       Node& pb = *self.parents[1];
                       if (pa.requires_grad) {
                         auto& g = pa.ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
                       }
                       if (pb.requires_grad) {
                         auto& g = pb.ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
                       }
                     });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(Primitive::kScale, a, [factor](double v) { return v * factor; },
               [factor](double, double) { return factor; });
}

Tensor neg(const Tensor& a) {
  return unary(Primitive::kNeg, a, [](double v) { return -v; },
               [](double, double) { return -1.0; });
}

Tensor tanh(const Tensor& a) {
  return unary(Primitive::kTanh, a, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      Primitive::kSigmoid, a,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary(Primitive::kRelu, a, [](double v) { return v > 0 ? v : 0.0; },
               [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary(Primitive::kExp, a, [](double v) { return std::exp(v); },
               [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  const auto& x = a.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0)) {
      throw DomainError("log: non-positive input " + std::to_string(x[i]) +
                        " at flat index " + std::to_string(i));
    }
  }
  return unary(Primitive::kLog, a, [](double v) { return std::log(v); },
               [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary(Primitive::kSquare, a, [](double v) { return v * v; },
               [](double x, double) { return 2.0 * x; });
}

Tensor sum(const Tensor& a) {
  const auto& x = a.values();
  const double total = std::accumulate(x.begin(), x.end(), 0.0);
  return make_result(Primitive::kSum, {1}, {total}, {&a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const auto& x = a.values();
  const double n = static_cast<double>(x.size());
  const double avg = std::accumulate(x.begin(), x.end(), 0.0) / n;
  return make_result(Primitive::kMean, {1}, {avg}, {&a}, [n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (double& v : g) v += self.grad[0] / n;
  });
}

namespace {

Tensor reduce_axis(Primitive kind, const Tensor& a, std::size_t axis,
                   double factor) {
  const AxisSplit s = split_axis(kind, a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape[axis] = 1;
  const auto& x = a.values();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[o * s.inner + i] += x[(o * s.extent + e) * s.inner + i];
  for (double& v : out) v *= factor;
  return make_result(kind, std::move(out_shape), std::move(out), {&a},
                     [s, factor](Node& self) {
                       Node& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       auto& g = p.ensure_grad();
                       for (std::size_t o = 0; o < s.outer; ++o)
                         for (std::size_t e = 0; e < s.extent; ++e)
                           for (std::size_t i = 0; i < s.inner; ++i)
                             g[(o * s.extent + e) * s.inner + i] +=
                                 factor * self.grad[o * s.inner + i];
                     });
}

}  // namespace

Tensor sum(const Tensor& a, std::size_t axis) {
  return reduce_axis(Primitive::kSum, a, axis, 1.0);
}

Tensor mean(const Tensor& a, std::size_t axis) {
  const AxisSplit s = split_axis(Primitive::kMean, a.shape(), axis);
  return reduce_axis(Primitive::kMean, a, axis,
                     1.0 / static_cast<double>(s.extent));
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) {
    throw ShapeError(Primitive::kConcat, Shape{}, "no inputs");
  }
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw ShapeError(Primitive::kConcat, first, "axis out of range");
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw ShapeError(Primitive::kConcat, first, s);
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) {
        throw ShapeError(Primitive::kConcat, first, s);
      }
    }
    out_shape[axis] += s[axis];
  }
  const AxisSplit total = split_axis(Primitive::kConcat, out_shape, axis);
  std::vector<std::size_t> extents;
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t ext = p.shape()[axis];
    const auto& x = p.values();
    for (std::size_t o = 0; o < total.outer; ++o) {
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(o * ext * total.inner),
                  ext * total.inner,
                  out.begin() + static_cast<std::ptrdiff_t>(
                                    (o * total.extent + offset) * total.inner));
    }
    extents.push_back(ext);
    offset += ext;
  }

  auto out_node = std::make_shared<Node>();
  out_node->shape = std::move(out_shape);
  out_node->value = std::move(out);
  out_node->kind = Primitive::kConcat;
  bool needs = false;
  for (const Tensor& p : parts) needs = needs || p.requires_grad();
  if (needs) {
    out_node->requires_grad = true;
    for (const Tensor& p : parts) out_node->parents.push_back(Node::unwrap(p));
    out_node->backward_fn = [total, extents](Node& self) {
      std::size_t off = 0;
      for (std::size_t k = 0; k < self.parents.size(); ++k) {
        Node& p = *self.parents[k];
        const std::size_t ext = extents[k];
        if (p.requires_grad) {
          auto& g = p.ensure_grad();
          for (std::size_t o = 0; o < total.outer; ++o)
            for (std::size_t j = 0; j < ext * total.inner; ++j)
              g[o * ext * total.inner + j] +=
                  self.grad[(o * total.extent + off) * total.inner + j];
        }
        off += ext;
      }
    };
  }
  return Node::wrap(std::move(out_node));
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin,
             std::size_t end) {
  const AxisSplit s = split_axis(Primitive::kSlice, a.shape(), axis);
  if (begin >= end || end > s.extent) {
    throw ShapeError(Primitive::kSlice, a.shape(),
                     "range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") on axis " +
                         std::to_string(axis));
  }
  const std::size_t len = end - begin;
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  const auto& x = a.values();
  std::vector<double> out(s.outer * len * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>((o * s.extent + begin) * s.inner),
                len * s.inner,
                out.begin() + static_cast<std::ptrdiff_t>(o * len * s.inner));
  }
  return make_result(Primitive::kSlice, std::move(out_shape), std::move(out),
                     {&a}, [s, begin, len](Node& self) {
                       Node& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       auto& g = p.ensure_grad();
                       for (std::size_t o = 0; o < s.outer; ++o)
                         for (std::size_t j = 0; j < len * s.inner; ++j)
                           g[(o * s.extent + begin) * s.inner + j] +=
                               self.grad[o * len * s.inner + j];
                     });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  const AxisSplit s = split_axis(Primitive::kSoftmax, a.shape(), axis);
  const auto& x = a.values();
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      auto idx = [&](std::size_t e) { return (o * s.extent + e) * s.inner + i; };
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < s.extent; ++e) mx = std::max(mx, x[idx(e)]);
      double z = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) {
        out[idx(e)] = std::exp(x[idx(e)] - mx);
        z += out[idx(e)];
      }
      for (std::size_t e = 0; e < s.extent; ++e) out[idx(e)] /= z;
    }
  }
  return make_result(Primitive::kSoftmax, a.shape(), std::move(out), {&a},
                     [s](Node& self) {
                       Node& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       auto& g = p.ensure_grad();
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         for (std::size_t i = 0; i < s.inner; ++i) {
                           auto idx = [&](std::size_t e) {
                             return (o * s.extent + e) * s.inner + i;
                           };
                           double dot = 0.0;
                           for (std::size_t e = 0; e < s.extent; ++e)
                             dot += self.grad[idx(e)] * self.value[idx(e)];
                           for (std::size_t e = 0; e < s.extent; ++e)
                             g[idx(e)] += self.value[idx(e)] * (self.grad[idx(e)] - dot);
                         }
                       }
                     });
}

Tensor logsumexp(const Tensor& a, std::size_t axis) {
  const AxisSplit s = split_axis(Primitive::kLogSumExp, a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape[axis] = 1;
  const auto& x = a.values();
  std::vector<double> out(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < s.extent; ++e)
        mx = std::max(mx, x[(o * s.extent + e) * s.inner + i]);
      double z = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e)
        z += std::exp(x[(o * s.extent + e) * s.inner + i] - mx);
      out[o * s.inner + i] = mx + std::log(z);
    }
  }
  return make_result(Primitive::kLogSumExp, std::move(out_shape),
                     std::move(out), {&a}, [s](Node& self) {
                       Node& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       auto& g = p.ensure_grad();
                       for (std::size_t o = 0; o < s.outer; ++o)
                         for (std::size_t i = 0; i < s.inner; ++i) {
                           const double lse = self.value[o * s.inner + i];
                           const double up = self.grad[o * s.inner + i];
                           for (std::size_t e = 0; e < s.extent; ++e) {
                             const std::size_t k = (o * s.extent + e) * s.inner + i;
                             g[k] += up * std::exp(p.value[k] - lse);
                           }
                         }
                     });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (a.rank() != 2 || row.numel() != a.shape()[1] ||
      (row.rank() == 2 && row.shape()[0] != 1) || row.rank() > 2) {
    throw ShapeError(Primitive::kAddRow, a.shape(), row.shape());
  }
  const std::size_t n = a.shape()[0], m = a.shape()[1];
  const auto& x = a.values();
  const auto& r = row.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = x[i * m + j] + r[j];
  return make_result(Primitive::kAddRow, a.shape(), std::move(out), {&a, &row},
                     [n, m](Node& self) {
                       accumulate(*self.parents[0], self.grad);
                       Node& pr = *self.parents[1];
                       if (!pr.requires_grad) return;
                       auto& g = pr.ensure_grad();
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < m; ++j) g[j] += self.grad[i * m + j];
                     });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) {
    throw ShapeError(Primitive::kTranspose, a.shape(), "rank must be 2");
  }
  const std::size_t n = a.shape()[0], m = a.shape()[1];
  const auto& x = a.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = x[i * m + j];
  return make_result(Primitive::kTranspose, {m, n}, std::move(out), {&a},
                     [n, m](Node& self) {
                       Node& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       auto& g = p.ensure_grad();
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < m; ++j)
                           g[i * m + j] += self.grad[j * n + i];
                     });
}

Tensor apply(Primitive kind, std::span<const Tensor> inputs,
             const PrimitiveAttrs& attrs) {
  auto arity = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw std::invalid_argument(std::string(primitive_name(kind)) +
                                  ": expected " + std::to_string(n) +
                                  " inputs, got " +
                                  std::to_string(inputs.size()));
    }
  };
  switch (kind) {
    case Primitive::kMatmul: arity(2); return matmul(inputs[0], inputs[1]);
    case Primitive::kAdd: arity(2); return add(inputs[0], inputs[1]);
    case Primitive::kSub: arity(2); return sub(inputs[0], inputs[1]);
    case Primitive::kMul: arity(2); return mul(inputs[0], inputs[1]);
    case Primitive::kScale: arity(1); return scale(inputs[0], attrs.factor);
    case Primitive::kNeg: arity(1); return neg(inputs[0]);
    case Primitive::kTanh: arity(1); return tanh(inputs[0]);
    case Primitive::kSigmoid: arity(1); return sigmoid(inputs[0]);
    case Primitive::kRelu: arity(1); return relu(inputs[0]);
    case Primitive::kExp: arity(1); return exp(inputs[0]);
    case Primitive::kLog: arity(1); return log(inputs[0]);
    case Primitive::kSquare: arity(1); return square(inputs[0]);
    case Primitive::kSum: arity(1); return sum(inputs[0]);
    case Primitive::kMean: arity(1); return mean(inputs[0]);
    case Primitive::kConcat: return concat(inputs, attrs.axis);
    case Primitive::kSlice:
      arity(1);
      return slice(inputs[0], attrs.axis, attrs.begin, attrs.end);
    case Primitive::kSoftmax: arity(1); return softmax(inputs[0], attrs.axis);
    case Primitive::kLogSumExp: arity(1); return logsumexp(inputs[0], attrs.axis);
    case Primitive::kAddRow: arity(2); return add_row(inputs[0], inputs[1]);
    case Primitive::kTranspose: arity(1); return transpose(inputs[0]);
    case Primitive::kLeaf: break;
  }
  throw std::invalid_argument("apply: leaf is not an operation");
}

}  // namespace mists
