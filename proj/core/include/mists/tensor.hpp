#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mists {

using Shape = std::vector<std::size_t>;

/// Primitive operations recorded in the differentiation graph.
enum class Primitive {
  kLeaf,
  kMatmul,
  kAdd,
  kSub,
  kMul,
  kScale,
  kNeg,
  kTanh,
  kSigmoid,
  kRelu,
  kExp,
  kLog,
  kSquare,
  kSum,
  kMean,
  kConcat,
  kSlice,
  kSoftmax,
  kLogSumExp,
  kAddRow,
  kTranspose,
};

std::string_view primitive_name(Primitive kind);
std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Raised when input shapes violate a primitive's shape rule.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(Primitive kind, const Shape& lhs, const Shape& rhs,
             std::string_view detail = {});
  ShapeError(Primitive kind, const Shape& shape, std::string_view detail);
};

/// Raised when an input lies outside a primitive's mathematical domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

namespace detail {
struct Node;
}

/// Dense row-major tensor of doubles that records the primitive producing it.
///
/// A Tensor is a shared handle: copies alias the same storage and graph node,
/// the way parameters are shared between a model and its optimizer. Use
/// `detach()` for an independent value with no history.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor row(std::vector<double> values);

  bool defined() const noexcept { return static_cast<bool>(node_); }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  /// Mutable access for leaves only (parameters, optimizer updates, tests).
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t i, std::size_t j) const;
  double operator[](std::size_t flat) const { return values()[flat]; }

  Tensor& set_requires_grad(bool flag = true);
  bool requires_grad() const;
  bool is_leaf() const;
  Primitive kind() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// Same values, no history, no gradient requirement.
  Tensor detach() const;

  /// Reverse-mode sweep from a scalar. Calling twice on the same graph throws.
  void backward() const;

  bool same_node(const Tensor& other) const noexcept {
    return node_ == other.node_;
  }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node);
  friend struct detail::Node;

  std::shared_ptr<detail::Node> node_;
};

// Elementwise kinds require exactly equal shapes; there is no implicit
// broadcasting except `add_row`.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor neg(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
/// Full reductions return shape {1}.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Axis reductions keep the reduced axis with extent 1.
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin,
             std::size_t end);
Tensor softmax(const Tensor& a, std::size_t axis);
Tensor logsumexp(const Tensor& a, std::size_t axis);
/// `a` is n x m; `row` is 1 x m (or length m) and is added to every row.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor transpose(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

/// Extra arguments for kinds that take them.
struct PrimitiveAttrs {
  std::size_t axis = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  double factor = 1.0;
};

/// Generic dispatcher over every primitive kind.
Tensor apply(Primitive kind, std::span<const Tensor> inputs,
             const PrimitiveAttrs& attrs = {});

}  // namespace mists
