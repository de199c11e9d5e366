#pragma once

#include <Eigen/Dense>

#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace hrf {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AutodiffError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_string(const Shape& shape);
Index shape_numel(const Shape& shape);

[[noreturn]] void throw_shape_mismatch(const char* op, const Shape& a, const Shape& b);

/// Dense tensor stored as a row-major matrix. The last dimension maps to
/// columns, all leading dimensions are folded into rows; a 1-D tensor of
/// length n is a 1 x n row and a scalar is 1 x 1.
template <typename Scalar>
class Tensor {
 public:
  Tensor() : Tensor(Shape{}) {}
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, Matrix<Scalar> values, bool requires_grad = false);
  Tensor(std::initializer_list<Scalar> row);

  static Tensor from_matrix(Matrix<Scalar> values, bool requires_grad = false);
  static Tensor scalar(Scalar value, bool requires_grad = false);

  const Shape& shape() const { return shape_; }
  Index numel() const { return values_.size(); }
  Index rows() const { return values_.rows(); }
  Index cols() const { return values_.cols(); }

  Matrix<Scalar>& values() { return values_; }
  const Matrix<Scalar>& values() const { return values_; }
  Scalar* data() { return values_.data(); }
  const Scalar* data() const { return values_.data(); }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  /// Reinterprets the storage with a new shape of the same element count.
  void reshape(Shape shape);

 private:
  Shape shape_;
  Matrix<Scalar> values_;
  bool requires_grad_ = false;
};

template <typename Scalar>
class Tape;

/// Handle to a node on a Tape.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, int id) : tape_(tape), id_(id) {}

  Tape<Scalar>& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor<Scalar>& tensor() const;
  const Matrix<Scalar>& value() const { return tensor().values(); }
  const Shape& shape() const { return tensor().shape(); }
  Index rows() const { return tensor().rows(); }
  Index cols() const { return tensor().cols(); }
  bool requires_grad() const;

 private:
  Tape<Scalar>* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode tape. Nodes are appended in evaluation order; backward()
/// walks them in reverse once. A tape is single-use: re-run the forward
/// pass on a fresh tape to differentiate again.
template <typename Scalar>
class Tape {
 public:
  using Backward = std::function<void(Tape&, int)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Tensor<Scalar> value);
  Var<Scalar> constant(Matrix<Scalar> value) { return constant(Tensor<Scalar>::from_matrix(std::move(value))); }
  Var<Scalar> leaf(Tensor<Scalar> value);
  Var<Scalar> record(Tensor<Scalar> value, std::vector<int> parents, Backward backward);

  const Tensor<Scalar>& tensor(int id) const { return nodes_[id].value; }
  const Matrix<Scalar>& value(int id) const { return nodes_[id].value.values(); }
  bool requires_grad(int id) const { return nodes_[id].value.requires_grad(); }

  /// Gradient buffer of a node being back-propagated.
  const Matrix<Scalar>& out_grad(int id) const { return nodes_[id].grad; }

  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[id];
    if (!n.value.requires_grad()) return;
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      n.grad += g;
    }
  }
  /// Direct access for scatter-style accumulation; allocates zeros lazily.
  Matrix<Scalar>& grad_buffer(int id);

  void backward(const Var<Scalar>& loss);

  bool has_grad(const Var<Scalar>& v) const { return nodes_[v.id()].has_grad; }
  /// Gradient of the last backward() target with respect to v. Zero when v
  /// was not reached.
  Matrix<Scalar> grad(const Var<Scalar>& v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<Scalar> value;
    Matrix<Scalar> grad;
    bool has_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

template <typename Scalar>
const Tensor<Scalar>& Var<Scalar>::tensor() const {
  return tape_->tensor(id_);
}

template <typename Scalar>
bool Var<Scalar>::requires_grad() const {
  return tape_->requires_grad(id_);
}

// ---------------------------------------------------------------------------
// Differentiable operations. Rows are independent samples unless stated.

template <typename Scalar> Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b);
/// x (N x in) * weight (in x out) + bias (1 x out), bias broadcast over rows.
template <typename Scalar> Var<Scalar> linear(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias);
template <typename Scalar> Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> scale(const Var<Scalar>& a, Scalar factor);
template <typename Scalar> Var<Scalar> relu(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> sigmoid(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> softplus(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> tanh(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> exp(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> square(const Var<Scalar>& a);
/// Row-wise softmax.
template <typename Scalar> Var<Scalar> softmax(const Var<Scalar>& a);
/// Concatenates along columns; all parts share the row count.
template <typename Scalar> Var<Scalar> concat(const std::vector<Var<Scalar>>& parts);
/// Stacks along rows; all parts share the column count.
template <typename Scalar> Var<Scalar> concat_rows(const std::vector<Var<Scalar>>& parts);
template <typename Scalar> Var<Scalar> slice(const Var<Scalar>& a, Index col_begin, Index col_count);
template <typename Scalar> Var<Scalar> slice_rows(const Var<Scalar>& a, Index row_begin, Index row_count);
/// Reinterprets the node with a new shape (same element count, row-major order).
template <typename Scalar> Var<Scalar> reshape(const Var<Scalar>& a, Shape shape);
template <typename Scalar> Var<Scalar> reduce_sum(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> reduce_mean(const Var<Scalar>& a);

/// 3x3 convolution with zero padding. input is [H, W, Cin]; weight is
/// (9*Cin) x Cout in (ky, kx, cin) order; bias is 1 x Cout.
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& input, const Var<Scalar>& weight, const Var<Scalar>& bias, int stride);

/// Nearest-neighbour 2x upsampling of an [H, W, C] map.
template <typename Scalar> Var<Scalar> upsample2x(const Var<Scalar>& input);

/// Concatenates two [H, W, C*] maps along channels.
template <typename Scalar> Var<Scalar> concat_channels(const Var<Scalar>& a, const Var<Scalar>& b);

template <typename Scalar>
struct SampleResult {
  Var<Scalar> values;        // N x C
  std::vector<bool> valid;   // per row
};

/// Bilinear lookup of an [H, W, C] map at continuous pixel coordinates
/// uv (N x 2, columns x then y; texel centres sit on integers). Points
/// outside [0, W-1] x [0, H-1] yield zeros and valid = false.
/// Differentiable with respect to both the map and uv.
template <typename Scalar>
SampleResult<Scalar> bilinear_sample(const Var<Scalar>& map, const Var<Scalar>& uv);

inline Var<float> operator+(const Var<float>& a, const Var<float>& b) { return add(a, b); }
inline Var<double> operator+(const Var<double>& a, const Var<double>& b) { return add(a, b); }
inline Var<float> operator-(const Var<float>& a, const Var<float>& b) { return sub(a, b); }
inline Var<double> operator-(const Var<double>& a, const Var<double>& b) { return sub(a, b); }

}  // namespace hrf
