#include "hrf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

namespace hrf {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Index shape_numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

void throw_shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

namespace {

std::pair<Index, Index> matrix_dims(const Shape& shape) {
  if (shape.empty()) return {1, 1};
  if (shape.size() == 1) return {1, shape[0]};
  Index rows = 1;
  for (std::size_t i = 0; i + 1 < shape.size(); ++i) rows *= shape[i];
  return {rows, shape.back()};
}

template <typename Scalar>
void require_same_shape(const char* op, const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.shape() != b.shape()) throw_shape_mismatch(op, a.shape(), b.shape());
}

template <typename Scalar>
void require_map(const char* op, const Var<Scalar>& a) {
  if (a.shape().size() != 3) throw ShapeError(std::string(op) + ": expected [H, W, C], got " + shape_string(a.shape()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, bool requires_grad) : shape_(std::move(shape)), requires_grad_(requires_grad) {
  auto [r, c] = matrix_dims(shape_);
  values_ = Matrix<Scalar>::Zero(r, c);
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, Matrix<Scalar> values, bool requires_grad)
    : shape_(std::move(shape)), values_(std::move(values)), requires_grad_(requires_grad) {
  auto [r, c] = matrix_dims(shape_);
  if (values_.size() != r * c) {
    throw ShapeError("tensor: " + std::to_string(values_.size()) + " values do not fit shape " + shape_string(shape_));
  }
  if (values_.rows() != r || values_.cols() != c) {
    Matrix<Scalar> tmp = Eigen::Map<const Matrix<Scalar>>(values_.data(), r, c);
    values_ = std::move(tmp);
  }
}

template <typename Scalar>
Tensor<Scalar>::Tensor(std::initializer_list<Scalar> row) : shape_{static_cast<Index>(row.size())} {
  values_.resize(1, static_cast<Index>(row.size()));
  Index i = 0;
  for (Scalar v : row) values_(0, i++) = v;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from_matrix(Matrix<Scalar> values, bool requires_grad) {
  Shape shape{values.rows(), values.cols()};
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::scalar(Scalar value, bool requires_grad) {
  Matrix<Scalar> m(1, 1);
  m(0, 0) = value;
  return Tensor(Shape{}, std::move(m), requires_grad);
}

template <typename Scalar>
void Tensor<Scalar>::reshape(Shape shape) {
  if (shape_numel(shape) != numel()) throw_shape_mismatch("reshape", shape_, shape);
  auto [r, c] = matrix_dims(shape);
  Matrix<Scalar> tmp = Eigen::Map<const Matrix<Scalar>>(values_.data(), r, c);
  values_ = std::move(tmp);
  shape_ = std::move(shape);
}

// ---------------------------------------------------------------------------
// Tape

template <typename Scalar>
Var<Scalar> Tape<Scalar>::constant(Tensor<Scalar> value) {
  value.set_requires_grad(false);
  return leaf(std::move(value));
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::leaf(Tensor<Scalar> value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var<Scalar>(this, static_cast<int>(nodes_.size() - 1));
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::record(Tensor<Scalar> value, std::vector<int> parents, Backward backward) {
  bool needs = false;
  for (int p : parents) needs = needs || nodes_[p].value.requires_grad();
  value.set_requires_grad(needs);
  nodes_.push_back(Node{std::move(value), {}, false, needs ? std::move(backward) : Backward{}});
  return Var<Scalar>(this, static_cast<int>(nodes_.size() - 1));
}

template <typename Scalar>
Matrix<Scalar>& Tape<Scalar>::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Matrix<Scalar>::Zero(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

template <typename Scalar>
void Tape<Scalar>::backward(const Var<Scalar>& loss) {
  if (loss.tensor().numel() != 1) {
    throw AutodiffError("backward: loss must be a scalar, got shape " + shape_string(loss.shape()));
  }
  if (backward_done_) throw AutodiffError("backward: tape already differentiated; re-run the forward pass");
  backward_done_ = true;
  if (!loss.requires_grad()) return;
  Node& root = nodes_[loss.id()];
  root.grad = Matrix<Scalar>::Ones(1, 1);
  root.has_grad = true;
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.has_grad && n.backward) n.backward(*this, i);
  }
}

template <typename Scalar>
Matrix<Scalar> Tape<Scalar>::grad(const Var<Scalar>& v) const {
  const Node& n = nodes_[v.id()];
  if (!n.has_grad) return Matrix<Scalar>::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

// ---------------------------------------------------------------------------
// Operations

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.cols() != b.rows()) throw_shape_mismatch("matmul", a.shape(), b.shape());
  Matrix<Scalar> out = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  return a.tape().record(Tensor<Scalar>::from_matrix(std::move(out)), {ia, ib}, [ia, ib](Tape<Scalar>& t, int self) {
    const auto& g = t.out_grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias) {
  if (x.cols() != weight.rows()) throw_shape_mismatch("linear", x.shape(), weight.shape());
  if (bias.tensor().numel() != weight.cols()) throw_shape_mismatch("linear bias", bias.shape(), weight.shape());
  Matrix<Scalar> out = x.value() * weight.value();
  out.rowwise() += Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(bias.value().data(), weight.cols());
  const int ix = x.id(), iw = weight.id(), ib = bias.id();
  return x.tape().record(Tensor<Scalar>::from_matrix(std::move(out)), {ix, iw, ib},
                         [ix, iw, ib](Tape<Scalar>& t, int self) {
                           const auto& g = t.out_grad(self);
                           if (t.requires_grad(ix)) t.accumulate(ix, g * t.value(iw).transpose());
                           if (t.requires_grad(iw)) t.accumulate(iw, t.value(ix).transpose() * g);
                           if (t.requires_grad(ib)) {
                             Matrix<Scalar> gb = g.colwise().sum();
                             gb.resize(t.value(ib).rows(), t.value(ib).cols());
                             t.accumulate(ib, gb);
                           }
                         });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape("add", a, b);
  Matrix<Scalar> out = a.value() + b.value();
  const int ia = a.id(), ib = b.id();
  return a.tape().record(Tensor<Scalar>(a.shape(), std::move(out)), {ia, ib}, [ia, ib](Tape<Scalar>& t, int self) {
    t.accumulate(ia, t.out_grad(self));
    t.accumulate(ib, t.out_grad(self));
  });
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape("sub", a, b);
  Matrix<Scalar> out = a.value() - b.value();
  const int ia = a.id(), ib = b.id();
  return a.tape().record(Tensor<Scalar>(a.shape(), std::move(out)), {ia, ib}, [ia, ib](Tape<Scalar>& t, int self) {
    t.accumulate(ia, t.out_grad(self));
    t.accumulate(ib, -t.out_grad(self));
  });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape("mul", a, b);
  Matrix<Scalar> out = a.value().cwiseProduct(b.value());
  const int ia = a.id(), ib = b.id();
  return a.tape().record(Tensor<Scalar>(a.shape(), std::move(out)), {ia, ib}, [ia, ib](Tape<Scalar>& t, int self) {
    const auto& g = t.out_grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar factor) {
  Matrix<Scalar> out = a.value() * factor;
  const int ia = a.id();
  return a.tape().record(Tensor<Scalar>(a.shape(), std::move(out)), {ia}, [ia, factor](Tape<Scalar>& t, int self) {
    t.accumulate(ia, t.out_grad(self) * factor);
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& a) {
  Matrix<Scalar> out = a.value().cwiseMax(Scalar(0));
  const int ia = a.id();
  return a.tape().record(Tensor<Scalar>(a.shape(), std::move(out)), {ia}, [ia](Tape<Scalar>& t, int self) {
    const auto& x = t.value(ia);
    t.accumulate(ia, (x.array() > Scalar(0)).select(t.out_grad(self), Scalar(0)).matrix());
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& a) {
  Matrix<Scalar> out = (Scalar(1) / (Scalar(1) + (-a.value().array()).exp())).matrix();
  const int ia = a.id();
  return a.tape().record(Tensor<Scalar>(a.shape(), std::move(out)), {ia}, [ia](Tape<Scalar>& t, int self) {
    const auto& y = t.value(self);
    t.accumulate(ia, (t.out_grad(self).array() * y.array() * (Scalar(1) - y.array())).matrix());
  });
}

template <typename Scalar>
Var<Scalar> softplus(const Var<Scalar>& a) {
  const auto& x = a.value();
  Matrix<Scalar> out(x.rows(), x.cols());
  for (Index i = 0; i < x.size(); ++i) {
    const Scalar v = x.data()[i];
    out.data()[i] = v > Scalar(0) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  }
  const int ia = a.id();
  return a.tape().record(Tensor<Scalar>(a.shape(), std::move(out)), {ia}, [ia](Tape<Scalar>& t, int self) {
    const auto& xv = t.value(ia);
    t.accumulate(ia, (t.out_grad(self).array() / (Scalar(1) + (-xv.array()).exp())).matrix());
  });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& a) {
  Matrix<Scalar> out = a.value().array().tanh().matrix();
  const int ia = a.id();
  return a.tape().record(Tensor<Scalar>(a.shape(), std::move(out)), {ia}, [ia](Tape<Scalar>& t, int self) {
    const auto& y = t.value(self);
    t.accumulate(ia, (t.out_grad(self).array() * (Scalar(1) - y.array().square())).matrix());
  });
}

template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& a) {
  Matrix<Scalar> out = a.value().array().exp().matrix();
  const int ia = a.id();
  return a.tape().record(Tensor<Scalar>(a.shape(), std::move(out)), {ia}, [ia](Tape<Scalar>& t, int self) {
    t.accumulate(ia, t.out_grad(self).cwiseProduct(t.value(self)));
  });
}

template <typename Scalar>
Var<Scalar> square(const Var<Scalar>& a) {
  Matrix<Scalar> out = a.value().array().square().matrix();
  const int ia = a.id();
  return a.tape().record(Tensor<Scalar>(a.shape(), std::move(out)), {ia}, [ia](Tape<Scalar>& t, int self) {
    t.accumulate(ia, (Scalar(2) * t.out_grad(self).array() * t.value(ia).array()).matrix());
  });
}

template <typename Scalar>
Var<Scalar> softmax(const Var<Scalar>& a) {
  const auto& x = a.value();
  Matrix<Scalar> out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  const int ia = a.id();
  return a.tape().record(Tensor<Scalar>(a.shape(), std::move(out)), {ia}, [ia](Tape<Scalar>& t, int self) {
    const auto& y = t.value(self);
    const auto& g = t.out_grad(self);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dot = g.cwiseProduct(y).rowwise().sum();
    Matrix<Scalar> gx = y.cwiseProduct(g - dot.replicate(1, g.cols()));
    t.accumulate(ia, gx);
  });
}

template <typename Scalar>
Var<Scalar> concat(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw_shape_mismatch("concat", parts.front().shape(), p.shape());
    cols += p.cols();
  }
  Matrix<Scalar> out(rows, cols);
  std::vector<int> ids;
  std::vector<Index> offsets;
  Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(c);
    c += p.cols();
  }
  return parts.front().tape().record(Tensor<Scalar>::from_matrix(std::move(out)), ids,
                                     [ids, offsets](Tape<Scalar>& t, int self) {
                                       const auto& g = t.out_grad(self);
                                       for (std::size_t i = 0; i < ids.size(); ++i) {
                                         if (!t.requires_grad(ids[i])) continue;
                                         t.accumulate(ids[i], g.middleCols(offsets[i], t.value(ids[i]).cols()));
                                       }
                                     });
}

template <typename Scalar>
Var<Scalar> concat_rows(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw_shape_mismatch("concat_rows", parts.front().shape(), p.shape());
    rows += p.rows();
  }
  Matrix<Scalar> out(rows, cols);
  std::vector<int> ids;
  std::vector<Index> offsets;
  Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(r);
    r += p.rows();
  }
  return parts.front().tape().record(Tensor<Scalar>::from_matrix(std::move(out)), ids,
                                     [ids, offsets](Tape<Scalar>& t, int self) {
                                       const auto& g = t.out_grad(self);
                                       for (std::size_t i = 0; i < ids.size(); ++i) {
                                         if (!t.requires_grad(ids[i])) continue;
                                         const auto& v = t.value(ids[i]);
                                         Matrix<Scalar> part = g.middleRows(offsets[i], v.rows());
                                         part.resize(v.rows(), v.cols());
                                         t.accumulate(ids[i], part);
                                       }
                                     });
}

template <typename Scalar>
Var<Scalar> slice(const Var<Scalar>& a, Index col_begin, Index col_count) {
  if (col_begin < 0 || col_count < 0 || col_begin + col_count > a.cols()) {
    throw_shape_mismatch("slice", a.shape(), Shape{col_begin, col_count});
  }
  Matrix<Scalar> out = a.value().middleCols(col_begin, col_count);
  const int ia = a.id();
  return a.tape().record(Tensor<Scalar>::from_matrix(std::move(out)), {ia},
                         [ia, col_begin, col_count](Tape<Scalar>& t, int self) {
                           t.grad_buffer(ia).middleCols(col_begin, col_count) += t.out_grad(self);
                         });
}

template <typename Scalar>
Var<Scalar> slice_rows(const Var<Scalar>& a, Index row_begin, Index row_count) {
  if (row_begin < 0 || row_count < 0 || row_begin + row_count > a.rows()) {
    throw_shape_mismatch("slice_rows", a.shape(), Shape{row_begin, row_count});
  }
  Matrix<Scalar> out = a.value().middleRows(row_begin, row_count);
  const int ia = a.id();
  return a.tape().record(Tensor<Scalar>::from_matrix(std::move(out)), {ia},
                         [ia, row_begin, row_count](Tape<Scalar>& t, int self) {
                           t.grad_buffer(ia).middleRows(row_begin, row_count) += t.out_grad(self);
                         });
}

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& a, Shape shape) {
  Tensor<Scalar> out = a.tensor();
  out.reshape(std::move(shape));
  const int ia = a.id();
  return a.tape().record(std::move(out), {ia}, [ia](Tape<Scalar>& t, int self) {
    const auto& g = t.out_grad(self);
    const auto& v = t.value(ia);
    t.accumulate(ia, Eigen::Map<const Matrix<Scalar>>(g.data(), v.rows(), v.cols()));
  });
}

template <typename Scalar>
Var<Scalar> reduce_sum(const Var<Scalar>& a) {
  const int ia = a.id();
  return a.tape().record(Tensor<Scalar>::scalar(a.value().sum()), {ia}, [ia](Tape<Scalar>& t, int self) {
    const auto& v = t.value(ia);
    t.accumulate(ia, Matrix<Scalar>::Constant(v.rows(), v.cols(), t.out_grad(self)(0, 0)));
  });
}

template <typename Scalar>
Var<Scalar> reduce_mean(const Var<Scalar>& a) {
  const Scalar n = static_cast<Scalar>(std::max<Index>(1, a.tensor().numel()));
  return scale(reduce_sum(a), Scalar(1) / n);
}

// ---------------------------------------------------------------------------
// Image-space operations

template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& input, const Var<Scalar>& weight, const Var<Scalar>& bias, int stride) {
  require_map("conv2d", input);
  if (stride != 1 && stride != 2) throw ShapeError("conv2d: stride must be 1 or 2");
  const Index h = input.shape()[0], w = input.shape()[1], cin = input.shape()[2];
  if (weight.rows() != 9 * cin) throw_shape_mismatch("conv2d", input.shape(), weight.shape());
  const Index cout = weight.cols();
  if (bias.tensor().numel() != cout) throw_shape_mismatch("conv2d bias", bias.shape(), weight.shape());
  const Index ho = (h - 1) / stride + 1, wo = (w - 1) / stride + 1;

  // im2col: one row per output pixel, (ky, kx, c) per column.
  auto columns = std::make_shared<Matrix<Scalar>>(Matrix<Scalar>::Zero(ho * wo, 9 * cin));
  const auto& x = input.value();
  for (Index oy = 0; oy < ho; ++oy) {
    for (Index ox = 0; ox < wo; ++ox) {
      const Index row = oy * wo + ox;
      for (int ky = 0; ky < 3; ++ky) {
        const Index iy = oy * stride + ky - 1;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const Index ix = ox * stride + kx - 1;
          if (ix < 0 || ix >= w) continue;
          columns->row(row).segment((ky * 3 + kx) * cin, cin) = x.row(iy * w + ix);
        }
      }
    }
  }
  Matrix<Scalar> out = (*columns) * weight.value();
  out.rowwise() += Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(bias.value().data(), cout);

  const int ii = input.id(), iw = weight.id(), ib = bias.id();
  return input.tape().record(
      Tensor<Scalar>(Shape{ho, wo, cout}, std::move(out)), {ii, iw, ib},
      [=](Tape<Scalar>& t, int self) {
        const auto& g = t.out_grad(self);
        if (t.requires_grad(iw)) t.accumulate(iw, columns->transpose() * g);
        if (t.requires_grad(ib)) {
          Matrix<Scalar> gb = g.colwise().sum();
          gb.resize(t.value(ib).rows(), t.value(ib).cols());
          t.accumulate(ib, gb);
        }
        if (t.requires_grad(ii)) {
          Matrix<Scalar> gcol = g * t.value(iw).transpose();
          Matrix<Scalar>& gx = t.grad_buffer(ii);
          for (Index oy = 0; oy < ho; ++oy) {
            for (Index ox = 0; ox < wo; ++ox) {
              const Index row = oy * wo + ox;
              for (int ky = 0; ky < 3; ++ky) {
                const Index iy = oy * stride + ky - 1;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < 3; ++kx) {
                  const Index ix = ox * stride + kx - 1;
                  if (ix < 0 || ix >= w) continue;
                  gx.row(iy * w + ix) += gcol.row(row).segment((ky * 3 + kx) * cin, cin);
                }
              }
            }
          }
        }
      });
}

template <typename Scalar>
Var<Scalar> upsample2x(const Var<Scalar>& input) {
  require_map("upsample2x", input);
  const Index h = input.shape()[0], w = input.shape()[1], c = input.shape()[2];
  const auto& x = input.value();
  Matrix<Scalar> out(4 * h * w, c);
  for (Index y = 0; y < 2 * h; ++y)
    for (Index xx = 0; xx < 2 * w; ++xx) out.row(y * 2 * w + xx) = x.row((y / 2) * w + xx / 2);
  const int ii = input.id();
  return input.tape().record(Tensor<Scalar>(Shape{2 * h, 2 * w, c}, std::move(out)), {ii},
                             [ii, h, w](Tape<Scalar>& t, int self) {
                               const auto& g = t.out_grad(self);
                               Matrix<Scalar>& gx = t.grad_buffer(ii);
                               for (Index y = 0; y < 2 * h; ++y)
                                 for (Index xx = 0; xx < 2 * w; ++xx) gx.row((y / 2) * w + xx / 2) += g.row(y * 2 * w + xx);
                             });
}

template <typename Scalar>
Var<Scalar> concat_channels(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_map("concat_channels", a);
  require_map("concat_channels", b);
  if (a.shape()[0] != b.shape()[0] || a.shape()[1] != b.shape()[1]) throw_shape_mismatch("concat_channels", a.shape(), b.shape());
  Var<Scalar> joined = concat(std::vector<Var<Scalar>>{a, b});
  return reshape(joined, Shape{a.shape()[0], a.shape()[1], a.shape()[2] + b.shape()[2]});
}

template <typename Scalar>
SampleResult<Scalar> bilinear_sample(const Var<Scalar>& map, const Var<Scalar>& uv) {
  require_map("bilinear_sample", map);
  if (uv.cols() != 2) throw_shape_mismatch("bilinear_sample", map.shape(), uv.shape());
  const Index h = map.shape()[0], w = map.shape()[1], c = map.shape()[2];
  const Index n = uv.rows();
  const auto& m = map.value();
  const auto& q = uv.value();

  struct Corner {
    Index i00, i10, i01, i11;
    Scalar fx, fy;
  };
  auto corners = std::make_shared<std::vector<Corner>>(n);
  std::vector<bool> valid(n, false);
  Matrix<Scalar> out = Matrix<Scalar>::Zero(n, c);
  for (Index r = 0; r < n; ++r) {
    const Scalar x = q(r, 0), y = q(r, 1);
    if (!(x >= 0 && y >= 0 && x <= Scalar(w - 1) && y <= Scalar(h - 1))) continue;
    valid[r] = true;
    Index x0 = std::min<Index>(static_cast<Index>(std::floor(x)), std::max<Index>(w - 2, 0));
    Index y0 = std::min<Index>(static_cast<Index>(std::floor(y)), std::max<Index>(h - 2, 0));
    const Index x1 = std::min<Index>(x0 + 1, w - 1), y1 = std::min<Index>(y0 + 1, h - 1);
    Corner k{y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1, x - Scalar(x0), y - Scalar(y0)};
    (*corners)[r] = k;
    out.row(r) = (1 - k.fx) * (1 - k.fy) * m.row(k.i00) + k.fx * (1 - k.fy) * m.row(k.i10) +
                 (1 - k.fx) * k.fy * m.row(k.i01) + k.fx * k.fy * m.row(k.i11);
  }
  auto valid_rows = std::make_shared<std::vector<bool>>(valid);
  const int im = map.id(), iq = uv.id();
  Var<Scalar> values = map.tape().record(
      Tensor<Scalar>::from_matrix(std::move(out)), {im, iq}, [=](Tape<Scalar>& t, int self) {
        const auto& g = t.out_grad(self);
        const bool want_map = t.requires_grad(im), want_uv = t.requires_grad(iq);
        Matrix<Scalar>* gm = want_map ? &t.grad_buffer(im) : nullptr;
        Matrix<Scalar>* gq = want_uv ? &t.grad_buffer(iq) : nullptr;
        const auto& mv = t.value(im);
        for (Index r = 0; r < n; ++r) {
          if (!(*valid_rows)[r]) continue;
          const Corner& k = (*corners)[r];
          if (gm) {
            gm->row(k.i00) += (1 - k.fx) * (1 - k.fy) * g.row(r);
            gm->row(k.i10) += k.fx * (1 - k.fy) * g.row(r);
            gm->row(k.i01) += (1 - k.fx) * k.fy * g.row(r);
            gm->row(k.i11) += k.fx * k.fy * g.row(r);
          }
          if (gq) {
            const auto dx = (1 - k.fy) * (mv.row(k.i10) - mv.row(k.i00)) + k.fy * (mv.row(k.i11) - mv.row(k.i01));
            const auto dy = (1 - k.fx) * (mv.row(k.i01) - mv.row(k.i00)) + k.fx * (mv.row(k.i11) - mv.row(k.i10));
            (*gq)(r, 0) += g.row(r).dot(dx);
            (*gq)(r, 1) += g.row(r).dot(dy);
          }
        }
      });
  return SampleResult<Scalar>{values, std::move(valid)};
}

// ---------------------------------------------------------------------------

#define HRF_INSTANTIATE_TENSOR(S)                                                                     \
  template class Tensor<S>;                                                                           \
  template class Tape<S>;                                                                             \
  template Var<S> matmul(const Var<S>&, const Var<S>&);                                               \
  template Var<S> linear(const Var<S>&, const Var<S>&, const Var<S>&);                                \
  template Var<S> add(const Var<S>&, const Var<S>&);                                                  \
  template Var<S> sub(const Var<S>&, const Var<S>&);                                                  \
  template Var<S> mul(const Var<S>&, const Var<S>&);                                                  \
  template Var<S> scale(const Var<S>&, S);                                                            \
  template Var<S> relu(const Var<S>&);                                                                \
  template Var<S> sigmoid(const Var<S>&);                                                             \
  template Var<S> softplus(const Var<S>&);                                                            \
  template Var<S> tanh(const Var<S>&);                                                                \
  template Var<S> exp(const Var<S>&);                                                                 \
  template Var<S> square(const Var<S>&);                                                              \
  template Var<S> softmax(const Var<S>&);                                                             \
  template Var<S> concat(const std::vector<Var<S>>&);                                                 \
  template Var<S> concat_rows(const std::vector<Var<S>>&);                                            \
  template Var<S> slice(const Var<S>&, Index, Index);                                                 \
  template Var<S> slice_rows(const Var<S>&, Index, Index);                                            \
  template Var<S> reshape(const Var<S>&, Shape);                                                      \
  template Var<S> reduce_sum(const Var<S>&);                                                          \
  template Var<S> reduce_mean(const Var<S>&);                                                         \
  template Var<S> conv2d(const Var<S>&, const Var<S>&, const Var<S>&, int);                           \
  template Var<S> upsample2x(const Var<S>&);                                                          \
  template Var<S> concat_channels(const Var<S>&, const Var<S>&);                                      \
  template SampleResult<S> bilinear_sample(const Var<S>&, const Var<S>&);

HRF_INSTANTIATE_TENSOR(float)
HRF_INSTANTIATE_TENSOR(double)

}  // namespace hrf
