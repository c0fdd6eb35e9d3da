// Copyright 2026 The adassl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense tensors and a reverse-mode gradient tape.
//
// Every op works on the "matrix view" of its operands: rows() is the product
// of all leading extents and cols() is the trailing extent. Binary ops
// broadcast along either matrix axis when one operand has extent 1 there.

#ifndef ADASSL_TENSOR_HPP_
#define ADASSL_TENSOR_HPP_

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace adassl {

using Shape = std::vector<std::size_t>;

// Vectorised reductions peel a prefix up to the first aligned element, so
// their summation order depends on the buffer address. Aligning every buffer
// to the widest SIMD register makes results independent of allocation history.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

std::string shape_string(const Shape& shape);

enum class Precision { kFloat64, kFloat32 };

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> values);
  static Tensor zeros_like(const Tensor& other);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  bool empty() const { return shape_.empty() && data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  double item() const;
  bool all_finite() const;
  void fill(double value);
  void round_to(Precision precision);

 private:
  Shape shape_;
  Buffer data_;
};

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  // Accumulated gradient after Tape::backward; zeros when none reached it.
  Tensor grad() const;
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class BackwardContext {
 public:
  const Tensor& grad_output() const;
  const Tensor& output() const;
  const Tensor& input(std::size_t k) const;
  bool needs_grad(std::size_t k) const;
  // Accumulator for input k, zero-initialised on first use.
  Tensor& input_grad(std::size_t k);

 private:
  friend class Tape;
  BackwardContext(Tape& tape, int node) : tape_(tape), node_(node) {}

  Tape& tape_;
  int node_;
};

class Tape {
 public:
  using BackwardFn = std::function<void(BackwardContext&)>;

  explicit Tape(Precision precision = Precision::kFloat64)
      : precision_(precision) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);
  Var constant(Tensor value);
  // Appends an op node. The node requires grad iff any input does.
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  // Seeds d(root)/d(root) = 1 and walks the nodes in reverse append order.
  void backward(const Var& root);

  Var handle(int id) { return Var(this, id); }
  const Tensor& value(int id) const { return nodes_[id].value; }
  const Tensor& grad(int id) const { return nodes_[id].grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t backward_visits() const { return backward_visits_; }
  Precision precision() const { return precision_; }

 private:
  friend class BackwardContext;

  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  Precision precision_;
  std::size_t backward_visits_ = 0;
};

// ---- elementwise ----------------------------------------------------------

enum class UnaryOp {
  kNeg, kExp, kLog, kTanh, kSigmoid, kSoftplus, kLeakyRelu, kSquare, kSqrt,
};
enum class BinaryOp { kAdd, kSub, kMul, kDiv };

const char* unary_op_name(UnaryOp op);

Var unary(UnaryOp op, const Var& x, double param = 0.0);
Var binary(BinaryOp op, const Var& a, const Var& b);

inline Var neg(const Var& x) { return unary(UnaryOp::kNeg, x); }
inline Var exp(const Var& x) { return unary(UnaryOp::kExp, x); }
inline Var log(const Var& x) { return unary(UnaryOp::kLog, x); }
inline Var tanh(const Var& x) { return unary(UnaryOp::kTanh, x); }
inline Var sigmoid(const Var& x) { return unary(UnaryOp::kSigmoid, x); }
inline Var softplus(const Var& x) { return unary(UnaryOp::kSoftplus, x); }
inline Var leaky_relu(const Var& x, double slope) {
  return unary(UnaryOp::kLeakyRelu, x, slope);
}
inline Var square(const Var& x) { return unary(UnaryOp::kSquare, x); }
inline Var sqrt(const Var& x) { return unary(UnaryOp::kSqrt, x); }

inline Var add(const Var& a, const Var& b) { return binary(BinaryOp::kAdd, a, b); }
inline Var sub(const Var& a, const Var& b) { return binary(BinaryOp::kSub, a, b); }
inline Var mul(const Var& a, const Var& b) { return binary(BinaryOp::kMul, a, b); }
inline Var div(const Var& a, const Var& b) { return binary(BinaryOp::kDiv, a, b); }

Var scale(const Var& x, double factor);
Var add_scalar(const Var& x, double offset);
// Identity on the interior, zero gradient where the input was clipped.
Var clamp(const Var& x, double lo, double hi);

double softplus_value(double x);
double sigmoid_value(double x);

// ---- reductions -----------------------------------------------------------

enum class ReduceOp { kSum, kMean, kMax, kLogSumExp };
inline constexpr int kAllAxes = -1;

// axis 0 reduces over rows (result 1 x cols), axis 1 over columns
// (result rows x 1), kAllAxes to a rank-0 scalar.
Var reduce(ReduceOp op, const Var& x, int axis = kAllAxes);

inline Var sum(const Var& x, int axis = kAllAxes) { return reduce(ReduceOp::kSum, x, axis); }
inline Var mean(const Var& x, int axis = kAllAxes) { return reduce(ReduceOp::kMean, x, axis); }
inline Var max(const Var& x, int axis = kAllAxes) { return reduce(ReduceOp::kMax, x, axis); }
inline Var logsumexp(const Var& x, int axis = kAllAxes) {
  return reduce(ReduceOp::kLogSumExp, x, axis);
}

// ---- linear algebra and structure -----------------------------------------

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& x);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& x, std::size_t begin, std::size_t end);
// Main diagonal of a square matrix as a column [n x 1].
Var diagonal(const Var& x);

inline constexpr double kNormalizeEpsilon = 1e-12;
Var l2_normalize(const Var& x);

// S_ij = -sum_d W_id (a_id - b_jd)^2 for a [K x d], b [M x d] and W of shape
// [1 x 1], [1 x d] or [K x d].
Var neg_pairwise_sq_distance(const Var& a, const Var& b, const Var& w);

// Same value, cut from the graph.
Var detach(const Var& x);
// Forward value is `hard`; the backward pass routes the incoming gradient to
// `relaxed` unchanged.
Var straight_through(const Tensor& hard, const Var& relaxed);

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  static BatchNormState make(std::size_t features);
};

struct BatchNormMode {
  bool training = true;
  bool update_running_stats = true;
};

Var batch_norm(const Var& x, const Var& gamma, const Var& beta,
               BatchNormState& state, BatchNormMode mode);

// ---- fault injection --------------------------------------------------------

// Deliberate adjoint corruption used only by the mutation check of the
// verification suite.
namespace fault {
enum class Fault { kNone, kSoftplusAdjointSign };
void inject(Fault f);
Fault active();
}  // namespace fault

}  // namespace adassl

#endif  // ADASSL_TENSOR_HPP_
