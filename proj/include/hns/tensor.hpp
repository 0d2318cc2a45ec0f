#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

namespace hns::ad {

using Eigen::ArrayXd;
using RowArr2 = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tape;

// Dense real tensor of rank 0, 1 or 2, stored flat in row-major order.
// Values are immutable once built; `node` is set when the tensor has been
// recorded on a tape.
struct Tensor {
  std::vector<Eigen::Index> shape;
  std::shared_ptr<const ArrayXd> data;
  Tape* tape = nullptr;
  int node = -1;

  Eigen::Index size() const { return data ? data->size() : 0; }
  int rank() const { return static_cast<int>(shape.size()); }
  Eigen::Index rows() const { return rank() == 2 ? shape[0] : (rank() == 1 ? shape[0] : 1); }
  Eigen::Index cols() const { return rank() == 2 ? shape[1] : 1; }
  bool taped() const { return tape != nullptr && node >= 0; }

  const ArrayXd& array() const { return *data; }
  double item() const;
  Eigen::Map<const RowArr2> mat() const {
    return Eigen::Map<const RowArr2>(data->data(), rows(), cols());
  }
  Eigen::ArrayXXd to_matrix() const { return mat(); }

  static Tensor scalar(double v);
  static Tensor vector(ArrayXd v);
  static Tensor matrix(const Eigen::ArrayXXd& m);
  static Tensor from_flat(std::vector<Eigen::Index> shape, ArrayXd flat);
  static Tensor zeros(std::vector<Eigen::Index> shape);
  static Tensor full(std::vector<Eigen::Index> shape, double v);
};

// Per-node gradient buffers produced by backward().
class Gradients {
 public:
  explicit Gradients(std::size_t n_nodes) : grads_(n_nodes), present_(n_nodes, false) {}

  ArrayXd& accumulate(int node, Eigen::Index size);
  bool has(int node) const { return node >= 0 && present_[static_cast<std::size_t>(node)]; }
  const ArrayXd& raw(int node) const { return grads_[static_cast<std::size_t>(node)]; }

  // Gradient for a taped tensor; zeros if the node was never touched.
  ArrayXd get(const Tensor& t) const;

 private:
  std::vector<ArrayXd> grads_;
  std::vector<bool> present_;
};

enum class Op {
  leaf,
  add,
  sub,
  mul,
  div,
  matmul,
  sum,
  mean,
  concat,
  slice,
  reshape,
  sin,
  exp,
  log,
  pow,
  abs,
  sigmoid,
  tanh,
  softmax,
  cumsum,
  broadcast,
  // fused / domain primitives
  layer_norm,
  row_normalize,
  outer,
  upsample_linear,
  phase_cumsum,
  stft_mag,
  noise_bank,
};

// Reverse-mode tape. Nodes are appended in execution order, so parent ids
// are always smaller than child ids and a single reverse sweep suffices.
class Tape {
 public:
  using BackwardFn = std::function<void(const ArrayXd& grad_out, Gradients& grads)>;

  // Registers a tensor as a differentiable leaf and returns the taped handle.
  Tensor watch(const Tensor& t);

  // Appends an interior node. `backward` receives this node's output
  // gradient and accumulates into the parents it captured.
  int emit(Op op, std::vector<int> parents, Eigen::Index out_size, BackwardFn backward);

  std::size_t size() const { return nodes_.size(); }
  Op op_of(int node) const { return nodes_[static_cast<std::size_t>(node)].op; }
  const std::vector<int>& parents_of(int node) const {
    return nodes_[static_cast<std::size_t>(node)].parents;
  }

  friend Gradients backward(Tape& tape, const Tensor& output);

 private:
  struct Node {
    Op op;
    std::vector<int> parents;
    Eigen::Index out_size;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// Reverse accumulation from a scalar output. Throws if `output` is not a
// scalar recorded on this tape.
Gradients backward(Tape& tape, const Tensor& output);

// ---- primitives -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// axis 0 reduces over rows ([N,D] -> [D]); axis 1 over columns ([N,D] -> [N]).
Tensor sum(const Tensor& x, int axis);

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, Eigen::Index start, Eigen::Index len);
Tensor reshape(const Tensor& x, std::vector<Eigen::Index> new_shape);

Tensor sin(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor pow(const Tensor& x, double exponent);
Tensor abs(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);

// Row-wise softmax ([N,K]; a vector is treated as a single row).
Tensor softmax(const Tensor& x);
// Row normalization y = x / rowsum(x); zero rows map to zero rows.
Tensor row_normalize(const Tensor& x);

// Prefix sums along the time axis (axis 0).
Tensor cumsum(const Tensor& x);
// Prefix sums wrapped into [0, 2*pi) after every step; gradient is the same
// as cumsum since the wrap has unit slope.
Tensor phase_cumsum(const Tensor& x);

// Replicates a vector [D] (or scalar) across n rows -> [n, D].
Tensor broadcast_rows(const Tensor& x, Eigen::Index n_rows);

// Per-row layer normalization with learned gain/bias over the feature axis.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// outer(u [N], v [K]) -> [N, K].
Tensor outer(const Tensor& u, const Tensor& v);

// Linear interpolation from frame rate to sample rate. Frame i maps to
// sample i*hop; the last frame value is held. [T] -> [T*hop] or
// [T,D] -> [T*hop, D].
Tensor upsample_linear(const Tensor& frames, int hop);

// Hann-windowed STFT magnitudes, frames at t*hop for t in
// 0 .. (len-fft_size)/hop. Returns [n_frames, fft_size/2 + 1].
Tensor stft_magnitude(const Tensor& x, int fft_size, int hop);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }
inline Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul_scalar(a, c); }

}  // namespace hns::ad
