#include "hns/tensor.hpp"

#include <numeric>

#include "hns/common.hpp"

namespace hns::ad {

namespace {
Eigen::Index shape_size(const std::vector<Eigen::Index>& shape) {
  Eigen::Index n = 1;
  for (auto d : shape) n *= d;
  return n;
}
}  // namespace

double Tensor::item() const {
  if (size() != 1) throw InvalidArgument("item(): tensor is not a scalar");
  return (*data)[0];
}

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.shape = {};
  auto a = std::make_shared<ArrayXd>(1);
  (*a)[0] = v;
  t.data = std::move(a);
  return t;
}

Tensor Tensor::vector(ArrayXd v) {
  Tensor t;
  t.shape = {v.size()};
  t.data = std::make_shared<ArrayXd>(std::move(v));
  return t;
}

Tensor Tensor::matrix(const Eigen::ArrayXXd& m) {
  Tensor t;
  t.shape = {m.rows(), m.cols()};
  ArrayXd flat(m.size());
  Eigen::Map<RowArr2>(flat.data(), m.rows(), m.cols()) = m;
  t.data = std::make_shared<ArrayXd>(std::move(flat));
  return t;
}

Tensor Tensor::from_flat(std::vector<Eigen::Index> shape, ArrayXd flat) {
  if (shape_size(shape) != flat.size())
    throw InvalidArgument("from_flat: shape does not match data length");
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::make_shared<ArrayXd>(std::move(flat));
  return t;
}

Tensor Tensor::zeros(std::vector<Eigen::Index> shape) {
  const Eigen::Index n = shape_size(shape);
  return from_flat(std::move(shape), ArrayXd::Zero(n));
}

Tensor Tensor::full(std::vector<Eigen::Index> shape, double v) {
  const Eigen::Index n = shape_size(shape);
  return from_flat(std::move(shape), ArrayXd::Constant(n, v));
}

ArrayXd& Gradients::accumulate(int node, Eigen::Index size) {
  auto i = static_cast<std::size_t>(node);
  if (!present_[i]) {
    grads_[i] = ArrayXd::Zero(size);
    present_[i] = true;
  }
  return grads_[i];
}

ArrayXd Gradients::get(const Tensor& t) const {
  if (!t.taped()) throw InvalidArgument("gradient requested for a tensor that is not on the tape");
  if (!has(t.node)) return ArrayXd::Zero(t.size());
  return grads_[static_cast<std::size_t>(t.node)];
}

Tensor Tape::watch(const Tensor& t) {
  Tensor out = t;
  out.tape = this;
  out.node = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{Op::leaf, {}, t.size(), nullptr});
  return out;
}

int Tape::emit(Op op, std::vector<int> parents, Eigen::Index out_size, BackwardFn backward) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{op, std::move(parents), out_size, std::move(backward)});
  return id;
}

Gradients backward(Tape& tape, const Tensor& output) {
  if (!output.taped() || output.tape != &tape)
    throw InvalidArgument("backward: output is not recorded on this tape");
  if (output.size() != 1) throw InvalidArgument("backward: output must be a scalar");

  Gradients grads(tape.nodes_.size());
  grads.accumulate(output.node, 1)[0] = 1.0;

  for (int i = output.node; i >= 0; --i) {
    if (!grads.has(i)) continue;
    const auto& node = tape.nodes_[static_cast<std::size_t>(i)];
    if (node.backward) node.backward(grads.raw(i), grads);
  }
  return grads;
}

}  // namespace hns::ad
