#include <cmath>
#include <numbers>

#include "hns/common.hpp"
#include "hns/dsp.hpp"
#include "hns/tensor.hpp"

namespace hns::ad {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

Tape* common_tape(std::initializer_list<const Tensor*> ts) {
  Tape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t->taped()) continue;
    if (tape == nullptr) tape = t->tape;
    else if (tape != t->tape)
      throw InvalidArgument("operands recorded on different tapes");
  }
  return tape;
}

Tensor make_op(Op op, Tape* tape, std::vector<int> parents, std::vector<Eigen::Index> shape,
               ArrayXd value, Tape::BackwardFn backward) {
  Tensor out;
  out.shape = std::move(shape);
  out.data = std::make_shared<ArrayXd>(std::move(value));
  if (tape != nullptr) {
    out.tape = tape;
    out.node = tape->emit(op, std::move(parents), out.data->size(), std::move(backward));
  }
  return out;
}

Tensor unary(Op op, const Tensor& x, ArrayXd value,
             std::function<ArrayXd(const ArrayXd& g)> vjp) {
  Tape* tape = common_tape({&x});
  const int px = x.node;
  const Eigen::Index n = x.size();
  return make_op(op, tape, {px}, x.shape, std::move(value),
                 [px, n, vjp = std::move(vjp)](const ArrayXd& g, Gradients& grads) {
                   if (px >= 0) grads.accumulate(px, n) += vjp(g);
                 });
}

// Broadcast a scalar tensor to an arbitrary shape.
Tensor broadcast_scalar(const Tensor& s, const std::vector<Eigen::Index>& shape, Eigen::Index n) {
  Tape* tape = common_tape({&s});
  const int ps = s.node;
  return make_op(Op::broadcast, tape, {ps}, shape, ArrayXd::Constant(n, (*s.data)[0]),
                 [ps](const ArrayXd& g, Gradients& grads) {
                   if (ps >= 0) grads.accumulate(ps, 1)[0] += g.sum();
                 });
}

// Aligns shapes for elementwise ops: scalar broadcast and leading-dimension
// broadcast of a [D] vector over the rows of an [N,D] matrix. Anything else
// must match exactly.
void align(Tensor& a, Tensor& b) {
  if (same_shape(a, b)) return;
  if (b.size() == 1) {
    b = broadcast_scalar(b, a.shape, a.size());
    return;
  }
  if (a.size() == 1) {
    a = broadcast_scalar(a, b.shape, b.size());
    return;
  }
  if (a.rank() == 2 && b.rank() == 1 && b.shape[0] == a.shape[1]) {
    b = broadcast_rows(b, a.shape[0]);
    return;
  }
  if (b.rank() == 2 && a.rank() == 1 && a.shape[0] == b.shape[1]) {
    a = broadcast_rows(a, b.shape[0]);
    return;
  }
  throw InvalidArgument("shape mismatch in elementwise op");
}

ArrayXd stable_sigmoid(const ArrayXd& x) {
  ArrayXd y(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x[i];
    y[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return y;
}

}  // namespace

Tensor broadcast_rows(const Tensor& x, Eigen::Index n_rows) {
  if (x.size() == 1) return broadcast_scalar(x, {n_rows, 1}, n_rows);
  if (x.rank() != 1) throw InvalidArgument("broadcast_rows expects a vector");
  const Eigen::Index d = x.shape[0];
  Tape* tape = common_tape({&x});
  const int px = x.node;
  ArrayXd v(n_rows * d);
  Eigen::Map<RowArr2>(v.data(), n_rows, d) =
      Eigen::Map<const Eigen::Array<double, 1, Eigen::Dynamic>>(x.data->data(), d)
          .replicate(n_rows, 1);
  return make_op(Op::broadcast, tape, {px}, {n_rows, d}, std::move(v),
                 [px, n_rows, d](const ArrayXd& g, Gradients& grads) {
                   if (px < 0) return;
                   ArrayXd& acc = grads.accumulate(px, d);
                   Eigen::Map<const RowArr2> gm(g.data(), n_rows, d);
                   acc += gm.colwise().sum().transpose();
                 });
}

Tensor add(const Tensor& a0, const Tensor& b0) {
  Tensor a = a0, b = b0;
  align(a, b);
  Tape* tape = common_tape({&a, &b});
  const int pa = a.node, pb = b.node;
  const Eigen::Index n = a.size();
  return make_op(Op::add, tape, {pa, pb}, a.shape, *a.data + *b.data,
                 [pa, pb, n](const ArrayXd& g, Gradients& grads) {
                   if (pa >= 0) grads.accumulate(pa, n) += g;
                   if (pb >= 0) grads.accumulate(pb, n) += g;
                 });
}

Tensor sub(const Tensor& a0, const Tensor& b0) {
  Tensor a = a0, b = b0;
  align(a, b);
  Tape* tape = common_tape({&a, &b});
  const int pa = a.node, pb = b.node;
  const Eigen::Index n = a.size();
  return make_op(Op::sub, tape, {pa, pb}, a.shape, *a.data - *b.data,
                 [pa, pb, n](const ArrayXd& g, Gradients& grads) {
                   if (pa >= 0) grads.accumulate(pa, n) += g;
                   if (pb >= 0) grads.accumulate(pb, n) -= g;
                 });
}

Tensor mul(const Tensor& a0, const Tensor& b0) {
  Tensor a = a0, b = b0;
  align(a, b);
  Tape* tape = common_tape({&a, &b});
  const int pa = a.node, pb = b.node;
  const Eigen::Index n = a.size();
  auto da = a.data, db = b.data;
  return make_op(Op::mul, tape, {pa, pb}, a.shape, *a.data * *b.data,
                 [pa, pb, n, da, db](const ArrayXd& g, Gradients& grads) {
                   if (pa >= 0) grads.accumulate(pa, n) += g * *db;
                   if (pb >= 0) grads.accumulate(pb, n) += g * *da;
                 });
}

Tensor div(const Tensor& a0, const Tensor& b0) {
  Tensor a = a0, b = b0;
  align(a, b);
  if ((*b.data == 0.0).any()) throw InvalidArgument("div: division by zero");
  Tape* tape = common_tape({&a, &b});
  const int pa = a.node, pb = b.node;
  const Eigen::Index n = a.size();
  auto da = a.data, db = b.data;
  return make_op(Op::div, tape, {pa, pb}, a.shape, *a.data / *b.data,
                 [pa, pb, n, da, db](const ArrayXd& g, Gradients& grads) {
                   if (pa >= 0) grads.accumulate(pa, n) += g / *db;
                   if (pb >= 0) grads.accumulate(pb, n) -= g * *da / (*db * *db);
                 });
}

Tensor add_scalar(const Tensor& a, double c) {
  const int pa = a.node;
  const Eigen::Index n = a.size();
  return make_op(Op::add, common_tape({&a}), {pa}, a.shape, *a.data + c,
                 [pa, n](const ArrayXd& g, Gradients& grads) {
                   if (pa >= 0) grads.accumulate(pa, n) += g;
                 });
}

Tensor mul_scalar(const Tensor& a, double c) {
  const int pa = a.node;
  const Eigen::Index n = a.size();
  return make_op(Op::mul, common_tape({&a}), {pa}, a.shape, *a.data * c,
                 [pa, n, c](const ArrayXd& g, Gradients& grads) {
                   if (pa >= 0) grads.accumulate(pa, n) += g * c;
                 });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
    throw InvalidArgument("matmul: incompatible shapes");
  const Eigen::Index n = a.shape[0], k = a.shape[1], m = b.shape[1];
  Tape* tape = common_tape({&a, &b});
  const int pa = a.node, pb = b.node;
  auto da = a.data, db = b.data;

  ArrayXd value(n * m);
  Eigen::Map<RowMat>(value.data(), n, m) = Eigen::Map<const RowMat>(da->data(), n, k) *
                                           Eigen::Map<const RowMat>(db->data(), k, m);
  return make_op(Op::matmul, tape, {pa, pb}, {n, m}, std::move(value),
                 [pa, pb, n, k, m, da, db](const ArrayXd& g, Gradients& grads) {
                   Eigen::Map<const RowMat> gm(g.data(), n, m);
                   if (pa >= 0) {
                     ArrayXd& acc = grads.accumulate(pa, n * k);
                     Eigen::Map<RowMat>(acc.data(), n, k) +=
                         gm * Eigen::Map<const RowMat>(db->data(), k, m).transpose();
                   }
                   if (pb >= 0) {
                     ArrayXd& acc = grads.accumulate(pb, k * m);
                     Eigen::Map<RowMat>(acc.data(), k, m) +=
                         Eigen::Map<const RowMat>(da->data(), n, k).transpose() * gm;
                   }
                 });
}

Tensor sum(const Tensor& x) {
  const int px = x.node;
  const Eigen::Index n = x.size();
  ArrayXd v(1);
  v[0] = x.data->sum();
  return make_op(Op::sum, common_tape({&x}), {px}, {}, std::move(v),
                 [px, n](const ArrayXd& g, Gradients& grads) {
                   if (px >= 0) grads.accumulate(px, n) += g[0];
                 });
}

Tensor mean(const Tensor& x) {
  const int px = x.node;
  const Eigen::Index n = x.size();
  ArrayXd v(1);
  v[0] = x.data->mean();
  return make_op(Op::mean, common_tape({&x}), {px}, {}, std::move(v),
                 [px, n](const ArrayXd& g, Gradients& grads) {
                   if (px >= 0) grads.accumulate(px, n) += g[0] / double(n);
                 });
}

Tensor sum(const Tensor& x, int axis) {
  if (x.rank() != 2) throw InvalidArgument("sum(axis): tensor must be rank 2");
  const Eigen::Index n = x.shape[0], d = x.shape[1];
  const int px = x.node;
  Eigen::Map<const RowArr2> xm(x.data->data(), n, d);
  if (axis == 0) {
    ArrayXd v = xm.colwise().sum().transpose();
    return make_op(Op::sum, common_tape({&x}), {px}, {d}, std::move(v),
                   [px, n, d](const ArrayXd& g, Gradients& grads) {
                     if (px < 0) return;
                     ArrayXd& acc = grads.accumulate(px, n * d);
                     Eigen::Map<RowArr2>(acc.data(), n, d).rowwise() +=
                         Eigen::Map<const Eigen::Array<double, 1, Eigen::Dynamic>>(g.data(), d);
                   });
  }
  if (axis == 1) {
    ArrayXd v = xm.rowwise().sum();
    return make_op(Op::sum, common_tape({&x}), {px}, {n}, std::move(v),
                   [px, n, d](const ArrayXd& g, Gradients& grads) {
                     if (px < 0) return;
                     ArrayXd& acc = grads.accumulate(px, n * d);
                     Eigen::Map<RowArr2>(acc.data(), n, d).colwise() += g;
                   });
  }
  throw InvalidArgument("sum(axis): axis must be 0 or 1");
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw InvalidArgument("concat: no inputs");
  const int rank = parts[0].rank();
  Tape* tape = nullptr;
  for (const auto& p : parts)
    if (p.taped()) {
      if (tape && tape != p.tape) throw InvalidArgument("operands recorded on different tapes");
      tape = p.tape;
    }

  struct Piece {
    int node;
    Eigen::Index rows, cols;
  };
  auto pieces = std::make_shared<std::vector<Piece>>();

  if (rank == 1 && axis == 0) {
    Eigen::Index total = 0;
    for (const auto& p : parts) {
      if (p.rank() != 1) throw InvalidArgument("concat: mixed ranks");
      pieces->push_back({p.node, p.shape[0], 1});
      total += p.shape[0];
    }
    ArrayXd v(total);
    Eigen::Index off = 0;
    for (const auto& p : parts) {
      v.segment(off, p.shape[0]) = *p.data;
      off += p.shape[0];
    }
    std::vector<int> parents;
    for (const auto& p : parts) parents.push_back(p.node);
    return make_op(Op::concat, tape, std::move(parents), {total}, std::move(v),
                   [pieces](const ArrayXd& g, Gradients& grads) {
                     Eigen::Index off = 0;
                     for (const auto& pc : *pieces) {
                       if (pc.node >= 0) grads.accumulate(pc.node, pc.rows) += g.segment(off, pc.rows);
                       off += pc.rows;
                     }
                   });
  }

  if (rank != 2) throw InvalidArgument("concat: unsupported rank/axis");
  if (axis == 0) {
    const Eigen::Index d = parts[0].shape[1];
    Eigen::Index total = 0;
    for (const auto& p : parts) {
      if (p.rank() != 2 || p.shape[1] != d) throw InvalidArgument("concat: column mismatch");
      pieces->push_back({p.node, p.shape[0], d});
      total += p.shape[0];
    }
    ArrayXd v(total * d);
    Eigen::Index off = 0;
    for (const auto& p : parts) {
      v.segment(off * d, p.shape[0] * d) = *p.data;
      off += p.shape[0];
    }
    std::vector<int> parents;
    for (const auto& p : parts) parents.push_back(p.node);
    return make_op(Op::concat, tape, std::move(parents), {total, d}, std::move(v),
                   [pieces, d](const ArrayXd& g, Gradients& grads) {
                     Eigen::Index off = 0;
                     for (const auto& pc : *pieces) {
                       if (pc.node >= 0)
                         grads.accumulate(pc.node, pc.rows * d) += g.segment(off * d, pc.rows * d);
                       off += pc.rows;
                     }
                   });
  }
  if (axis == 1) {
    const Eigen::Index n = parts[0].shape[0];
    Eigen::Index total = 0;
    for (const auto& p : parts) {
      if (p.rank() != 2 || p.shape[0] != n) throw InvalidArgument("concat: row mismatch");
      pieces->push_back({p.node, n, p.shape[1]});
      total += p.shape[1];
    }
    ArrayXd v(n * total);
    Eigen::Map<RowArr2> vm(v.data(), n, total);
    Eigen::Index off = 0;
    for (const auto& p : parts) {
      vm.middleCols(off, p.shape[1]) = Eigen::Map<const RowArr2>(p.data->data(), n, p.shape[1]);
      off += p.shape[1];
    }
    std::vector<int> parents;
    for (const auto& p : parts) parents.push_back(p.node);
    return make_op(Op::concat, tape, std::move(parents), {n, total}, std::move(v),
                   [pieces, n, total](const ArrayXd& g, Gradients& grads) {
                     Eigen::Map<const RowArr2> gm(g.data(), n, total);
                     Eigen::Index off = 0;
                     for (const auto& pc : *pieces) {
                       if (pc.node >= 0) {
                         ArrayXd& acc = grads.accumulate(pc.node, n * pc.cols);
                         Eigen::Map<RowArr2>(acc.data(), n, pc.cols) += gm.middleCols(off, pc.cols);
                       }
                       off += pc.cols;
                     }
                   });
  }
  throw InvalidArgument("concat: axis must be 0 or 1");
}

Tensor slice(const Tensor& x, int axis, Eigen::Index start, Eigen::Index len) {
  const int px = x.node;
  if (len < 0 || start < 0) throw InvalidArgument("slice: negative bounds");
  if (x.rank() == 1) {
    if (axis != 0 || start + len > x.shape[0]) throw InvalidArgument("slice: out of range");
    const Eigen::Index n = x.shape[0];
    ArrayXd v = x.data->segment(start, len);
    return make_op(Op::slice, common_tape({&x}), {px}, {len}, std::move(v),
                   [px, n, start, len](const ArrayXd& g, Gradients& grads) {
                     if (px >= 0) grads.accumulate(px, n).segment(start, len) += g;
                   });
  }
  if (x.rank() != 2) throw InvalidArgument("slice: unsupported rank");
  const Eigen::Index n = x.shape[0], d = x.shape[1];
  if (axis == 0) {
    if (start + len > n) throw InvalidArgument("slice: out of range");
    ArrayXd v = x.data->segment(start * d, len * d);
    return make_op(Op::slice, common_tape({&x}), {px}, {len, d}, std::move(v),
                   [px, n, d, start, len](const ArrayXd& g, Gradients& grads) {
                     if (px >= 0) grads.accumulate(px, n * d).segment(start * d, len * d) += g;
                   });
  }
  if (axis == 1) {
    if (start + len > d) throw InvalidArgument("slice: out of range");
    ArrayXd v(n * len);
    Eigen::Map<RowArr2>(v.data(), n, len) =
        Eigen::Map<const RowArr2>(x.data->data(), n, d).middleCols(start, len);
    return make_op(Op::slice, common_tape({&x}), {px}, {n, len}, std::move(v),
                   [px, n, d, start, len](const ArrayXd& g, Gradients& grads) {
                     if (px < 0) return;
                     ArrayXd& acc = grads.accumulate(px, n * d);
                     Eigen::Map<RowArr2>(acc.data(), n, d).middleCols(start, len) +=
                         Eigen::Map<const RowArr2>(g.data(), n, len);
                   });
  }
  throw InvalidArgument("slice: axis must be 0 or 1");
}

Tensor reshape(const Tensor& x, std::vector<Eigen::Index> new_shape) {
  Eigen::Index n = 1;
  for (auto d : new_shape) n *= d;
  if (n != x.size()) throw InvalidArgument("reshape: element count mismatch");
  const int px = x.node;
  return make_op(Op::reshape, common_tape({&x}), {px}, std::move(new_shape), *x.data,
                 [px, n](const ArrayXd& g, Gradients& grads) {
                   if (px >= 0) grads.accumulate(px, n) += g;
                 });
}

Tensor sin(const Tensor& x) {
  auto dx = x.data;
  return unary(Op::sin, x, dx->sin(), [dx](const ArrayXd& g) { return (g * dx->cos()).eval(); });
}

Tensor exp(const Tensor& x) {
  ArrayXd y = x.data->exp();
  auto ys = std::make_shared<ArrayXd>(y);
  return unary(Op::exp, x, std::move(y), [ys](const ArrayXd& g) { return (g * *ys).eval(); });
}

Tensor log(const Tensor& x) {
  if ((*x.data <= 0.0).any()) throw InvalidArgument("log: non-positive input");
  auto dx = x.data;
  return unary(Op::log, x, dx->log(), [dx](const ArrayXd& g) { return (g / *dx).eval(); });
}

Tensor pow(const Tensor& x, double exponent) {
  if ((*x.data < 0.0).any()) throw InvalidArgument("pow: negative base");
  auto dx = x.data;
  return unary(Op::pow, x, dx->pow(exponent), [dx, exponent](const ArrayXd& g) {
    return (g * exponent * dx->pow(exponent - 1.0)).eval();
  });
}

Tensor abs(const Tensor& x) {
  auto dx = x.data;
  return unary(Op::abs, x, dx->abs(),
               [dx](const ArrayXd& g) { return (g * dx->sign()).eval(); });
}

Tensor sigmoid(const Tensor& x) {
  ArrayXd y = stable_sigmoid(*x.data);
  auto ys = std::make_shared<ArrayXd>(y);
  return unary(Op::sigmoid, x, std::move(y),
               [ys](const ArrayXd& g) { return (g * *ys * (1.0 - *ys)).eval(); });
}

Tensor tanh(const Tensor& x) {
  ArrayXd y = x.data->tanh();
  auto ys = std::make_shared<ArrayXd>(y);
  return unary(Op::tanh, x, std::move(y),
               [ys](const ArrayXd& g) { return (g * (1.0 - *ys * *ys)).eval(); });
}

Tensor softmax(const Tensor& x) {
  if (x.rank() != 1 && x.rank() != 2) throw InvalidArgument("softmax: expects rank 1 or 2");
  const Eigen::Index n = x.rank() == 2 ? x.shape[0] : 1;
  const Eigen::Index d = x.rank() == 2 ? x.shape[1] : x.shape[0];
  ArrayXd y(n * d);
  Eigen::Map<const RowArr2> xm(x.data->data(), n, d);
  Eigen::Map<RowArr2> ym(y.data(), n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mx = xm.row(r).maxCoeff();
    ym.row(r) = (xm.row(r) - mx).exp();
    ym.row(r) /= ym.row(r).sum();
  }
  auto ys = std::make_shared<ArrayXd>(y);
  const int px = x.node;
  return make_op(Op::softmax, common_tape({&x}), {px}, x.shape, std::move(y),
                 [px, n, d, ys](const ArrayXd& g, Gradients& grads) {
                   if (px < 0) return;
                   ArrayXd& acc = grads.accumulate(px, n * d);
                   Eigen::Map<const RowArr2> gm(g.data(), n, d);
                   Eigen::Map<const RowArr2> sm(ys->data(), n, d);
                   Eigen::Map<RowArr2> am(acc.data(), n, d);
                   for (Eigen::Index r = 0; r < n; ++r) {
                     const double dot = (gm.row(r) * sm.row(r)).sum();
                     am.row(r) += (gm.row(r) - dot) * sm.row(r);
                   }
                 });
}

Tensor row_normalize(const Tensor& x) {
  if (x.rank() != 2) throw InvalidArgument("row_normalize: tensor must be rank 2");
  const Eigen::Index n = x.shape[0], d = x.shape[1];
  ArrayXd y(n * d);
  ArrayXd sums(n);
  Eigen::Map<const RowArr2> xm(x.data->data(), n, d);
  Eigen::Map<RowArr2> ym(y.data(), n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double s = xm.row(r).sum();
    sums[r] = s;
    if (s == 0.0) ym.row(r).setZero();
    else ym.row(r) = xm.row(r) / s;
  }
  auto ys = std::make_shared<ArrayXd>(y);
  auto ss = std::make_shared<ArrayXd>(std::move(sums));
  const int px = x.node;
  return make_op(Op::row_normalize, common_tape({&x}), {px}, x.shape, std::move(y),
                 [px, n, d, ys, ss](const ArrayXd& g, Gradients& grads) {
                   if (px < 0) return;
                   ArrayXd& acc = grads.accumulate(px, n * d);
                   Eigen::Map<const RowArr2> gm(g.data(), n, d);
                   Eigen::Map<const RowArr2> ym2(ys->data(), n, d);
                   Eigen::Map<RowArr2> am(acc.data(), n, d);
                   for (Eigen::Index r = 0; r < n; ++r) {
                     const double s = (*ss)[r];
                     if (s == 0.0) continue;
                     const double dot = (gm.row(r) * ym2.row(r)).sum();
                     am.row(r) += (gm.row(r) - dot) / s;
                   }
                 });
}

Tensor cumsum(const Tensor& x) {
  const int px = x.node;
  if (x.rank() == 1) {
    const Eigen::Index n = x.shape[0];
    ArrayXd v(n);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) v[i] = acc += (*x.data)[i];
    return make_op(Op::cumsum, common_tape({&x}), {px}, x.shape, std::move(v),
                   [px, n](const ArrayXd& g, Gradients& grads) {
                     if (px < 0) return;
                     ArrayXd& out = grads.accumulate(px, n);
                     double acc = 0.0;
                     for (Eigen::Index i = n - 1; i >= 0; --i) out[i] += acc += g[i];
                   });
  }
  if (x.rank() != 2) throw InvalidArgument("cumsum: unsupported rank");
  const Eigen::Index n = x.shape[0], d = x.shape[1];
  ArrayXd v(n * d);
  Eigen::Map<const RowArr2> xm(x.data->data(), n, d);
  Eigen::Map<RowArr2> vm(v.data(), n, d);
  vm.row(0) = xm.row(0);
  for (Eigen::Index r = 1; r < n; ++r) vm.row(r) = vm.row(r - 1) + xm.row(r);
  return make_op(Op::cumsum, common_tape({&x}), {px}, x.shape, std::move(v),
                 [px, n, d](const ArrayXd& g, Gradients& grads) {
                   if (px < 0) return;
                   ArrayXd& acc = grads.accumulate(px, n * d);
                   Eigen::Map<const RowArr2> gm(g.data(), n, d);
                   Eigen::Map<RowArr2> am(acc.data(), n, d);
                   Eigen::Array<double, 1, Eigen::Dynamic> run =
                       Eigen::Array<double, 1, Eigen::Dynamic>::Zero(d);
                   for (Eigen::Index r = n - 1; r >= 0; --r) {
                     run += gm.row(r);
                     am.row(r) += run;
                   }
                 });
}

Tensor phase_cumsum(const Tensor& x) {
  if (x.rank() != 1) throw InvalidArgument("phase_cumsum: expects a vector");
  const Eigen::Index n = x.shape[0];
  const int px = x.node;
  ArrayXd v(n);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    acc += (*x.data)[i];
    acc -= kTwoPi * std::floor(acc / kTwoPi);
    v[i] = acc;
  }
  return make_op(Op::phase_cumsum, common_tape({&x}), {px}, x.shape, std::move(v),
                 [px, n](const ArrayXd& g, Gradients& grads) {
                   if (px < 0) return;
                   ArrayXd& out = grads.accumulate(px, n);
                   double acc = 0.0;
                   for (Eigen::Index i = n - 1; i >= 0; --i) out[i] += acc += g[i];
                 });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() != 2) throw InvalidArgument("layer_norm: tensor must be rank 2");
  const Eigen::Index n = x.shape[0], d = x.shape[1];
  if (gain.rank() != 1 || gain.shape[0] != d || bias.rank() != 1 || bias.shape[0] != d)
    throw InvalidArgument("layer_norm: gain/bias width mismatch");

  ArrayXd xhat(n * d), inv_std(n), y(n * d);
  Eigen::Map<const RowArr2> xm(x.data->data(), n, d);
  Eigen::Map<RowArr2> hm(xhat.data(), n, d);
  Eigen::Map<RowArr2> ym(y.data(), n, d);
  Eigen::Map<const Eigen::Array<double, 1, Eigen::Dynamic>> gv(gain.data->data(), d);
  Eigen::Map<const Eigen::Array<double, 1, Eigen::Dynamic>> bv(bias.data->data(), d);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = xm.row(r).mean();
    const double var = (xm.row(r) - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    hm.row(r) = (xm.row(r) - mu) * is;
    ym.row(r) = hm.row(r) * gv + bv;
  }
  auto hs = std::make_shared<ArrayXd>(std::move(xhat));
  auto iss = std::make_shared<ArrayXd>(std::move(inv_std));
  auto gs = gain.data;
  Tape* tape = common_tape({&x, &gain, &bias});
  const int px = x.node, pg = gain.node, pb = bias.node;
  return make_op(Op::layer_norm, tape, {px, pg, pb}, x.shape, std::move(y),
                 [px, pg, pb, n, d, hs, iss, gs](const ArrayXd& g, Gradients& grads) {
                   Eigen::Map<const RowArr2> gm(g.data(), n, d);
                   Eigen::Map<const RowArr2> hm2(hs->data(), n, d);
                   Eigen::Map<const Eigen::Array<double, 1, Eigen::Dynamic>> gv(gs->data(), d);
                   if (pg >= 0) {
                     ArrayXd& acc = grads.accumulate(pg, d);
                     Eigen::Map<Eigen::Array<double, 1, Eigen::Dynamic>> av(acc.data(), d);
                     av += (gm * hm2).colwise().sum();
                   }
                   if (pb >= 0) {
                     ArrayXd& acc = grads.accumulate(pb, d);
                     Eigen::Map<Eigen::Array<double, 1, Eigen::Dynamic>> av(acc.data(), d);
                     av += gm.colwise().sum();
                   }
                   if (px >= 0) {
                     ArrayXd& acc = grads.accumulate(px, n * d);
                     Eigen::Map<RowArr2> am(acc.data(), n, d);
                     for (Eigen::Index r = 0; r < n; ++r) {
                       const auto dxhat = (gm.row(r) * gv).eval();
                       const double m1 = dxhat.mean();
                       const double m2 = (dxhat * hm2.row(r)).mean();
                       am.row(r) += (dxhat - m1 - hm2.row(r) * m2) * (*iss)[r];
                     }
                   }
                 });
}

Tensor outer(const Tensor& u, const Tensor& v) {
  if (u.rank() != 1 || v.rank() != 1) throw InvalidArgument("outer: expects two vectors");
  const Eigen::Index n = u.shape[0], k = v.shape[0];
  auto du = u.data, dv = v.data;
  ArrayXd y(n * k);
  Eigen::Map<RowMat>(y.data(), n, k) =
      Eigen::Map<const Eigen::VectorXd>(du->data(), n) *
      Eigen::Map<const Eigen::VectorXd>(dv->data(), k).transpose();
  Tape* tape = common_tape({&u, &v});
  const int pu = u.node, pv = v.node;
  return make_op(Op::outer, tape, {pu, pv}, {n, k}, std::move(y),
                 [pu, pv, n, k, du, dv](const ArrayXd& g, Gradients& grads) {
                   Eigen::Map<const RowMat> gm(g.data(), n, k);
                   if (pu >= 0) {
                     ArrayXd& acc = grads.accumulate(pu, n);
                     Eigen::Map<Eigen::VectorXd>(acc.data(), n) +=
                         gm * Eigen::Map<const Eigen::VectorXd>(dv->data(), k);
                   }
                   if (pv >= 0) {
                     ArrayXd& acc = grads.accumulate(pv, k);
                     Eigen::Map<Eigen::VectorXd>(acc.data(), k) +=
                         gm.transpose() * Eigen::Map<const Eigen::VectorXd>(du->data(), n);
                   }
                 });
}

Tensor upsample_linear(const Tensor& frames, int hop) {
  if (hop < 1) throw InvalidArgument("upsample_linear: hop must be >= 1");
  if (frames.size() == 0) throw InvalidArgument("upsample_linear: empty input");
  const bool is_vec = frames.rank() == 1;
  const Eigen::Index t_frames = frames.shape[0];
  const Eigen::Index d = is_vec ? 1 : frames.shape[1];
  const Eigen::Index n_out = t_frames * hop;

  ArrayXd v(n_out * d);
  Eigen::Map<const RowArr2> fm(frames.data->data(), t_frames, d);
  Eigen::Map<RowArr2> vm(v.data(), n_out, d);
  for (Eigen::Index i = 0; i < t_frames; ++i) {
    const Eigen::Index next = std::min(i + 1, t_frames - 1);
    for (int j = 0; j < hop; ++j) {
      const double w = double(j) / hop;
      vm.row(i * hop + j) = fm.row(i) * (1.0 - w) + fm.row(next) * w;
    }
  }
  const int pf = frames.node;
  std::vector<Eigen::Index> out_shape = is_vec ? std::vector<Eigen::Index>{n_out}
                                               : std::vector<Eigen::Index>{n_out, d};
  return make_op(Op::upsample_linear, common_tape({&frames}), {pf}, std::move(out_shape),
                 std::move(v), [pf, t_frames, d, hop](const ArrayXd& g, Gradients& grads) {
                   if (pf < 0) return;
                   ArrayXd& acc = grads.accumulate(pf, t_frames * d);
                   Eigen::Map<RowArr2> am(acc.data(), t_frames, d);
                   Eigen::Map<const RowArr2> gm(g.data(), t_frames * hop, d);
                   for (Eigen::Index i = 0; i < t_frames; ++i) {
                     const Eigen::Index next = std::min(i + 1, t_frames - 1);
                     for (int j = 0; j < hop; ++j) {
                       const double w = double(j) / hop;
                       am.row(i) += gm.row(i * hop + j) * (1.0 - w);
                       am.row(next) += gm.row(i * hop + j) * w;
                     }
                   }
                 });
}

Tensor stft_magnitude(const Tensor& x, int fft_size, int hop) {
  if (x.rank() != 1) throw InvalidArgument("stft_magnitude: expects a sample vector");
  if (fft_size < 2 || hop < 1) throw InvalidArgument("stft_magnitude: bad fft size or hop");
  const Eigen::Index n = x.shape[0];
  if (n < fft_size) throw InvalidArgument("stft_magnitude: input shorter than fft size");
  const Eigen::Index n_frames = 1 + (n - fft_size) / hop;
  const Eigen::Index n_bins = fft_size / 2 + 1;

  auto window = std::make_shared<ArrayXd>(dsp::hann_periodic(fft_size));
  auto spectra = std::make_shared<std::vector<Eigen::ArrayXcd>>();
  spectra->reserve(static_cast<std::size_t>(n_frames));

  ArrayXd mags(n_frames * n_bins);
  Eigen::Map<RowArr2> mm(mags.data(), n_frames, n_bins);
  for (Eigen::Index t = 0; t < n_frames; ++t) {
    ArrayXd seg = x.data->segment(t * hop, fft_size) * *window;
    Eigen::ArrayXcd spec = dsp::rfft(seg);
    mm.row(t) = spec.abs().transpose();
    spectra->push_back(std::move(spec));
  }

  const int px = x.node;
  return make_op(Op::stft_mag, common_tape({&x}), {px}, {n_frames, n_bins}, std::move(mags),
                 [px, n, fft_size, hop, n_frames, n_bins, window, spectra](const ArrayXd& g,
                                                                           Gradients& grads) {
                   if (px < 0) return;
                   ArrayXd& acc = grads.accumulate(px, n);
                   Eigen::Map<const RowArr2> gm(g.data(), n_frames, n_bins);
                   for (Eigen::Index t = 0; t < n_frames; ++t) {
                     const Eigen::ArrayXcd& spec = (*spectra)[static_cast<std::size_t>(t)];
                     // d|z|/dz pullback, then adjoint of the one-sided real FFT.
                     Eigen::ArrayXcd dz(n_bins);
                     for (Eigen::Index k = 0; k < n_bins; ++k) {
                       const double m = std::abs(spec[k]);
                       dz[k] = m > 0 ? gm(t, k) * spec[k] / m : std::complex<double>(0.0, 0.0);
                     }
                     // Adjoint of rfft = N * irfft with interior bins halved.
                     Eigen::ArrayXcd half = dz;
                     for (Eigen::Index k = 1; k + 1 < n_bins; ++k) half[k] *= 0.5;
                     if (fft_size % 2 != 0) half[n_bins - 1] *= 0.5;
                     ArrayXd du = dsp::irfft(half, fft_size) * double(fft_size);
                     acc.segment(t * hop, fft_size) += du * *window;
                   }
                 });
}

}  // namespace hns::ad
