#include "g2l/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "g2l/errors.hpp"
#include "g2l/kernels.hpp"

namespace g2l {

namespace {

bool wants(const std::vector<bool>& needs, int64_t id) {
  return id >= 0 && needs[static_cast<size_t>(id)];
}

}  // namespace

void Tape::require_on_tape(const Tensor& t, const char* op) const {
  if (t.node < 0 || t.node >= static_cast<int64_t>(nodes_.size()))
    throw contract_error(std::string(op) + ": operand is not on this tape");
}

void Tape::check_finite(const Tensor& t, const char* op) const {
  if (!t.all_finite())
    throw numeric_error(std::string(op) + ": produced a non-finite value");
}

int64_t Tape::record(Tensor& out, std::function<void(Tape&, const Node&)> back,
                     uint64_t op_flops) {
  Node n;
  n.value = out;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  const int64_t id = static_cast<int64_t>(nodes_.size()) - 1;
  out.node = id;
  nodes_.back().value.node = id;
  flops_ += op_flops;
  elements_ += static_cast<uint64_t>(out.numel());
  return id;
}

std::vector<double>& Tape::grad_buf(int64_t node) {
  Node& n = nodes_[static_cast<size_t>(node)];
  if (n.grad.empty())
    n.grad.assign(static_cast<size_t>(n.value.numel()), 0.0);
  return n.grad;
}

Tensor Tape::constant(const Tensor& value) {
  Tensor out = value;
  check_finite(out, "constant");
  record(out, nullptr, 0);
  return out;
}

Tensor Tape::param(const Tensor& value, const std::string& name) {
  Tensor out = value;
  check_finite(out, "param");
  const int64_t id = record(out, nullptr, 0);
  nodes_.back().learnable = true;
  nodes_.back().grad_kept = true;
  if (named_.count(name))
    throw contract_error("param: duplicate name " + name);
  named_[name] = id;
  param_order_.push_back(name);
  return out;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  require_on_tape(a, "matmul");
  require_on_tape(b, "matmul");
  if (a.cols != b.rows)
    throw shape_error("matmul: " + shape_str(a) + " x " + shape_str(b));
  Tensor out(a.rows, b.cols);
  kernels::matmul_nn(a.ptr(), b.ptr(), out.ptr(), a.rows, a.cols, b.cols, false);
  check_finite(out, "matmul");
  const int64_t ia = a.node, ib = b.node;
  record(out,
         [ia, ib, a, b](Tape& t, const Node& self) {
           const double* go = self.grad.data();
           if (t.nodes_[ia].needs_grad_cached)
             kernels::matmul_nt(go, b.ptr(), t.grad_buf(ia).data(), a.rows, b.cols,
                                a.cols, true);
           if (t.nodes_[ib].needs_grad_cached)
             kernels::matmul_tn(a.ptr(), go, t.grad_buf(ib).data(), a.cols, a.rows,
                                b.cols, true);
         },
         2ull * a.rows * a.cols * b.cols);
  return out;
}

Tensor Tape::matmul_tn(const Tensor& a, const Tensor& b) {
  require_on_tape(a, "matmul_tn");
  require_on_tape(b, "matmul_tn");
  if (a.rows != b.rows)
    throw shape_error("matmul_tn: " + shape_str(a) + "^T x " + shape_str(b));
  Tensor out(a.cols, b.cols);
  kernels::matmul_tn(a.ptr(), b.ptr(), out.ptr(), a.cols, a.rows, b.cols, false);
  check_finite(out, "matmul_tn");
  const int64_t ia = a.node, ib = b.node;
  record(out,
         [ia, ib, a, b](Tape& t, const Node& self) {
           const double* go = self.grad.data();
           if (t.nodes_[ia].needs_grad_cached)
             kernels::matmul_nt(b.ptr(), go, t.grad_buf(ia).data(), a.rows, b.cols,
                                a.cols, true);
           if (t.nodes_[ib].needs_grad_cached)
             kernels::matmul_nn(a.ptr(), go, t.grad_buf(ib).data(), a.rows, a.cols,
                                b.cols, true);
         },
         2ull * a.cols * a.rows * b.cols);
  return out;
}

Tensor Tape::matmul_nt(const Tensor& a, const Tensor& b) {
  require_on_tape(a, "matmul_nt");
  require_on_tape(b, "matmul_nt");
  if (a.cols != b.cols)
    throw shape_error("matmul_nt: " + shape_str(a) + " x " + shape_str(b) + "^T");
  Tensor out(a.rows, b.rows);
  kernels::matmul_nt(a.ptr(), b.ptr(), out.ptr(), a.rows, a.cols, b.rows, false);
  check_finite(out, "matmul_nt");
  const int64_t ia = a.node, ib = b.node;
  record(out,
         [ia, ib, a, b](Tape& t, const Node& self) {
           const double* go = self.grad.data();
           if (t.nodes_[ia].needs_grad_cached)
             kernels::matmul_nn(go, b.ptr(), t.grad_buf(ia).data(), a.rows, b.rows,
                                a.cols, true);
           if (t.nodes_[ib].needs_grad_cached)
             kernels::matmul_tn(go, a.ptr(), t.grad_buf(ib).data(), b.rows, a.rows,
                                a.cols, true);
         },
         2ull * a.rows * a.cols * b.rows);
  return out;
}

Tensor Tape::spmm(const SparseCSR& s, const Tensor& d) {
  require_on_tape(d, "spmm");
  if (s.cols() != d.rows)
    throw shape_error("spmm: sparse " + shape_str(s.rows(), s.cols()) + " x " +
                      shape_str(d));
  Tensor out(s.rows(), d.cols);
  s.multiply_into(d, out, false);
  check_finite(out, "spmm");
  const int64_t idn = d.node;
  SparseCSR sp = s;
  record(out,
         [idn, sp, d](Tape& t, const Node& self) {
           if (!t.nodes_[idn].needs_grad_cached) return;
           Tensor go(self.value.rows, self.value.cols);
           std::memcpy(go.ptr(), self.grad.data(), sizeof(double) * go.numel());
           std::vector<double>& gd = t.grad_buf(idn);
           Tensor gd_view(d.rows, d.cols);
           sp.transpose().multiply_into(go, gd_view, false);
           for (int64_t i = 0; i < d.numel(); ++i) gd[i] += (*gd_view.data)[i];
         },
         2ull * s.nnz() * d.cols);
  return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  require_on_tape(a, "add");
  require_on_tape(b, "add");
  if (!a.same_shape(b))
    throw shape_error("add: " + shape_str(a) + " vs " + shape_str(b));
  Tensor out(a.rows, a.cols);
  for (int64_t i = 0; i < out.numel(); ++i)
    (*out.data)[i] = (*a.data)[i] + (*b.data)[i];
  check_finite(out, "add");
  const int64_t ia = a.node, ib = b.node;
  record(out,
         [ia, ib](Tape& t, const Node& self) {
           const auto& go = self.grad;
           if (t.nodes_[ia].needs_grad_cached) {
             auto& ga = t.grad_buf(ia);
             for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
           }
           if (t.nodes_[ib].needs_grad_cached) {
             auto& gb = t.grad_buf(ib);
             for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
           }
         },
         static_cast<uint64_t>(out.numel()));
  return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  require_on_tape(a, "sub");
  require_on_tape(b, "sub");
  if (!a.same_shape(b))
    throw shape_error("sub: " + shape_str(a) + " vs " + shape_str(b));
  Tensor out(a.rows, a.cols);
  for (int64_t i = 0; i < out.numel(); ++i)
    (*out.data)[i] = (*a.data)[i] - (*b.data)[i];
  check_finite(out, "sub");
  const int64_t ia = a.node, ib = b.node;
  record(out,
         [ia, ib](Tape& t, const Node& self) {
           const auto& go = self.grad;
           if (t.nodes_[ia].needs_grad_cached) {
             auto& ga = t.grad_buf(ia);
             for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
           }
           if (t.nodes_[ib].needs_grad_cached) {
             auto& gb = t.grad_buf(ib);
             for (size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
           }
         },
         static_cast<uint64_t>(out.numel()));
  return out;
}

Tensor Tape::scale(const Tensor& a, double c) {
  require_on_tape(a, "scale");
  Tensor out(a.rows, a.cols);
  for (int64_t i = 0; i < out.numel(); ++i) (*out.data)[i] = (*a.data)[i] * c;
  check_finite(out, "scale");
  const int64_t ia = a.node;
  record(out,
         [ia, c](Tape& t, const Node& self) {
           if (!t.nodes_[ia].needs_grad_cached) return;
           auto& ga = t.grad_buf(ia);
           for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * c;
         },
         static_cast<uint64_t>(out.numel()));
  return out;
}

Tensor Tape::add_scalar(const Tensor& a, double c) {
  require_on_tape(a, "add_scalar");
  Tensor out(a.rows, a.cols);
  for (int64_t i = 0; i < out.numel(); ++i) (*out.data)[i] = (*a.data)[i] + c;
  check_finite(out, "add_scalar");
  const int64_t ia = a.node;
  record(out,
         [ia](Tape& t, const Node& self) {
           if (!t.nodes_[ia].needs_grad_cached) return;
           auto& ga = t.grad_buf(ia);
           for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
         },
         static_cast<uint64_t>(out.numel()));
  return out;
}

Tensor Tape::add_bias_row(const Tensor& a, const Tensor& bias) {
  require_on_tape(a, "add_bias_row");
  require_on_tape(bias, "add_bias_row");
  if (bias.rows != 1 || bias.cols != a.cols)
    throw shape_error("add_bias_row: " + shape_str(a) + " + " + shape_str(bias));
  Tensor out(a.rows, a.cols);
  for (int64_t i = 0; i < a.rows; ++i)
    for (int64_t j = 0; j < a.cols; ++j)
      out.at(i, j) = a.at(i, j) + bias.at(0, j);
  check_finite(out, "add_bias_row");
  const int64_t ia = a.node, ib = bias.node;
  record(out,
         [ia, ib](Tape& t, const Node& self) {
           const Tensor& v = self.value;
           if (t.nodes_[ia].needs_grad_cached) {
             auto& ga = t.grad_buf(ia);
             for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
           }
           if (t.nodes_[ib].needs_grad_cached) {
             auto& gb = t.grad_buf(ib);
             for (int64_t i = 0; i < v.rows; ++i)
               for (int64_t j = 0; j < v.cols; ++j)
                 gb[j] += self.grad[static_cast<size_t>(i * v.cols + j)];
           }
         },
         static_cast<uint64_t>(out.numel()));
  return out;
}

Tensor Tape::scale_cols(const Tensor& a, const Tensor& s) {
  require_on_tape(a, "scale_cols");
  require_on_tape(s, "scale_cols");
  if (s.rows != 1 || s.cols != a.cols)
    throw shape_error("scale_cols: " + shape_str(a) + " * " + shape_str(s));
  Tensor out(a.rows, a.cols);
  for (int64_t i = 0; i < a.rows; ++i)
    for (int64_t j = 0; j < a.cols; ++j)
      out.at(i, j) = a.at(i, j) * s.at(0, j);
  check_finite(out, "scale_cols");
  const int64_t ia = a.node, is = s.node;
  record(out,
         [ia, is, a, s](Tape& t, const Node& self) {
           const Tensor& v = self.value;
           if (t.nodes_[ia].needs_grad_cached) {
             auto& ga = t.grad_buf(ia);
             for (int64_t i = 0; i < v.rows; ++i)
               for (int64_t j = 0; j < v.cols; ++j)
                 ga[static_cast<size_t>(i * v.cols + j)] +=
                     self.grad[static_cast<size_t>(i * v.cols + j)] * s.at(0, j);
           }
           if (t.nodes_[is].needs_grad_cached) {
             auto& gs = t.grad_buf(is);
             for (int64_t i = 0; i < v.rows; ++i)
               for (int64_t j = 0; j < v.cols; ++j)
                 gs[j] += self.grad[static_cast<size_t>(i * v.cols + j)] * a.at(i, j);
           }
         },
         static_cast<uint64_t>(out.numel()));
  return out;
}

Tensor Tape::hadamard(const Tensor& a, const Tensor& b) {
  require_on_tape(a, "hadamard");
  require_on_tape(b, "hadamard");
  if (!a.same_shape(b))
    throw shape_error("hadamard: " + shape_str(a) + " vs " + shape_str(b));
  Tensor out(a.rows, a.cols);
  for (int64_t i = 0; i < out.numel(); ++i)
    (*out.data)[i] = (*a.data)[i] * (*b.data)[i];
  check_finite(out, "hadamard");
  const int64_t ia = a.node, ib = b.node;
  record(out,
         [ia, ib, a, b](Tape& t, const Node& self) {
           if (t.nodes_[ia].needs_grad_cached) {
             auto& ga = t.grad_buf(ia);
             for (size_t i = 0; i < self.grad.size(); ++i)
               ga[i] += self.grad[i] * (*b.data)[i];
           }
           if (t.nodes_[ib].needs_grad_cached) {
             auto& gb = t.grad_buf(ib);
             for (size_t i = 0; i < self.grad.size(); ++i)
               gb[i] += self.grad[i] * (*a.data)[i];
           }
         },
         static_cast<uint64_t>(out.numel()));
  return out;
}

Tensor Tape::hadamard_broadcast(const Tensor& h, const Tensor& g) {
  require_on_tape(h, "hadamard_broadcast");
  require_on_tape(g, "hadamard_broadcast");
  if (g.cols != 1 || g.rows != h.rows)
    throw shape_error("hadamard_broadcast: " + shape_str(h) + " with gate " +
                      shape_str(g) + " (gate must be N x 1)");
  Tensor out(h.rows, h.cols);
  for (int64_t i = 0; i < h.rows; ++i) {
    const double gi = g.at(i, 0);
    for (int64_t j = 0; j < h.cols; ++j) out.at(i, j) = h.at(i, j) * gi;
  }
  check_finite(out, "hadamard_broadcast");
  const int64_t ih = h.node, ig = g.node;
  record(out,
         [ih, ig, h, g](Tape& t, const Node& self) {
           const Tensor& v = self.value;
           if (t.nodes_[ih].needs_grad_cached) {
             auto& gh = t.grad_buf(ih);
             for (int64_t i = 0; i < v.rows; ++i) {
               const double gi = g.at(i, 0);
               for (int64_t j = 0; j < v.cols; ++j)
                 gh[static_cast<size_t>(i * v.cols + j)] +=
                     self.grad[static_cast<size_t>(i * v.cols + j)] * gi;
             }
           }
           if (t.nodes_[ig].needs_grad_cached) {
             auto& gg = t.grad_buf(ig);
             for (int64_t i = 0; i < v.rows; ++i) {
               double acc = 0.0;
               for (int64_t j = 0; j < v.cols; ++j)
                 acc += self.grad[static_cast<size_t>(i * v.cols + j)] * h.at(i, j);
               gg[static_cast<size_t>(i)] += acc;
             }
           }
         },
         static_cast<uint64_t>(out.numel()));
  return out;
}

Tensor Tape::div(const Tensor& a, const Tensor& b) {
  require_on_tape(a, "div");
  require_on_tape(b, "div");
  if (!a.same_shape(b))
    throw shape_error("div: " + shape_str(a) + " vs " + shape_str(b));
  Tensor out(a.rows, a.cols);
  for (int64_t i = 0; i < out.numel(); ++i)
    (*out.data)[i] = (*a.data)[i] / (*b.data)[i];
  check_finite(out, "div");
  const int64_t ia = a.node, ib = b.node;
  record(out,
         [ia, ib, a, b](Tape& t, const Node& self) {
           if (t.nodes_[ia].needs_grad_cached) {
             auto& ga = t.grad_buf(ia);
             for (size_t i = 0; i < self.grad.size(); ++i)
               ga[i] += self.grad[i] / (*b.data)[i];
           }
           if (t.nodes_[ib].needs_grad_cached) {
             auto& gb = t.grad_buf(ib);
             for (size_t i = 0; i < self.grad.size(); ++i)
               gb[i] -= self.grad[i] * (*self.value.data)[i] / (*b.data)[i];
           }
         },
         static_cast<uint64_t>(out.numel()));
  return out;
}

Tensor Tape::reciprocal(const Tensor& a) {
  require_on_tape(a, "reciprocal");
  Tensor out(a.rows, a.cols);
  for (int64_t i = 0; i < out.numel(); ++i) (*out.data)[i] = 1.0 / (*a.data)[i];
  check_finite(out, "reciprocal");
  const int64_t ia = a.node;
  record(out,
         [ia](Tape& t, const Node& self) {
           if (!t.nodes_[ia].needs_grad_cached) return;
           auto& ga = t.grad_buf(ia);
           const auto& v = *self.value.data;
           for (size_t i = 0; i < self.grad.size(); ++i)
             ga[i] -= self.grad[i] * v[i] * v[i];
         },
         static_cast<uint64_t>(out.numel()));
  return out;
}

Tensor Tape::div_scalar(const Tensor& a, const Tensor& s) {
  require_on_tape(a, "div_scalar");
  require_on_tape(s, "div_scalar");
  if (s.rows != 1 || s.cols != 1)
    throw shape_error("div_scalar: divisor must be 1x1, got " + shape_str(s));
  const double sv = s.at(0, 0);
  Tensor out(a.rows, a.cols);
  for (int64_t i = 0; i < out.numel(); ++i) (*out.data)[i] = (*a.data)[i] / sv;
  check_finite(out, "div_scalar");
  const int64_t ia = a.node, is = s.node;
  record(out,
         [ia, is, sv](Tape& t, const Node& self) {
           if (t.nodes_[ia].needs_grad_cached) {
             auto& ga = t.grad_buf(ia);
             for (size_t i = 0; i < self.grad.size(); ++i)
               ga[i] += self.grad[i] / sv;
           }
           if (t.nodes_[is].needs_grad_cached) {
             double acc = 0.0;
             const auto& v = *self.value.data;
             for (size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * v[i];
             t.grad_buf(is)[0] -= acc / sv;
           }
         },
         static_cast<uint64_t>(out.numel()));
  return out;
}

Tensor Tape::activation(const Tensor& a, Act kind, double leaky_slope) {
  require_on_tape(a, "activation");
  Tensor out(a.rows, a.cols);
  switch (kind) {
    case Act::sigmoid:
      for (int64_t i = 0; i < out.numel(); ++i)
        (*out.data)[i] = 1.0 / (1.0 + std::exp(-(*a.data)[i]));
      break;
    case Act::relu:
      for (int64_t i = 0; i < out.numel(); ++i)
        (*out.data)[i] = (*a.data)[i] > 0.0 ? (*a.data)[i] : 0.0;
      break;
    case Act::leaky_relu:
      for (int64_t i = 0; i < out.numel(); ++i)
        (*out.data)[i] = (*a.data)[i] >= 0.0 ? (*a.data)[i] : leaky_slope * (*a.data)[i];
      break;
  }
  check_finite(out, "activation");
  const int64_t ia = a.node;
  const uint64_t cost = static_cast<uint64_t>(out.numel()) *
                        (kind == Act::sigmoid ? 4 : 1);
  record(out,
         [ia, kind, leaky_slope, a](Tape& t, const Node& self) {
           if (!t.nodes_[ia].needs_grad_cached) return;
           auto& ga = t.grad_buf(ia);
           const auto& v = *self.value.data;
           const auto& x = *a.data;
           switch (kind) {
             case Act::sigmoid:
               for (size_t i = 0; i < self.grad.size(); ++i)
                 ga[i] += self.grad[i] * v[i] * (1.0 - v[i]);
               break;
             case Act::relu:
               // slope at exactly 0 is the positive-side slope
               for (size_t i = 0; i < self.grad.size(); ++i)
                 ga[i] += x[i] >= 0.0 ? self.grad[i] : 0.0;
               break;
             case Act::leaky_relu:
               for (size_t i = 0; i < self.grad.size(); ++i)
                 ga[i] += self.grad[i] * (x[i] >= 0.0 ? 1.0 : leaky_slope);
               break;
           }
         },
         cost);
  return out;
}

Tensor Tape::concat_cols(const Tensor& a, const Tensor& b) {
  require_on_tape(a, "concat_cols");
  require_on_tape(b, "concat_cols");
  if (a.rows != b.rows)
    throw shape_error("concat_cols: " + shape_str(a) + " || " + shape_str(b));
  Tensor out(a.rows, a.cols + b.cols);
  for (int64_t i = 0; i < a.rows; ++i) {
    std::memcpy(out.ptr() + i * out.cols, a.ptr() + i * a.cols,
                sizeof(double) * a.cols);
    std::memcpy(out.ptr() + i * out.cols + a.cols, b.ptr() + i * b.cols,
                sizeof(double) * b.cols);
  }
  const int64_t ia = a.node, ib = b.node;
  const int64_t ac = a.cols, bc = b.cols;
  record(out,
         [ia, ib, ac, bc](Tape& t, const Node& self) {
           const Tensor& v = self.value;
           if (t.nodes_[ia].needs_grad_cached) {
             auto& ga = t.grad_buf(ia);
             for (int64_t i = 0; i < v.rows; ++i)
               for (int64_t j = 0; j < ac; ++j)
                 ga[static_cast<size_t>(i * ac + j)] +=
                     self.grad[static_cast<size_t>(i * v.cols + j)];
           }
           if (t.nodes_[ib].needs_grad_cached) {
             auto& gb = t.grad_buf(ib);
             for (int64_t i = 0; i < v.rows; ++i)
               for (int64_t j = 0; j < bc; ++j)
                 gb[static_cast<size_t>(i * bc + j)] +=
                     self.grad[static_cast<size_t>(i * v.cols + ac + j)];
           }
         },
         0);
  return out;
}

Tensor Tape::slice_cols(const Tensor& a, int64_t c0, int64_t c1) {
  require_on_tape(a, "slice_cols");
  if (c0 < 0 || c1 > a.cols || c0 >= c1)
    throw shape_error("slice_cols: [" + std::to_string(c0) + "," +
                      std::to_string(c1) + ") of " + shape_str(a));
  Tensor out(a.rows, c1 - c0);
  for (int64_t i = 0; i < a.rows; ++i)
    std::memcpy(out.ptr() + i * out.cols, a.ptr() + i * a.cols + c0,
                sizeof(double) * out.cols);
  const int64_t ia = a.node, ac = a.cols;
  record(out,
         [ia, ac, c0](Tape& t, const Node& self) {
           if (!t.nodes_[ia].needs_grad_cached) return;
           auto& ga = t.grad_buf(ia);
           const Tensor& v = self.value;
           for (int64_t i = 0; i < v.rows; ++i)
             for (int64_t j = 0; j < v.cols; ++j)
               ga[static_cast<size_t>(i * ac + c0 + j)] +=
                   self.grad[static_cast<size_t>(i * v.cols + j)];
         },
         0);
  return out;
}

Tensor Tape::frobenius_norm(const Tensor& a) {
  require_on_tape(a, "frobenius_norm");
  if (a.numel() == 0) throw contract_error("frobenius_norm: empty tensor");
  double acc = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += (*a.data)[i] * (*a.data)[i];
  Tensor out(1, 1);
  out.at(0, 0) = std::sqrt(acc);
  check_finite(out, "frobenius_norm");
  const int64_t ia = a.node;
  record(out,
         [ia, a](Tape& t, const Node& self) {
           if (!t.nodes_[ia].needs_grad_cached) return;
           const double nrm = self.value.at(0, 0);
           if (nrm == 0.0) return;  // gradient of ||0|| left at zero
           const double g = self.grad[0] / nrm;
           auto& ga = t.grad_buf(ia);
           for (int64_t i = 0; i < a.numel(); ++i) ga[i] += g * (*a.data)[i];
         },
         2ull * a.numel() + 1);
  return out;
}

Tensor Tape::sum(const Tensor& a) {
  require_on_tape(a, "sum");
  double acc = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += (*a.data)[i];
  Tensor out(1, 1);
  out.at(0, 0) = acc;
  check_finite(out, "sum");
  const int64_t ia = a.node;
  record(out,
         [ia](Tape& t, const Node& self) {
           if (!t.nodes_[ia].needs_grad_cached) return;
           auto& ga = t.grad_buf(ia);
           for (auto& g : ga) g += self.grad[0];
         },
         static_cast<uint64_t>(a.numel()));
  return out;
}

Tensor Tape::row_sums(const Tensor& a) {
  require_on_tape(a, "row_sums");
  Tensor out(a.rows, 1);
  for (int64_t i = 0; i < a.rows; ++i) {
    double acc = 0.0;
    for (int64_t j = 0; j < a.cols; ++j) acc += a.at(i, j);
    out.at(i, 0) = acc;
  }
  check_finite(out, "row_sums");
  const int64_t ia = a.node, ac = a.cols;
  record(out,
         [ia, ac](Tape& t, const Node& self) {
           if (!t.nodes_[ia].needs_grad_cached) return;
           auto& ga = t.grad_buf(ia);
           for (int64_t i = 0; i < self.value.rows; ++i)
             for (int64_t j = 0; j < ac; ++j)
               ga[static_cast<size_t>(i * ac + j)] += self.grad[static_cast<size_t>(i)];
         },
         static_cast<uint64_t>(a.numel()));
  return out;
}

Tensor Tape::col_sums(const Tensor& a) {
  require_on_tape(a, "col_sums");
  Tensor out(1, a.cols);
  for (int64_t i = 0; i < a.rows; ++i)
    for (int64_t j = 0; j < a.cols; ++j) out.at(0, j) += a.at(i, j);
  check_finite(out, "col_sums");
  const int64_t ia = a.node;
  const int64_t ar = a.rows, ac = a.cols;
  record(out,
         [ia, ar, ac](Tape& t, const Node& self) {
           if (!t.nodes_[ia].needs_grad_cached) return;
           auto& ga = t.grad_buf(ia);
           for (int64_t i = 0; i < ar; ++i)
             for (int64_t j = 0; j < ac; ++j)
               ga[static_cast<size_t>(i * ac + j)] += self.grad[static_cast<size_t>(j)];
         },
         static_cast<uint64_t>(a.numel()));
  return out;
}

Tensor Tape::mean_rows(const Tensor& a) {
  require_on_tape(a, "mean_rows");
  if (a.rows == 0) throw contract_error("mean_rows: no rows");
  Tensor out(1, a.cols);
  for (int64_t i = 0; i < a.rows; ++i)
    for (int64_t j = 0; j < a.cols; ++j) out.at(0, j) += a.at(i, j);
  for (int64_t j = 0; j < a.cols; ++j) out.at(0, j) /= static_cast<double>(a.rows);
  check_finite(out, "mean_rows");
  const int64_t ia = a.node, ar = a.rows, ac = a.cols;
  record(out,
         [ia, ar, ac](Tape& t, const Node& self) {
           if (!t.nodes_[ia].needs_grad_cached) return;
           auto& ga = t.grad_buf(ia);
           const double inv = 1.0 / static_cast<double>(ar);
           for (int64_t i = 0; i < ar; ++i)
             for (int64_t j = 0; j < ac; ++j)
               ga[static_cast<size_t>(i * ac + j)] +=
                   self.grad[static_cast<size_t>(j)] * inv;
         },
         static_cast<uint64_t>(a.numel() + a.cols));
  return out;
}

Tensor Tape::gather_rows(const Tensor& a,
                         std::shared_ptr<const std::vector<int64_t>> idx) {
  require_on_tape(a, "gather_rows");
  for (int64_t i : *idx)
    if (i < 0 || i >= a.rows)
      throw contract_error("gather_rows: index " + std::to_string(i) +
                           " out of range for " + shape_str(a));
  Tensor out(static_cast<int64_t>(idx->size()), a.cols);
  for (size_t p = 0; p < idx->size(); ++p)
    std::memcpy(out.ptr() + p * a.cols, a.ptr() + (*idx)[p] * a.cols,
                sizeof(double) * a.cols);
  const int64_t ia = a.node, ac = a.cols;
  record(out,
         [ia, ac, idx](Tape& t, const Node& self) {
           if (!t.nodes_[ia].needs_grad_cached) return;
           auto& ga = t.grad_buf(ia);
           // scatter-add kept serial: rows may repeat
           for (size_t p = 0; p < idx->size(); ++p)
             for (int64_t j = 0; j < ac; ++j)
               ga[static_cast<size_t>((*idx)[p] * ac + j)] +=
                   self.grad[p * static_cast<size_t>(ac) + static_cast<size_t>(j)];
         },
         0);
  return out;
}

Tensor Tape::segment_sum(const Tensor& a,
                         std::shared_ptr<const std::vector<int64_t>> offsets) {
  require_on_tape(a, "segment_sum");
  const int64_t n_seg = static_cast<int64_t>(offsets->size()) - 1;
  if (n_seg < 0 || offsets->front() != 0 || offsets->back() != a.rows)
    throw contract_error("segment_sum: offsets do not cover rows of " + shape_str(a));
  for (int64_t i = 0; i < n_seg; ++i)
    if ((*offsets)[i + 1] < (*offsets)[i])
      throw contract_error("segment_sum: offsets not nondecreasing");
  Tensor out(n_seg, a.cols);
  kernels::segment_sum(a.ptr(), offsets->data(), out.ptr(), n_seg, a.cols);
  check_finite(out, "segment_sum");
  const int64_t ia = a.node, ac = a.cols;
  record(out,
         [ia, ac, offsets, n_seg](Tape& t, const Node& self) {
           if (!t.nodes_[ia].needs_grad_cached) return;
           auto& ga = t.grad_buf(ia);
           for (int64_t s = 0; s < n_seg; ++s)
             for (int64_t p = (*offsets)[s]; p < (*offsets)[s + 1]; ++p)
               for (int64_t j = 0; j < ac; ++j)
                 ga[static_cast<size_t>(p * ac + j)] +=
                     self.grad[static_cast<size_t>(s * ac + j)];
         },
         static_cast<uint64_t>(a.numel()));
  return out;
}

Tensor Tape::cross_entropy(const Tensor& logits,
                           std::shared_ptr<const std::vector<int64_t>> labels,
                           std::shared_ptr<const std::vector<uint8_t>> mask) {
  require_on_tape(logits, "cross_entropy");
  const int64_t n = logits.rows, c = logits.cols;
  if (static_cast<int64_t>(labels->size()) != n ||
      static_cast<int64_t>(mask->size()) != n)
    throw shape_error("cross_entropy: labels/mask length vs " + shape_str(logits));
  int64_t n_masked = 0;
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    if (!(*mask)[i]) continue;
    const int64_t y = (*labels)[i];
    if (y < 0 || y >= c)
      throw contract_error("cross_entropy: label " + std::to_string(y) +
                           " out of range at row " + std::to_string(i));
    double m = logits.at(i, 0);
    for (int64_t j = 1; j < c; ++j) m = std::max(m, logits.at(i, j));
    double z = 0.0;
    for (int64_t j = 0; j < c; ++j) z += std::exp(logits.at(i, j) - m);
    loss += std::log(z) + m - logits.at(i, y);
    ++n_masked;
  }
  if (n_masked == 0) throw contract_error("cross_entropy: empty mask");
  Tensor out(1, 1);
  out.at(0, 0) = loss / static_cast<double>(n_masked);
  check_finite(out, "cross_entropy");
  const int64_t il = logits.node;
  record(out,
         [il, logits, labels, mask, n_masked](Tape& t, const Node& self) {
           if (!t.nodes_[il].needs_grad_cached) return;
           auto& gl = t.grad_buf(il);
           const double g = self.grad[0] / static_cast<double>(n_masked);
           const int64_t c2 = logits.cols;
           for (int64_t i = 0; i < logits.rows; ++i) {
             if (!(*mask)[i]) continue;
             double m = logits.at(i, 0);
             for (int64_t j = 1; j < c2; ++j) m = std::max(m, logits.at(i, j));
             double z = 0.0;
             for (int64_t j = 0; j < c2; ++j) z += std::exp(logits.at(i, j) - m);
             for (int64_t j = 0; j < c2; ++j) {
               const double p = std::exp(logits.at(i, j) - m) / z;
               gl[static_cast<size_t>(i * c2 + j)] +=
                   g * (p - ((*labels)[i] == j ? 1.0 : 0.0));
             }
           }
         },
         static_cast<uint64_t>(n_masked) * static_cast<uint64_t>(5 * c + 3));
  return out;
}

Tensor Tape::mae(const Tensor& pred, const Tensor& target,
                 std::shared_ptr<const std::vector<uint8_t>> mask) {
  require_on_tape(pred, "mae");
  require_on_tape(target, "mae");
  if (!pred.same_shape(target))
    throw shape_error("mae: " + shape_str(pred) + " vs " + shape_str(target));
  if (static_cast<int64_t>(mask->size()) != pred.rows)
    throw shape_error("mae: mask length vs " + shape_str(pred));
  int64_t n_masked = 0;
  double loss = 0.0;
  for (int64_t i = 0; i < pred.rows; ++i) {
    if (!(*mask)[i]) continue;
    for (int64_t j = 0; j < pred.cols; ++j)
      loss += std::fabs(pred.at(i, j) - target.at(i, j));
    ++n_masked;
  }
  if (n_masked == 0) throw contract_error("mae: empty mask");
  const double denom = static_cast<double>(n_masked * pred.cols);
  Tensor out(1, 1);
  out.at(0, 0) = loss / denom;
  check_finite(out, "mae");
  const int64_t ip = pred.node, it = target.node;
  record(out,
         [ip, it, pred, target, mask, denom](Tape& t, const Node& self) {
           const double g = self.grad[0] / denom;
           const int64_t c = pred.cols;
           for (int64_t i = 0; i < pred.rows; ++i) {
             if (!(*mask)[i]) continue;
             for (int64_t j = 0; j < c; ++j) {
               const double d = pred.at(i, j) - target.at(i, j);
               const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
               if (t.nodes_[ip].needs_grad_cached)
                 t.grad_buf(ip)[static_cast<size_t>(i * c + j)] += g * s;
               if (t.nodes_[it].needs_grad_cached)
                 t.grad_buf(it)[static_cast<size_t>(i * c + j)] -= g * s;
             }
           }
         },
         static_cast<uint64_t>(n_masked * pred.cols * 2));
  return out;
}

void Tape::backward(const Tensor& loss) {
  require_on_tape(loss, "backward");
  if (loss.rows != 1 || loss.cols != 1)
    throw contract_error("backward: loss must be 1x1, got " + shape_str(loss));
  if (backward_done_)
    throw contract_error("backward: tape already consumed; re-record the forward pass");
  backward_done_ = true;

  grad_buf(loss.node)[0] = 1.0;
  for (int64_t i = static_cast<int64_t>(nodes_.size()) - 1; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.grad.empty()) continue;  // no downstream use
    if (n.back) n.back(*this, n);
    if (!n.grad_kept) {
      std::vector<double>().swap(n.grad);  // frontier memory released eagerly
    } else {
      for (double g : n.grad)
        if (!std::isfinite(g))
          throw numeric_error("backward: non-finite gradient at node " +
                              std::to_string(i));
    }
  }
}

bool Tape::has_grad(const Tensor& t) const {
  return t.node >= 0 && t.node < static_cast<int64_t>(nodes_.size()) &&
         !node_at(t.node).grad.empty();
}

Tensor Tape::grad(const Tensor& t) const {
  require_on_tape(t, "grad");
  const Node& n = node_at(t.node);
  if (n.grad.empty())
    throw contract_error("grad: no gradient stored for this node (only learnable "
                         "leaves keep gradients)");
  Tensor g(n.value.rows, n.value.cols);
  std::copy(n.grad.begin(), n.grad.end(), g.data->begin());
  return g;
}

Tensor Tape::grad_of(const std::string& param_name) const {
  auto it = named_.find(param_name);
  if (it == named_.end())
    throw contract_error("grad_of: unknown parameter " + param_name);
  const Node& n = node_at(it->second);
  Tensor g(n.value.rows, n.value.cols);
  if (!n.grad.empty()) std::copy(n.grad.begin(), n.grad.end(), g.data->begin());
  return g;
}

}  // namespace g2l
