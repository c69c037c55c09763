#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "g2l/sparse.hpp"
#include "g2l/tensor.hpp"

namespace g2l {

enum class Act { sigmoid, relu, leaky_relu };

// Records a forward computation and replays it in reverse for gradients.
// Define-by-run: one tape per forward pass, creation order is topological
// order. Confined to one logical thread; independent tapes may run
// concurrently. Also keeps op-level FLOP and element counters for the cost
// model.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // ---- leaves ----
  Tensor constant(const Tensor& value);
  Tensor param(const Tensor& value, const std::string& name);

  // ---- ops ----
  Tensor matmul(const Tensor& a, const Tensor& b);           // a * b
  Tensor matmul_tn(const Tensor& a, const Tensor& b);        // a^T * b
  Tensor matmul_nt(const Tensor& a, const Tensor& b);        // a * b^T
  Tensor spmm(const SparseCSR& s, const Tensor& d);          // s constant
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double c);
  Tensor add_scalar(const Tensor& a, double c);
  Tensor add_bias_row(const Tensor& a, const Tensor& bias);  // bias 1 x cols
  Tensor scale_cols(const Tensor& a, const Tensor& s);       // s 1 x cols
  Tensor hadamard(const Tensor& a, const Tensor& b);
  Tensor hadamard_broadcast(const Tensor& h, const Tensor& g);  // g N x 1
  Tensor div(const Tensor& a, const Tensor& b);
  Tensor reciprocal(const Tensor& a);
  Tensor div_scalar(const Tensor& a, const Tensor& s);       // s 1 x 1 on tape
  Tensor activation(const Tensor& a, Act kind, double leaky_slope = 0.01);
  Tensor concat_cols(const Tensor& a, const Tensor& b);
  Tensor slice_cols(const Tensor& a, int64_t c0, int64_t c1);  // [c0, c1)
  Tensor frobenius_norm(const Tensor& a);                    // 1 x 1
  Tensor sum(const Tensor& a);                               // 1 x 1
  Tensor row_sums(const Tensor& a);                          // N x 1
  Tensor col_sums(const Tensor& a);                          // 1 x d
  Tensor mean_rows(const Tensor& a);                         // 1 x d
  Tensor gather_rows(const Tensor& a, std::shared_ptr<const std::vector<int64_t>> idx);
  // Sums contiguous row blocks [offsets[i], offsets[i+1]).
  Tensor segment_sum(const Tensor& a, std::shared_ptr<const std::vector<int64_t>> offsets);
  Tensor cross_entropy(const Tensor& logits,
                       std::shared_ptr<const std::vector<int64_t>> labels,
                       std::shared_ptr<const std::vector<uint8_t>> mask);
  Tensor mae(const Tensor& pred, const Tensor& target,
             std::shared_ptr<const std::vector<uint8_t>> mask);

  // ---- reverse pass ----
  // loss must be scalar (1x1) and recorded on this tape; callable once.
  void backward(const Tensor& loss);
  bool has_grad(const Tensor& t) const;
  Tensor grad(const Tensor& t) const;
  Tensor grad_of(const std::string& param_name) const;
  const std::vector<std::string>& param_names() const { return param_order_; }

  // ---- instrumentation ----
  uint64_t flops() const { return flops_; }
  uint64_t elements() const { return elements_; }
  size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;      // allocated lazily during backward
    bool learnable = false;
    bool grad_kept = false;        // retain grad after the node is consumed
    std::function<void(Tape&, const Node&)> back;  // null for leaves
  };

  int64_t record(Tensor& out, std::function<void(Tape&, const Node&)> back,
                 uint64_t op_flops);
  void require_on_tape(const Tensor& t, const char* op) const;
  void check_finite(const Tensor& t, const char* op) const;
  std::vector<double>& grad_buf(int64_t node);
  const Node& node_at(int64_t id) const { return nodes_[static_cast<size_t>(id)]; }

  std::vector<Node> nodes_;
  std::vector<std::string> param_order_;
  std::unordered_map<std::string, int64_t> named_;
  uint64_t flops_ = 0;
  uint64_t elements_ = 0;
  bool backward_done_ = false;
};

}  // namespace g2l
