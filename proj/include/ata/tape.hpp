#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "ata/tensor.hpp"

namespace ata {

using ValueId = std::int32_t;

// Reverse-mode tape. Primitive calls compute their forward value eagerly and
// record a backward closure; backward() replays closures in exact reverse
// recording order. One tape per training step, single writer.
class Tape {
 public:
  ValueId leaf(Tensor value);
  const Tensor& value(ValueId id) const;
  std::size_t size() const { return values_.size(); }

  ValueId add(ValueId a, ValueId b);
  ValueId sub(ValueId a, ValueId b);
  ValueId mul(ValueId a, ValueId b);
  ValueId scale(ValueId a, double c);
  ValueId add_const(ValueId a, double c);
  // Elementwise x^q; inputs are expected non-negative where q is fractional.
  ValueId pow_const(ValueId a, double q);

  ValueId matmul(ValueId a, ValueId b);
  ValueId transpose(ValueId a);
  // y = x.w + b with b broadcast over rows; b has rank 1.
  ValueId linear(ValueId x, ValueId w, ValueId b);

  ValueId sum(ValueId a);
  ValueId mean(ValueId a);
  ValueId mean_rows(ValueId a);  // n x e -> 1 x e

  ValueId relu(ValueId a);
  ValueId gelu(ValueId a);
  ValueId row_softmax(ValueId a);
  ValueId layer_norm(ValueId x, ValueId gamma, ValueId beta, double eps);
  // mask entries are 0 or 1/keep (inverted dropout); see nn::dropout_mask.
  ValueId dropout(ValueId x, const Tensor& mask);

  ValueId slice_cols(ValueId x, std::size_t begin, std::size_t count);
  ValueId concat_cols(const std::vector<ValueId>& xs);
  ValueId slice_rows(ValueId x, std::vector<std::size_t> rows);
  ValueId concat_rows(const std::vector<ValueId>& xs);
  ValueId reshape(ValueId x, std::vector<std::size_t> shape);

  // Rows of x grouped by offsets (size G+1, strictly increasing); per-column
  // max within each group, ties resolved to the lowest row.
  ValueId segment_max(ValueId x, std::vector<std::size_t> offsets);

  // Depth-wise separable convolution on x of shape (T, N, C): each channel is
  // convolved along the T axis (zero padding, odd kernel), then channels are
  // mixed by w_point. w_depth is (C, K), w_point is (C, C).
  ValueId dwsep_conv(ValueId x, ValueId w_depth, ValueId w_point);

  // Mean negative log-likelihood of integer labels under row-wise softmax.
  ValueId cross_entropy(ValueId logits, std::vector<int> labels);

  // sum_ij coeff[i,j] * ||x_i - anchors_j||^p with coeff and anchors fixed.
  ValueId weighted_pow_dist(ValueId x, Tensor anchors, Tensor coeff, double p);

  // Biased MMD^2 between rows of x and the fixed set y under an RBF kernel.
  ValueId mmd_sq(ValueId x, Tensor y, double bandwidth);

  // Linear CKA between rows of x and the fixed, row-aligned set y.
  ValueId linear_cka(ValueId x, Tensor y);

  // Gradients of a scalar loss w.r.t. every leaf; leaves the loss does not
  // reach get zero gradients.
  std::map<ValueId, Tensor> backward(ValueId loss);

 private:
  struct Node {
    bool is_leaf = false;
    std::function<void(Tape&, ValueId)> back;  // may be empty for leaves
  };

  ValueId push(Tensor value, std::function<void(Tape&, ValueId)> back, bool is_leaf = false);
  void check(ValueId id) const;
  Tensor& grad(ValueId id) { return grads_[static_cast<std::size_t>(id)]; }

  std::vector<Tensor> values_;
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

}  // namespace ata
