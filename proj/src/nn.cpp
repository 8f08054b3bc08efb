#include "ata/nn.hpp"

#include <cmath>

namespace ata::nn {

ValueId activate(Tape& tape, ValueId x, Activation act) {
  return act == Activation::Gelu ? tape.gelu(x) : tape.relu(x);
}

ValueId softmax_attention(Tape& tape, ValueId q, ValueId k, ValueId v, std::size_t heads,
                          std::vector<ValueId>* attn_out) {
  const Tensor& vq = tape.value(q);
  const Tensor& vk = tape.value(k);
  const Tensor& vv = tape.value(v);
  require(vq.rank() == 2 && vq.same_shape(vk) && vq.same_shape(vv), ErrorKind::ShapeMismatch,
          "attention expects q, k, v of identical (n, d) shape");
  require(vq.rows() >= 1, ErrorKind::ShapeMismatch, "attention needs at least one token");
  require(heads >= 1 && vq.cols() % heads == 0, ErrorKind::DivisibilityError,
          "model width must be divisible by head count");
  const std::size_t d = vq.cols(), dh = d / heads;
  const double scl = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<ValueId> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    ValueId qh = tape.slice_cols(q, h * dh, dh);
    ValueId kh = tape.slice_cols(k, h * dh, dh);
    ValueId vh = tape.slice_cols(v, h * dh, dh);
    ValueId scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), scl);
    ValueId attn = tape.row_softmax(scores);
    if (attn_out) attn_out->push_back(attn);
    outs.push_back(tape.matmul(attn, vh));
  }
  return heads == 1 ? outs[0] : tape.concat_cols(outs);
}

Tensor dropout_mask(const std::vector<std::size_t>& shape, double rate, RngState& rng) {
  require(rate >= 0.0 && rate < 1.0, ErrorKind::ShapeMismatch, "dropout rate must be in [0, 1)");
  Tensor mask = Tensor::full(shape, 1.0);
  if (rate == 0.0) return mask;
  const double keep = 1.0 - rate;
  for (std::size_t i = 0; i < mask.numel(); ++i)
    mask[i] = rng.uniform() < rate ? 0.0 : 1.0 / keep;
  return mask;
}

}  // namespace ata::nn
