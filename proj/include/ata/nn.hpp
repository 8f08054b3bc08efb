#pragma once

#include "ata/rng.hpp"
#include "ata/tape.hpp"

namespace ata::nn {

enum class Activation { Gelu, Relu };

ValueId activate(Tape& tape, ValueId x, Activation act);

// Multi-head scaled dot-product attention over row-aligned q, k, v of shape
// (n, d); d must divide evenly into heads. Per-head attention matrices are
// appended to attn_out when provided (rows sum to 1).
ValueId softmax_attention(Tape& tape, ValueId q, ValueId k, ValueId v, std::size_t heads,
                          std::vector<ValueId>* attn_out = nullptr);

// Inverted-dropout mask: entries are 0 with probability rate, else 1/(1-rate).
// Evaluation mode is simply "do not apply a mask".
Tensor dropout_mask(const std::vector<std::size_t>& shape, double rate, RngState& rng);

}  // namespace ata::nn
