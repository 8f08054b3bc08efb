#include "ata/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "ata/model.hpp"
#include "ata/nn.hpp"
#include "ata/tape.hpp"

namespace ata::gradcheck {

namespace {

// Random projection to a scalar; the auxiliary stream replays identically on
// every evaluation, so the projection is fixed within one check.
ValueId project(Tape& tape, ValueId x, RngState& aux) {
  Tensor r(tape.value(x).shape());
  for (std::size_t i = 0; i < r.numel(); ++i) r[i] = aux.uniform(-1.0, 1.0);
  return tape.sum(tape.mul(x, tape.leaf(std::move(r))));
}

struct Scenario {
  std::string name;
  std::vector<std::vector<std::size_t>> shapes;
  std::function<void(std::vector<Tensor>&, RngState&)> tweak;  // optional
  std::function<ValueId(Tape&, const std::vector<ValueId>&, RngState&)> build;
};

std::vector<Tensor> random_inputs(const Scenario& s, RngState& rng) {
  std::vector<Tensor> inputs;
  for (const auto& shape : s.shapes) {
    Tensor t(shape);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    inputs.push_back(std::move(t));
  }
  if (s.tweak) s.tweak(inputs, rng);
  return inputs;
}

double run_scenario_once(const Scenario& s, std::uint64_t seed, double h) {
  RngState gen(0x9BADC0DEull + seed * 7919ull);
  std::vector<Tensor> inputs = random_inputs(s, gen);
  const std::uint64_t aux_seed = 0x51CA7EEDull + seed;

  auto eval = [&](const std::vector<Tensor>& ins) {
    Tape tape;
    std::vector<ValueId> leaves;
    for (const Tensor& t : ins) leaves.push_back(tape.leaf(t));
    RngState aux(aux_seed);
    const ValueId loss = s.build(tape, leaves, aux);
    return tape.value(loss).scalar_value();
  };

  // analytic gradients
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<ValueId> leaves;
    for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
    RngState aux(aux_seed);
    const ValueId loss = s.build(tape, leaves, aux);
    auto grads = tape.backward(loss);
    for (ValueId id : leaves) analytic.push_back(std::move(grads.at(id)));
  }

  double max_rel = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
      std::vector<Tensor> plus = inputs, minus = inputs;
      plus[k][i] += h;
      minus[k][i] -= h;
      const double fd = (eval(plus) - eval(minus)) / (2.0 * h);
      const double rel =
          std::fabs(analytic[k][i] - fd) / std::max(1.0, std::fabs(fd));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

void keep_away_from_zero(Tensor& t, double margin) {
  for (std::size_t i = 0; i < t.numel(); ++i) {
    const double a = std::fabs(t[i]);
    if (a < margin) t[i] = t[i] < 0.0 ? -margin : margin;
  }
}

// Widen the top-2 gap per (segment, column) so the max never flips under fd.
void separate_segment_max(Tensor& t, const std::vector<std::size_t>& offsets, double gap) {
  for (std::size_t g = 0; g + 1 < offsets.size(); ++g)
    for (std::size_t j = 0; j < t.cols(); ++j) {
      std::size_t best = offsets[g];
      for (std::size_t r = offsets[g] + 1; r < offsets[g + 1]; ++r)
        if (t.at(r, j) > t.at(best, j)) best = r;
      double second = -1e30;
      for (std::size_t r = offsets[g]; r < offsets[g + 1]; ++r)
        if (r != best) second = std::max(second, t.at(r, j));
      if (offsets[g + 1] - offsets[g] > 1 && t.at(best, j) - second < gap)
        t.at(best, j) = second + gap;
    }
}

model::Binding hand_binding(const std::vector<std::string>& names,
                            const std::vector<ValueId>& leaves, std::size_t begin) {
  model::Binding b;
  for (std::size_t i = 0; i < names.size(); ++i) b.ids[names[i]] = leaves[begin + i];
  return b;
}

std::vector<Scenario> scenarios() {
  std::vector<Scenario> list;

  list.push_back({"matmul",
                  {{3, 4}, {4, 2}},
                  nullptr,
                  [](Tape& t, const std::vector<ValueId>& in, RngState& aux) {
                    return project(t, t.matmul(in[0], in[1]), aux);
                  }});

  list.push_back({"linear",
                  {{3, 4}, {4, 2}, {2}},
                  nullptr,
                  [](Tape& t, const std::vector<ValueId>& in, RngState& aux) {
                    return project(t, t.linear(in[0], in[1], in[2]), aux);
                  }});

  list.push_back({"elementwise",
                  {{2, 3}, {2, 3}},
                  nullptr,
                  [](Tape& t, const std::vector<ValueId>& in, RngState& aux) {
                    ValueId z = t.mul(t.add(t.scale(in[0], 1.3), in[1]), t.sub(in[0], in[1]));
                    return project(t, t.add_const(t.transpose(z), 0.7), aux);
                  }});

  list.push_back({"pow_const",
                  {{2, 3}},
                  [](std::vector<Tensor>& in, RngState&) {
                    for (std::size_t i = 0; i < in[0].numel(); ++i)
                      in[0][i] = std::fabs(in[0][i]) + 0.5;
                  },
                  [](Tape& t, const std::vector<ValueId>& in, RngState& aux) {
                    return project(t, t.pow_const(in[0], 1.7), aux);
                  }});

  list.push_back({"reductions",
                  {{3, 4}},
                  nullptr,
                  [](Tape& t, const std::vector<ValueId>& in, RngState& aux) {
                    ValueId a = t.add(t.scale(t.sum(in[0]), 0.5), t.scale(t.mean(in[0]), 2.0));
                    return t.add(a, project(t, t.mean_rows(in[0]), aux));
                  }});

  list.push_back({"relu",
                  {{2, 5}},
                  [](std::vector<Tensor>& in, RngState&) { keep_away_from_zero(in[0], 0.05); },
                  [](Tape& t, const std::vector<ValueId>& in, RngState& aux) {
                    return project(t, t.relu(in[0]), aux);
                  }});

  list.push_back({"gelu",
                  {{2, 5}},
                  nullptr,
                  [](Tape& t, const std::vector<ValueId>& in, RngState& aux) {
                    return project(t, t.gelu(in[0]), aux);
                  }});

  list.push_back({"row_softmax",
                  {{3, 4}},
                  nullptr,
                  [](Tape& t, const std::vector<ValueId>& in, RngState& aux) {
                    return project(t, t.row_softmax(in[0]), aux);
                  }});

  list.push_back({"layer_norm",
                  {{4, 6}, {6}, {6}},
                  [](std::vector<Tensor>& in, RngState&) {
                    for (std::size_t i = 0; i < 6; ++i) in[1][i] = 1.0 + 0.2 * in[1][i];
                  },
                  [](Tape& t, const std::vector<ValueId>& in, RngState& aux) {
                    return project(t, t.layer_norm(in[0], in[1], in[2], 1e-5), aux);
                  }});

  list.push_back({"dropout",
                  {{3, 4}},
                  nullptr,
                  [](Tape& t, const std::vector<ValueId>& in, RngState& aux) {
                    const Tensor mask = nn::dropout_mask({3, 4}, 0.5, aux);
                    return project(t, t.dropout(in[0], mask), aux);
                  }});

  list.push_back({"slicing",
                  {{3, 6}, {2, 6}},
                  nullptr,
                  [](Tape& t, const std::vector<ValueId>& in, RngState& aux) {
                    ValueId cols = t.concat_cols({t.slice_cols(in[0], 0, 2),
                                                  t.slice_cols(in[0], 3, 3)});
                    ValueId rows = t.concat_rows({in[0], in[1]});
                    ValueId picked = t.slice_rows(rows, {0, 2, 4, 4});
                    return t.add(project(t, cols, aux), project(t, picked, aux));
                  }});

  {
    const std::vector<std::size_t> offsets{0, 3, 4, 7};
    list.push_back({"segment_max",
                    {{7, 3}},
                    [offsets](std::vector<Tensor>& in, RngState&) {
                      separate_segment_max(in[0], offsets, 0.05);
                    },
                    [offsets](Tape& t, const std::vector<ValueId>& in, RngState& aux) {
                      return project(t, t.segment_max(in[0], offsets), aux);
                    }});
  }

  list.push_back({"dwsep_conv",
                  {{4, 2, 3}, {3, 3}, {3, 3}},
                  nullptr,
                  [](Tape& t, const std::vector<ValueId>& in, RngState& aux) {
                    return project(t, t.dwsep_conv(in[0], in[1], in[2]), aux);
                  }});

  list.push_back({"attention",
                  {{4, 8}, {4, 8}, {4, 8}},
                  nullptr,
                  [](Tape& t, const std::vector<ValueId>& in, RngState& aux) {
                    return project(t, nn::softmax_attention(t, in[0], in[1], in[2], 2), aux);
                  }});

  list.push_back({"cross_entropy",
                  {{4, 5}},
                  nullptr,
                  [](Tape& t, const std::vector<ValueId>& in, RngState&) {
                    return t.cross_entropy(in[0], {0, 2, 1, 4});
                  }});

  list.push_back({"weighted_pow_dist_p2",
                  {{4, 3}},
                  nullptr,
                  [](Tape& t, const std::vector<ValueId>& in, RngState& aux) {
                    Tensor anchors({5, 3}), coeff({4, 5});
                    for (std::size_t i = 0; i < anchors.numel(); ++i)
                      anchors[i] = aux.uniform(-1.0, 1.0);
                    for (std::size_t i = 0; i < coeff.numel(); ++i) coeff[i] = aux.uniform();
                    return t.weighted_pow_dist(in[0], std::move(anchors), std::move(coeff), 2.0);
                  }});

  list.push_back({"weighted_pow_dist_p3",
                  {{4, 3}},
                  nullptr,
                  [](Tape& t, const std::vector<ValueId>& in, RngState& aux) {
                    Tensor anchors({5, 3}), coeff({4, 5});
                    for (std::size_t i = 0; i < anchors.numel(); ++i)
                      anchors[i] = aux.uniform(-1.0, 1.0);
                    for (std::size_t i = 0; i < coeff.numel(); ++i) coeff[i] = aux.uniform();
                    return t.weighted_pow_dist(in[0], std::move(anchors), std::move(coeff), 3.0);
                  }});

  list.push_back({"mmd_sq",
                  {{4, 3}},
                  nullptr,
                  [](Tape& t, const std::vector<ValueId>& in, RngState& aux) {
                    Tensor y({5, 3});
                    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = aux.uniform(-1.0, 1.0);
                    return t.mmd_sq(in[0], std::move(y), 0.7);
                  }});

  list.push_back({"linear_cka",
                  {{5, 3}},
                  nullptr,
                  [](Tape& t, const std::vector<ValueId>& in, RngState& aux) {
                    Tensor y({5, 4});
                    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = aux.uniform(-1.0, 1.0);
                    return t.linear_cka(in[0], std::move(y));
                  }});

  {
    const std::vector<std::string> names{"pva.0.wdown", "pva.0.bdown", "pva.0.wdepth",
                                         "pva.0.wpoint", "pva.0.wup", "pva.0.bup"};
    list.push_back({"pva",
                    {{8, 8}, {8, 3}, {3}, {3, 3}, {3, 3}, {3, 8}, {8}},
                    nullptr,
                    [names](Tape& t, const std::vector<ValueId>& in, RngState& aux) {
                      model::AdapterConfig cfg;
                      cfg.model_dim = 8;
                      cfg.bottleneck = 3;
                      cfg.kernel = 3;
                      model::Binding b = hand_binding(names, in, 1);
                      return project(t, model::pva_forward(t, in[0], 4, 2, cfg, b, 0), aux);
                    }});
  }

  {
    const std::vector<std::string> names{"sce.0.w1", "sce.0.b1", "sce.0.w2", "sce.0.b2"};
    list.push_back({"sce",
                    {{6, 4}, {4, 16}, {16}, {16, 4}, {4}},
                    nullptr,
                    [names](Tape& t, const std::vector<ValueId>& in, RngState& aux) {
                      model::Binding b = hand_binding(names, in, 1);
                      return project(t, model::sce_forward(t, in[0], b, 0), aux);
                    }});
  }

  {
    // full adapted block, bypass placement, d=8 h=2 r=3
    std::vector<std::string> names;
    std::vector<std::vector<std::size_t>> shapes{{8, 8}};  // tokens 4x2 frames x anchors
    auto param = [&](const std::string& n, std::vector<std::size_t> s) {
      names.push_back(n);
      shapes.push_back(std::move(s));
    };
    param("bb.0.ln1.g", {8});
    param("bb.0.ln1.b", {8});
    for (const char* w : {"bb.0.attn.wq", "bb.0.attn.wk", "bb.0.attn.wv", "bb.0.attn.wo"})
      param(w, {8, 8});
    for (const char* b : {"bb.0.attn.bq", "bb.0.attn.bk", "bb.0.attn.bv", "bb.0.attn.bo"})
      param(b, {8});
    param("bb.0.ln2.g", {8});
    param("bb.0.ln2.b", {8});
    param("bb.0.ffn.w1", {8, 32});
    param("bb.0.ffn.b1", {32});
    param("bb.0.ffn.w2", {32, 8});
    param("bb.0.ffn.b2", {8});
    param("pva.0.wdown", {8, 3});
    param("pva.0.bdown", {3});
    param("pva.0.wdepth", {3, 3});
    param("pva.0.wpoint", {3, 3});
    param("pva.0.wup", {3, 8});
    param("pva.0.bup", {8});
    param("sce.0.w1", {8, 32});
    param("sce.0.b1", {32});
    param("sce.0.w2", {32, 8});
    param("sce.0.b2", {8});
    list.push_back({"block_bypass",
                    shapes,
                    [](std::vector<Tensor>& in, RngState&) {
                      in[1] = Tensor::full({8}, 1.0);   // ln gains near 1
                      in[11] = Tensor::full({8}, 1.0);  // ln2.g
                    },
                    [names](Tape& t, const std::vector<ValueId>& in, RngState& aux) {
                      model::ModelConfig cfg;
                      cfg.dim = 8;
                      cfg.blocks = 1;
                      cfg.heads = 2;
                      cfg.embedder.embed_dim = 8;
                      cfg.adapter.model_dim = 8;
                      cfg.adapter.bottleneck = 3;
                      cfg.adapter.kernel = 3;
                      cfg.adapter.depth = 1;
                      model::Binding b = hand_binding(names, in, 1);
                      return project(t, model::block_forward(t, in[0], 4, 2, 0, cfg, b), aux);
                    }});
  }

  {
    const std::vector<std::string> names{"fd.w1", "fd.b1", "fd.w2", "fd.b2"};
    list.push_back({"embed_dynamic",
                    {{4, 4}, {4}, {4, 8}, {8}},
                    nullptr,
                    [names](Tape& t, const std::vector<ValueId>& in, RngState& aux) {
                      model::EmbedderConfig cfg;
                      cfg.num_anchors = 3;
                      cfg.neighbors_k = 4;
                      cfg.tube_length = 3;
                      cfg.anchor_stride = 2;
                      cfg.spatial_radius = 0.8;
                      cfg.embed_dim = 8;
                      Tensor clip({4, 12, 3});
                      RngState cr(12345);
                      for (std::size_t i = 0; i < clip.numel(); ++i)
                        clip[i] = cr.uniform(-1.0, 1.0);
                      model::Binding b = hand_binding(names, in, 0);
                      RngState fps(7);
                      model::TokenGrid grid = model::embed_dynamic(t, clip, cfg, b, fps);
                      return project(t, grid.tokens, aux);
                    }});
  }

  return list;
}

}  // namespace

std::vector<CheckResult> run_all(int seeds_per_check, double h, double tol) {
  std::vector<CheckResult> out;
  for (const Scenario& s : scenarios()) {
    CheckResult r;
    r.name = s.name;
    for (int seed = 0; seed < seeds_per_check; ++seed)
      r.max_rel_err = std::max(r.max_rel_err,
                               run_scenario_once(s, static_cast<std::uint64_t>(seed), h));
    r.pass = r.max_rel_err <= tol;
    out.push_back(std::move(r));
  }
  return out;
}

bool all_pass(const std::vector<CheckResult>& results) {
  for (const auto& r : results)
    if (!r.pass) return false;
  return true;
}

}  // namespace ata::gradcheck
