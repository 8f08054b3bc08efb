#pragma once

#include <map>
#include <string>
#include <vector>

#include "ata/nn.hpp"
#include "ata/rng.hpp"
#include "ata/tape.hpp"

namespace ata::model {

// Named parameter tensors with per-tensor freeze flags, kept in insertion
// order so serialization and optimizer traversal are deterministic.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor init, bool frozen);
  Tensor& get(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const;
  bool frozen(const std::string& name) const;
  void set_frozen(const std::string& name, bool frozen);
  std::size_t size() const { return entries_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  void save(const std::string& path) const;
  static ParamStore load(const std::string& path);
  // byte-level digest of frozen tensors, for freeze-invariant checks
  std::string frozen_digest() const;

 private:
  struct Entry {
    Tensor value;
    bool frozen = false;
  };
  std::size_t index(const std::string& name) const;
  std::vector<std::string> names_;
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> lookup_;
};

struct ParamCounts {
  std::size_t total = 0;
  std::size_t trainable = 0;
  std::size_t frozen = 0;
  std::map<std::string, std::size_t> per_module;  // prefix before the first '.'
};

ParamCounts count_params(const ParamStore& store);

struct EmbedderConfig {
  std::size_t num_anchors = 16;
  double spatial_radius = 0.3;
  std::size_t neighbors_k = 8;
  std::size_t tube_length = 3;  // odd
  std::size_t anchor_stride = 2;
  std::size_t embed_dim = 64;

  void validate() const;
};

enum class Placement { Bypass, Prepend, Post, Middle };

Placement parse_placement(const std::string& s);
std::string placement_name(Placement p);

struct AdapterConfig {
  std::size_t model_dim = 64;
  std::size_t bottleneck = 16;  // < model_dim
  std::size_t kernel = 3;       // odd
  std::size_t depth = 2;        // number of adapted blocks
  nn::Activation activation = nn::Activation::Gelu;
  Placement placement = Placement::Bypass;
  bool zero_init_up = true;
  bool conv_over_tokens = false;  // convolve the flattened (T*N) sequence instead of T

  void validate() const;
};

struct Toggles {
  bool pae = true;  // trainable, pre-aligned dynamic embedder
  bool sce = true;
  bool pva = true;
};

struct ModelConfig {
  std::size_t dim = 64;
  std::size_t blocks = 2;
  std::size_t heads = 4;
  std::size_t num_classes = 4;
  double dropout = 0.5;
  bool eq4_literal = false;
  EmbedderConfig embedder;
  AdapterConfig adapter;
  Toggles toggles;
};

// Parameter registration. The backbone and the static embedder are frozen;
// the dynamic embedder trains only when toggles.pae is set.
void init_params(ParamStore& store, const ModelConfig& cfg, RngState& rng);

// Leaf bindings of a ParamStore into a tape, by name.
struct Binding {
  std::map<std::string, ValueId> ids;
  ValueId at(const std::string& name) const;
};
Binding bind_params(Tape& tape, const ParamStore& store);

// Gradients by parameter name with the freeze mask applied: frozen entries
// come back as exact zeros.
std::map<std::string, Tensor> masked_gradients(const Binding& binding, const ParamStore& store,
                                               const std::map<ValueId, Tensor>& grads);

// mini-PointNet: shared per-point MLP then max-pool. Global variant returns
// 1 x e; the per-anchor variant pools ball neighborhoods around FPS anchors.
Tensor embed_static(const Tensor& cloud, const ParamStore& store);
Tensor embed_static_anchors(const Tensor& cloud, const EmbedderConfig& cfg,
                            const ParamStore& store, RngState& rng);

struct TokenGrid {
  ValueId tokens = -1;  // (frames * anchors) x e
  std::size_t frames = 0;
  std::size_t anchors = 0;
};

// Tube-grouped dynamic embedder; anchors are farthest-point samples with one
// shared start index per clip so anchor identities persist across frames.
TokenGrid embed_dynamic(Tape& tape, const Tensor& clip, const EmbedderConfig& cfg,
                        const Binding& binding, RngState& rng);

ValueId pva_forward(Tape& tape, ValueId x, std::size_t frames, std::size_t anchors,
                    const AdapterConfig& cfg, const Binding& binding, std::size_t block);
ValueId sce_forward(Tape& tape, ValueId x, const Binding& binding, std::size_t block);

// One backbone block with optional adapter branches per the placement rule.
ValueId block_forward(Tape& tape, ValueId tokens, std::size_t frames, std::size_t anchors,
                      std::size_t block, const ModelConfig& cfg, const Binding& binding);

// Embedder + all blocks + classification head; logits for one clip (1 x K).
ValueId model_forward(Tape& tape, const Tensor& clip, const ModelConfig& cfg,
                      const Binding& binding, RngState& rng, bool training,
                      RngState* dropout_rng = nullptr);

// Deterministic farthest-point sampling: greedy max-min with ties broken by
// the lowest index; `start` selects the first point.
std::vector<std::size_t> farthest_point_sample(const Tensor& points, std::size_t count,
                                               std::size_t start);

}  // namespace ata::model
