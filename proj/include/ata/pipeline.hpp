#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ata/model.hpp"
#include "ata/otdd.hpp"

namespace ata::pipeline {

struct TrainSchedule {
  int stage1_epochs = 10;
  int stage2_epochs = 40;
  double base_lr = 0.01;
  double stage1_lr = 0.01;
  int warmup_epochs = 10;
  std::vector<int> decay_epochs{20, 30};
  double decay_factor = 0.1;
  double momentum = 0.9;
  double dropout = 0.5;
  int batch_size = 16;

  void validate() const;
};

// Closed-form stage-2 schedule: linear per-epoch warmup lr(e) = base*(e+1)/W
// for e < W, then step decay at each listed epoch.
double lr_at(const TrainSchedule& s, int epoch);

struct MetricRecord {
  int stage = 0;
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double otdd_estimate = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;  // diagnostic only, never serialized into the log
};

struct MetricLog {
  std::vector<MetricRecord> records;
  double final_train_acc = 0.0;
  double final_test_acc = 0.0;

  double train_test_gap() const { return final_train_acc - final_test_acc; }
  std::string to_jsonl() const;
  static MetricLog from_jsonl_file(const std::string& path);
  void write(const std::string& path) const;
  void append(MetricLog other);
};

std::string format_sig12(double v);

class SgdOptimizer {
 public:
  explicit SgdOptimizer(double momentum) : momentum_(momentum) {}
  // Updates trainable parameters only; frozen tensors are never touched.
  void step(model::ParamStore& store, const std::map<std::string, Tensor>& grads, double lr);

 private:
  double momentum_;
  std::map<std::string, Tensor> velocity_;
};

struct ClipDataset {
  std::vector<Tensor> clips;  // each T x P x 3
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return clips.size(); }
  void validate() const;
};

struct AlignOptions {
  otdd::OtddOptions otdd;
  int b = 32;
  int rounds = 2;
  std::string metric = "otdd";  // otdd | mmd | cka | euclid
  double mmd_bandwidth = 1.0;
};

struct RunContext {
  model::ModelConfig model;
  TrainSchedule schedule;
  AlignOptions align;
};

// Stage 1: minimize the alignment metric between per-clip embeddings of dyn
// batches and the fixed static embedding set, updating the dynamic embedder.
MetricLog stage1_align(const ClipDataset& dyn, const otdd::LabeledEmbeddingSet& stat,
                       model::ParamStore& store, const RunContext& ctx, RngState& rng);

// Stage 2: cross-entropy adaptation of embedder + adapters + head with the
// backbone frozen.
MetricLog stage2_adapt(const ClipDataset& train, const ClipDataset& test,
                       model::ParamStore& store, const RunContext& ctx, RngState& rng,
                       double carried_otdd);

double evaluate_accuracy(const ClipDataset& data, const model::ModelConfig& cfg,
                         model::ParamStore& store, RngState eval_rng);

struct RunResult {
  MetricLog log;
  model::ParamStore params;
};

// Full two-stage run from freshly initialized parameters.
RunResult run_all(const ClipDataset& train, const ClipDataset& test,
                  const std::vector<Tensor>& static_clouds, const std::vector<int>& static_labels,
                  int static_classes, const RunContext& ctx, std::uint64_t seed);

struct SummaryRow {
  std::string config_id;
  std::uint64_t seed = 0;
  double final_train_acc = 0.0;
  double final_test_acc = 0.0;
  double gap = 0.0;
  std::size_t params_trainable = 0;
  double otdd_final = 0.0;
  std::string error;  // non-empty when the cell failed
};

std::string summary_csv(const std::vector<SummaryRow>& rows);

struct AblationCell {
  std::string config_id;
  RunContext ctx;
};

// Deterministic sweep; each (cell, seed) runs independently, failures are
// recorded and the sweep continues. Workers capped by ATA_THREADS (0 or
// unset = sequential).
std::vector<SummaryRow> run_ablation(const std::vector<AblationCell>& grid,
                                     const std::vector<std::uint64_t>& seeds,
                                     const ClipDataset& train, const ClipDataset& test,
                                     const std::vector<Tensor>& static_clouds,
                                     const std::vector<int>& static_labels, int static_classes);

}  // namespace ata::pipeline
