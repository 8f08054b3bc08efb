#pragma once

#include <vector>

#include "ata/ot.hpp"
#include "ata/rng.hpp"
#include "ata/tensor.hpp"

namespace ata::otdd {

struct LabeledEmbeddingSet {
  Tensor features;          // n x e
  std::vector<int> labels;  // values in [0, num_classes)
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t width() const { return features.cols(); }
  void validate() const;
  // indices per class; classes may be empty here, emptiness is checked where
  // class conditionals are required
  std::vector<std::vector<std::size_t>> class_indices() const;
};

enum class InnerMode { Gaussian, Exact };
enum class SolverKind { Sinkhorn, Exact };

struct OtddOptions {
  double p = 2.0;
  double epsilon = 0.1;
  InnerMode inner = InnerMode::Gaussian;
  SolverKind solver = SolverKind::Sinkhorn;
  int max_iter = 2000;
  double tol = 1e-6;
  bool debias = false;
  bool normalize_cost = false;
};

struct LabelDistanceMatrix {
  Tensor dist;  // K_dyn x K_stat, non-negative
  double p = 2.0;
};

LabelDistanceMatrix label_distance_matrix(const LabeledEmbeddingSet& dyn,
                                          const LabeledEmbeddingSet& stat,
                                          const OtddOptions& opts);
LabelDistanceMatrix label_distance_matrix(const LabeledEmbeddingSet& dyn,
                                          const LabeledEmbeddingSet& stat, double p,
                                          InnerMode mode, double epsilon);

// C[i,j] = (||x_i - y_j||^p + d_Y(y_i, y_j)^p)^(1/p)
Tensor joint_ground_cost(const LabeledEmbeddingSet& dyn, const LabeledEmbeddingSet& stat,
                         const LabelDistanceMatrix& ldm, double p);

double otdd_exact(const LabeledEmbeddingSet& dyn, const LabeledEmbeddingSet& stat,
                  const OtddOptions& opts);
double otdd_exact(const LabeledEmbeddingSet& dyn, const LabeledEmbeddingSet& stat, double p,
                  double epsilon);

struct OtddEstimate {
  double aggregate = 0.0;
  std::vector<double> per_class;  // K_dyn
  std::vector<double> weights;    // K_dyn, sums to 1
  int rounds = 0;
  int subsample = 0;
  Tensor per_round;  // K_dyn x rounds
};

OtddEstimate otdd_class_weighted_stochastic(const LabeledEmbeddingSet& dyn,
                                            const LabeledEmbeddingSet& stat, int b, int R,
                                            const OtddOptions& opts, RngState& rng);

// One per-(class, round) loss term of the stochastic estimate, expressed with
// all transport couplings frozen: value = (<coeff, D_p> + constant)^(1/p)
// where D_p are pairwise feature distances to the static set. Summing
// weight * value over all terms reproduces the estimate.
struct AlignmentLossTerm {
  int dyn_class = 0;
  int round = 0;
  std::vector<std::size_t> rows;  // indices into the dyn feature matrix
  Tensor coeff;                   // rows.size() x n_stat
  double constant = 0.0;
  double weight = 0.0;  // w_class / R
  double value = 0.0;
};

std::vector<AlignmentLossTerm> alignment_loss_terms(const Tensor& dyn_features,
                                                    const std::vector<int>& dyn_labels,
                                                    const std::vector<double>& class_weights,
                                                    const LabeledEmbeddingSet& stat, int b, int R,
                                                    const OtddOptions& opts, RngState& rng);

// Alternative alignment metrics
double mmd(const Tensor& dyn, const Tensor& stat, double bandwidth);
double cka(const Tensor& dyn, const Tensor& stat);
double mean_euclidean(const Tensor& dyn, const Tensor& stat);

}  // namespace ata::otdd
