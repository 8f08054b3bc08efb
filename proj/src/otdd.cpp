#include "ata/otdd.hpp"

#include <algorithm>
#include <cmath>

namespace ata::otdd {

namespace {

struct GaussianStats {
  std::vector<double> mean;
  std::vector<double> var;  // diagonal, population
};

GaussianStats fit_gaussian(const Tensor& features, const std::vector<std::size_t>& rows) {
  const std::size_t e = features.cols(), n = rows.size();
  GaussianStats s;
  s.mean.assign(e, 0.0);
  s.var.assign(e, 0.0);
  for (std::size_t r : rows)
    for (std::size_t c = 0; c < e; ++c) s.mean[c] += features.at(r, c);
  for (std::size_t c = 0; c < e; ++c) s.mean[c] /= static_cast<double>(n);
  for (std::size_t r : rows)
    for (std::size_t c = 0; c < e; ++c) {
      const double d = features.at(r, c) - s.mean[c];
      s.var[c] += d * d;
    }
  for (std::size_t c = 0; c < e; ++c) s.var[c] /= static_cast<double>(n);
  return s;
}

// W2 between Gaussians with commuting (diagonal) covariances.
double bures_w2(const GaussianStats& a, const GaussianStats& b) {
  double sq = 0.0;
  for (std::size_t c = 0; c < a.mean.size(); ++c) {
    const double dm = a.mean[c] - b.mean[c];
    const double ds = std::sqrt(a.var[c]) - std::sqrt(b.var[c]);
    sq += dm * dm + ds * ds;
  }
  return std::sqrt(sq);
}

Tensor gather_rows(const Tensor& features, const std::vector<std::size_t>& rows) {
  const std::size_t e = features.cols();
  Tensor out({rows.size(), e});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < e; ++c) out.at(i, c) = features.at(rows[i], c);
  return out;
}

ot::TransportPlan solve_cost(const Tensor& cost, const OtddOptions& opts) {
  const auto a = ot::DiscreteMeasure::uniform(cost.rows());
  const auto b = ot::DiscreteMeasure::uniform(cost.cols());
  if (opts.solver == SolverKind::Exact) return ot::exact_ot(cost, a, b);
  ot::SinkhornOptions so;
  so.epsilon = opts.epsilon;
  so.max_iter = opts.max_iter;
  so.tol = opts.tol;
  so.normalize_cost = opts.normalize_cost;
  return ot::sinkhorn(cost, a, b, so);
}

double root_p(double v, double p) { return std::pow(std::max(v, 0.0), 1.0 / p); }

// W_p between two sample sets in feature space under the configured solver.
double sample_wasserstein(const Tensor& x, const Tensor& y, const OtddOptions& opts) {
  const Tensor cost = ot::pairwise_pow_l2(x, y, opts.p);
  return root_p(solve_cost(cost, opts).cost_value, opts.p);
}

std::vector<std::vector<std::size_t>> nonempty_class_indices(const LabeledEmbeddingSet& s,
                                                             const char* who) {
  auto idx = s.class_indices();
  for (int k = 0; k < s.num_classes; ++k)
    require(!idx[static_cast<std::size_t>(k)].empty(), ErrorKind::EmptyClass,
            std::string(who) + " class " + std::to_string(k) + " has no members");
  return idx;
}

}  // namespace

void LabeledEmbeddingSet::validate() const {
  require(features.rank() == 2, ErrorKind::ShapeMismatch, "features must be n x e");
  require(features.rows() == labels.size(), ErrorKind::LengthMismatch,
          "one label per feature row required");
  require(!labels.empty(), ErrorKind::EmptyDataset, "labeled set is empty");
  require(num_classes >= 1, ErrorKind::EmptyClass, "num_classes must be positive");
  for (int y : labels)
    require(y >= 0 && y < num_classes, ErrorKind::MissingLabelEntry,
            "label outside [0, num_classes)");
}

std::vector<std::vector<std::size_t>> LabeledEmbeddingSet::class_indices() const {
  std::vector<std::vector<std::size_t>> idx(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i)
    idx[static_cast<std::size_t>(labels[i])].push_back(i);
  return idx;
}

LabelDistanceMatrix label_distance_matrix(const LabeledEmbeddingSet& dyn,
                                          const LabeledEmbeddingSet& stat,
                                          const OtddOptions& opts) {
  dyn.validate();
  stat.validate();
  require(dyn.width() == stat.width(), ErrorKind::ShapeMismatch,
          "label distances need a shared feature width");
  const auto dyn_idx = nonempty_class_indices(dyn, "dyn");
  const auto stat_idx = nonempty_class_indices(stat, "stat");

  LabelDistanceMatrix out;
  out.p = opts.p;
  out.dist = Tensor({dyn_idx.size(), stat_idx.size()});
  if (opts.inner == InnerMode::Gaussian) {
    std::vector<GaussianStats> ds, ss;
    for (const auto& rows : dyn_idx) ds.push_back(fit_gaussian(dyn.features, rows));
    for (const auto& rows : stat_idx) ss.push_back(fit_gaussian(stat.features, rows));
    for (std::size_t i = 0; i < ds.size(); ++i)
      for (std::size_t j = 0; j < ss.size(); ++j) out.dist.at(i, j) = bures_w2(ds[i], ss[j]);
  } else {
    std::vector<Tensor> dfeat, sfeat;
    for (const auto& rows : dyn_idx) dfeat.push_back(gather_rows(dyn.features, rows));
    for (const auto& rows : stat_idx) sfeat.push_back(gather_rows(stat.features, rows));
    for (std::size_t i = 0; i < dfeat.size(); ++i)
      for (std::size_t j = 0; j < sfeat.size(); ++j)
        out.dist.at(i, j) = sample_wasserstein(dfeat[i], sfeat[j], opts);
  }
  return out;
}

LabelDistanceMatrix label_distance_matrix(const LabeledEmbeddingSet& dyn,
                                          const LabeledEmbeddingSet& stat, double p,
                                          InnerMode mode, double epsilon) {
  OtddOptions opts;
  opts.p = p;
  opts.inner = mode;
  opts.epsilon = epsilon;
  return label_distance_matrix(dyn, stat, opts);
}

Tensor joint_ground_cost(const LabeledEmbeddingSet& dyn, const LabeledEmbeddingSet& stat,
                         const LabelDistanceMatrix& ldm, double p) {
  dyn.validate();
  stat.validate();
  require(dyn.width() == stat.width(), ErrorKind::ShapeMismatch,
          "joint cost needs a shared feature width");
  require(ldm.dist.rows() >= static_cast<std::size_t>(dyn.num_classes) &&
              ldm.dist.cols() >= static_cast<std::size_t>(stat.num_classes),
          ErrorKind::MissingLabelEntry, "label distance matrix does not cover all classes");
  Tensor dp = ot::pairwise_pow_l2(dyn.features, stat.features, p);
  Tensor out({dyn.size(), stat.size()});
  for (std::size_t i = 0; i < dyn.size(); ++i)
    for (std::size_t j = 0; j < stat.size(); ++j) {
      const double dy = ldm.dist.at(static_cast<std::size_t>(dyn.labels[i]),
                                    static_cast<std::size_t>(stat.labels[j]));
      out.at(i, j) = std::pow(dp.at(i, j) + std::pow(dy, p), 1.0 / p);
    }
  return out;
}

namespace {

// Transport value over the joint feature-label cost, with the label matrix
// supplied by the caller. Returns the plan and the p-th-power cost matrix of
// feature distances for envelope reuse.
struct JointSolve {
  ot::TransportPlan plan;
  double distance = 0.0;
};

JointSolve solve_joint(const Tensor& dyn_feat, const std::vector<int>& dyn_labels,
                       const LabeledEmbeddingSet& stat, const Tensor& label_dist,
                       const OtddOptions& opts) {
  Tensor cp = ot::pairwise_pow_l2(dyn_feat, stat.features, opts.p);
  for (std::size_t i = 0; i < cp.rows(); ++i)
    for (std::size_t j = 0; j < cp.cols(); ++j) {
      const double dy = label_dist.at(static_cast<std::size_t>(dyn_labels[i]),
                                      static_cast<std::size_t>(stat.labels[j]));
      cp.at(i, j) += std::pow(dy, opts.p);
    }
  JointSolve out;
  out.plan = solve_cost(cp, opts);
  out.distance = root_p(out.plan.cost_value, opts.p);
  return out;
}

}  // namespace

double otdd_exact(const LabeledEmbeddingSet& dyn, const LabeledEmbeddingSet& stat,
                  const OtddOptions& opts) {
  const LabelDistanceMatrix ldm = label_distance_matrix(dyn, stat, opts);
  const double d_ab = solve_joint(dyn.features, dyn.labels, stat, ldm.dist, opts).distance;
  if (!opts.debias) return d_ab;
  const LabelDistanceMatrix laa = label_distance_matrix(dyn, dyn, opts);
  const LabelDistanceMatrix lbb = label_distance_matrix(stat, stat, opts);
  const double vaa =
      std::pow(solve_joint(dyn.features, dyn.labels, dyn, laa.dist, opts).distance, opts.p);
  const double vbb =
      std::pow(solve_joint(stat.features, stat.labels, stat, lbb.dist, opts).distance, opts.p);
  const double vab = std::pow(d_ab, opts.p);
  return root_p(vab - 0.5 * vaa - 0.5 * vbb, opts.p);
}

double otdd_exact(const LabeledEmbeddingSet& dyn, const LabeledEmbeddingSet& stat, double p,
                  double epsilon) {
  OtddOptions opts;
  opts.p = p;
  opts.epsilon = epsilon;
  opts.inner = InnerMode::Exact;
  return otdd_exact(dyn, stat, opts);
}

std::vector<AlignmentLossTerm> alignment_loss_terms(const Tensor& dyn_features,
                                                    const std::vector<int>& dyn_labels,
                                                    const std::vector<double>& class_weights,
                                                    const LabeledEmbeddingSet& stat, int b, int R,
                                                    const OtddOptions& opts, RngState& rng) {
  require(b >= 1 && R >= 1, ErrorKind::InvalidBudget, "subsample size and rounds must be >= 1");
  stat.validate();
  require(dyn_features.rank() == 2 && dyn_features.rows() == dyn_labels.size(),
          ErrorKind::LengthMismatch, "one label per dyn feature row required");
  require(dyn_features.cols() == stat.width(), ErrorKind::ShapeMismatch,
          "alignment needs a shared feature width");
  const auto stat_idx = nonempty_class_indices(stat, "stat");
  const std::size_t n_stat = stat.size();

  // class membership on the dyn side; absent classes contribute no terms
  const std::size_t num_classes = class_weights.size();
  std::vector<std::vector<std::size_t>> dyn_idx(num_classes);
  for (std::size_t i = 0; i < dyn_labels.size(); ++i) {
    require(dyn_labels[i] >= 0 && static_cast<std::size_t>(dyn_labels[i]) < num_classes,
            ErrorKind::MissingLabelEntry, "dyn label outside the class weight table");
    dyn_idx[static_cast<std::size_t>(dyn_labels[i])].push_back(i);
  }

  std::vector<GaussianStats> stat_gauss;
  std::vector<Tensor> stat_feat;
  if (opts.inner == InnerMode::Gaussian)
    for (const auto& rows : stat_idx) stat_gauss.push_back(fit_gaussian(stat.features, rows));
  else
    for (const auto& rows : stat_idx) stat_feat.push_back(gather_rows(stat.features, rows));

  // all subsamples are drawn first so solver order cannot disturb the stream
  std::vector<AlignmentLossTerm> terms;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (dyn_idx[c].empty()) continue;
    const std::size_t b_eff = std::min<std::size_t>(static_cast<std::size_t>(b),
                                                    dyn_idx[c].size());
    for (int r = 0; r < R; ++r) {
      AlignmentLossTerm term;
      term.dyn_class = static_cast<int>(c);
      term.round = r;
      term.weight = class_weights[c] / static_cast<double>(R);
      const auto pick = rng.sample_without_replacement(dyn_idx[c].size(), b_eff);
      term.rows.reserve(b_eff);
      for (std::size_t k : pick) term.rows.push_back(dyn_idx[c][k]);
      terms.push_back(std::move(term));
    }
  }

  const std::size_t K_stat = stat_idx.size();
  for (AlignmentLossTerm& term : terms) {
    const Tensor sub = gather_rows(dyn_features, term.rows);
    const std::size_t b_eff = term.rows.size();

    // label distance from the subsample's own empirical conditional
    std::vector<double> dy_pow(K_stat);
    std::vector<ot::TransportPlan> inner_plans;
    if (opts.inner == InnerMode::Gaussian) {
      const GaussianStats g = fit_gaussian(sub, [&] {
        std::vector<std::size_t> all(b_eff);
        for (std::size_t i = 0; i < b_eff; ++i) all[i] = i;
        return all;
      }());
      for (std::size_t k = 0; k < K_stat; ++k)
        dy_pow[k] = std::pow(bures_w2(g, stat_gauss[k]), opts.p);
    } else {
      inner_plans.reserve(K_stat);
      for (std::size_t k = 0; k < K_stat; ++k) {
        const Tensor cost = ot::pairwise_pow_l2(sub, stat_feat[k], opts.p);
        inner_plans.push_back(solve_cost(cost, opts));
        dy_pow[k] = std::max(inner_plans.back().cost_value, 0.0);
      }
    }

    Tensor cp = ot::pairwise_pow_l2(sub, stat.features, opts.p);
    for (std::size_t i = 0; i < b_eff; ++i)
      for (std::size_t j = 0; j < n_stat; ++j)
        cp.at(i, j) += dy_pow[static_cast<std::size_t>(stat.labels[j])];
    const ot::TransportPlan outer = solve_cost(cp, opts);
    term.value = root_p(outer.cost_value, opts.p);

    // freeze the couplings into a single coefficient matrix over the full
    // static set; the label term becomes either extra coefficients (exact
    // conditionals) or an additive constant (gaussian conditionals)
    term.coeff = outer.plan;
    term.constant = 0.0;
    if (opts.inner == InnerMode::Gaussian) {
      for (std::size_t j = 0; j < n_stat; ++j) {
        double col_mass = 0.0;
        for (std::size_t i = 0; i < b_eff; ++i) col_mass += outer.plan.at(i, j);
        term.constant += col_mass * dy_pow[static_cast<std::size_t>(stat.labels[j])];
      }
    } else {
      std::vector<double> class_mass(K_stat, 0.0);
      for (std::size_t j = 0; j < n_stat; ++j) {
        double col_mass = 0.0;
        for (std::size_t i = 0; i < b_eff; ++i) col_mass += outer.plan.at(i, j);
        class_mass[static_cast<std::size_t>(stat.labels[j])] += col_mass;
      }
      for (std::size_t k = 0; k < K_stat; ++k) {
        const ot::TransportPlan& ip = inner_plans[k];
        for (std::size_t jj = 0; jj < stat_idx[k].size(); ++jj) {
          const std::size_t j = stat_idx[k][jj];
          for (std::size_t i = 0; i < b_eff; ++i)
            term.coeff.at(i, j) += class_mass[k] * ip.plan.at(i, jj);
        }
      }
    }
  }
  return terms;
}

OtddEstimate otdd_class_weighted_stochastic(const LabeledEmbeddingSet& dyn,
                                            const LabeledEmbeddingSet& stat, int b, int R,
                                            const OtddOptions& opts, RngState& rng) {
  require(b >= 1 && R >= 1, ErrorKind::InvalidBudget, "subsample size and rounds must be >= 1");
  dyn.validate();
  nonempty_class_indices(dyn, "dyn");

  const std::size_t K = static_cast<std::size_t>(dyn.num_classes);
  std::vector<double> weights(K, 0.0);
  for (int y : dyn.labels) weights[static_cast<std::size_t>(y)] += 1.0;
  for (double& w : weights) w /= static_cast<double>(dyn.size());

  const auto terms =
      alignment_loss_terms(dyn.features, dyn.labels, weights, stat, b, R, opts, rng);

  OtddEstimate est;
  est.rounds = R;
  est.subsample = b;
  est.weights = weights;
  est.per_class.assign(K, 0.0);
  est.per_round = Tensor({K, static_cast<std::size_t>(R)});
  for (const auto& term : terms)
    est.per_round.at(static_cast<std::size_t>(term.dyn_class),
                     static_cast<std::size_t>(term.round)) = term.value;
  for (std::size_t c = 0; c < K; ++c) {
    double s = 0.0;
    for (int r = 0; r < R; ++r) s += est.per_round.at(c, static_cast<std::size_t>(r));
    est.per_class[c] = s / static_cast<double>(R);
    est.aggregate += weights[c] * est.per_class[c];
  }
  return est;
}

double mmd(const Tensor& dyn, const Tensor& stat, double bandwidth) {
  require(bandwidth > 0.0, ErrorKind::NonPositiveBandwidth, "bandwidth must be positive");
  require(dyn.rank() == 2 && stat.rank() == 2 && dyn.cols() == stat.cols(),
          ErrorKind::ShapeMismatch, "mmd needs matching feature widths");
  require(dyn.rows() >= 1 && stat.rows() >= 1, ErrorKind::EmptyDataset, "mmd needs samples");
  const double inv2bw2 = 1.0 / (2.0 * bandwidth * bandwidth);
  auto mean_kernel = [&](const Tensor& x, const Tensor& y) {
    const Tensor sq = ot::pairwise_sq_l2(x, y);
    double s = 0.0;
    for (double v : sq.vec()) s += std::exp(-v * inv2bw2);
    return s / static_cast<double>(sq.numel());
  };
  const double m2 =
      mean_kernel(dyn, dyn) + mean_kernel(stat, stat) - 2.0 * mean_kernel(dyn, stat);
  return std::sqrt(std::max(m2, 0.0));
}

double cka(const Tensor& dyn, const Tensor& stat) {
  require(dyn.rank() == 2 && stat.rank() == 2, ErrorKind::ShapeMismatch, "cka expects 2-D inputs");
  require(dyn.rows() == stat.rows(), ErrorKind::RowCountMismatch,
          "cka compares paired representations, row counts must match");
  require(dyn.rows() >= 2, ErrorKind::RowCountMismatch, "cka needs at least two rows");
  auto center = [](const Tensor& x) {
    Tensor out = x;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      double mu = 0.0;
      for (std::size_t i = 0; i < x.rows(); ++i) mu += x.at(i, j);
      mu /= static_cast<double>(x.rows());
      for (std::size_t i = 0; i < x.rows(); ++i) out.at(i, j) -= mu;
    }
    return out;
  };
  auto frob = [](const Tensor& m) {
    double s = 0.0;
    for (double v : m.vec()) s += v * v;
    return std::sqrt(s);
  };
  const Tensor xc = center(dyn), yc = center(stat);
  const double sx = frob(matmul(transpose(xc), xc));
  const double sy = frob(matmul(transpose(yc), yc));
  require(sx > 0.0 && sy > 0.0, ErrorKind::DegenerateInput, "cka input is zero after centering");
  const Tensor cross = matmul(transpose(yc), xc);
  double h = 0.0;
  for (double v : cross.vec()) h += v * v;
  return h / (sx * sy);
}

double mean_euclidean(const Tensor& dyn, const Tensor& stat) {
  require(dyn.rank() == 2 && stat.rank() == 2 && dyn.cols() == stat.cols(),
          ErrorKind::ShapeMismatch, "mean_euclidean needs matching feature widths");
  require(dyn.rows() >= 1 && stat.rows() >= 1, ErrorKind::EmptyDataset, "empty feature set");
  double sq = 0.0;
  for (std::size_t c = 0; c < dyn.cols(); ++c) {
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < dyn.rows(); ++i) ma += dyn.at(i, c);
    for (std::size_t i = 0; i < stat.rows(); ++i) mb += stat.at(i, c);
    ma /= static_cast<double>(dyn.rows());
    mb /= static_cast<double>(stat.rows());
    sq += (ma - mb) * (ma - mb);
  }
  return std::sqrt(sq);
}

}  // namespace ata::otdd
