#include "doctest.h"

#include <cmath>
#include <cstring>

#include "ata/otdd.hpp"

using namespace ata;
using namespace ata::otdd;

namespace {

Tensor random_features(std::size_t n, std::size_t e, RngState& rng, double shift = 0.0) {
  Tensor t({n, e});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1, 1) + shift;
  return t;
}

LabeledEmbeddingSet random_set(std::size_t n, std::size_t e, int classes, RngState& rng,
                               double shift = 0.0) {
  LabeledEmbeddingSet s;
  s.features = random_features(n, e, rng, shift);
  s.num_classes = classes;
  for (std::size_t i = 0; i < n; ++i) s.labels.push_back(static_cast<int>(i % classes));
  return s;
}

OtddOptions exact_opts() {
  OtddOptions o;
  o.inner = InnerMode::Exact;
  o.solver = SolverKind::Exact;
  return o;
}

}  // namespace

TEST_CASE("gaussian label distances have an exactly zero diagonal on identical sets") {
  RngState rng(21);
  LabeledEmbeddingSet s = random_set(12, 4, 3, rng);
  OtddOptions opts;  // gaussian inner
  LabelDistanceMatrix ldm = label_distance_matrix(s, s, opts);
  for (std::size_t k = 0; k < 3; ++k) CHECK(ldm.dist.at(k, k) == 0.0);
}

TEST_CASE("single-point class conditionals reduce to point distances") {
  LabeledEmbeddingSet a, b;
  a.features = Tensor::from_rows({{0.0, 0.0}});
  a.labels = {0};
  a.num_classes = 1;
  b.features = Tensor::from_rows({{3.0, 4.0}});
  b.labels = {0};
  b.num_classes = 1;
  for (InnerMode mode : {InnerMode::Gaussian, InnerMode::Exact}) {
    OtddOptions opts;
    opts.inner = mode;
    opts.solver = SolverKind::Exact;
    LabelDistanceMatrix ldm = label_distance_matrix(a, b, opts);
    CHECK(ldm.dist.at(0, 0) == doctest::Approx(5.0).epsilon(1e-9));
    LabelDistanceMatrix self = label_distance_matrix(a, a, opts);
    CHECK(self.dist.at(0, 0) == doctest::Approx(0.0));
  }
}

TEST_CASE("gaussian label distance matches the diagonal Bures formula") {
  RngState rng(22);
  // two synthetic diagonal-gaussian clusters
  const std::size_t n = 400, e = 3;
  const double m1[3] = {0.2, -0.5, 1.0}, s1[3] = {0.4, 0.9, 0.2};
  const double m2[3] = {-0.3, 0.7, 0.1}, s2[3] = {1.1, 0.3, 0.6};
  LabeledEmbeddingSet a, b;
  a.features = Tensor({n, e});
  b.features = Tensor({n, e});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < e; ++c) {
      a.features.at(i, c) = m1[c] + s1[c] * rng.normal();
      b.features.at(i, c) = m2[c] + s2[c] * rng.normal();
    }
  a.labels.assign(n, 0);
  b.labels.assign(n, 0);
  a.num_classes = b.num_classes = 1;

  // independent oracle from the empirical moments of the same samples
  double mean_a[3] = {0, 0, 0}, mean_b[3] = {0, 0, 0};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < e; ++c) {
      mean_a[c] += a.features.at(i, c) / n;
      mean_b[c] += b.features.at(i, c) / n;
    }
  double var_a[3] = {0, 0, 0}, var_b[3] = {0, 0, 0};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < e; ++c) {
      var_a[c] += (a.features.at(i, c) - mean_a[c]) * (a.features.at(i, c) - mean_a[c]) / n;
      var_b[c] += (b.features.at(i, c) - mean_b[c]) * (b.features.at(i, c) - mean_b[c]) / n;
    }
  double sq = 0.0;
  for (std::size_t c = 0; c < e; ++c) {
    sq += (mean_a[c] - mean_b[c]) * (mean_a[c] - mean_b[c]);
    sq += (std::sqrt(var_a[c]) - std::sqrt(var_b[c])) * (std::sqrt(var_a[c]) - std::sqrt(var_b[c]));
  }
  OtddOptions opts;
  LabelDistanceMatrix ldm = label_distance_matrix(a, b, opts);
  CHECK(ldm.dist.at(0, 0) == doctest::Approx(std::sqrt(sq)).epsilon(1e-9));
}

TEST_CASE("joint cost with a zero label matrix is the feature distance") {
  RngState rng(23);
  LabeledEmbeddingSet a = random_set(6, 3, 2, rng);
  LabeledEmbeddingSet b = random_set(5, 3, 2, rng);
  LabelDistanceMatrix zero{Tensor({2, 2}), 2.0};
  Tensor c = joint_ground_cost(a, b, zero, 2.0);
  Tensor feat = ot::pairwise_pow_l2(a.features, b.features, 2.0);
  for (std::size_t i = 0; i < c.numel(); ++i)
    CHECK(std::fabs(c[i] - std::sqrt(feat[i])) <= 1e-12);
}

TEST_CASE("joint cost composes like a 3-4-5 triangle") {
  LabeledEmbeddingSet a, b;
  a.features = Tensor::from_rows({{0.0}});
  a.labels = {0};
  a.num_classes = 1;
  b.features = Tensor::from_rows({{3.0}});
  b.labels = {0};
  b.num_classes = 1;
  LabelDistanceMatrix ldm{Tensor({1, 1}, {4.0}), 2.0};
  CHECK(joint_ground_cost(a, b, ldm, 2.0).at(0, 0) == doctest::Approx(5.0).epsilon(1e-12));

  LabelDistanceMatrix zero{Tensor({1, 1}), 2.0};
  CHECK(joint_ground_cost(a, a, zero, 2.0).at(0, 0) == 0.0);
}

TEST_CASE("otdd self-distance vanishes with exact solvers") {
  RngState rng(24);
  LabeledEmbeddingSet s = random_set(8, 3, 2, rng);
  CHECK(otdd_exact(s, s, exact_opts()) <= 1e-9);
}

TEST_CASE("otdd between label-matched singletons is the feature distance") {
  LabeledEmbeddingSet a, b;
  a.features = Tensor::from_rows({{0.0, 0.0}});
  a.labels = {0};
  a.num_classes = 1;
  b.features = Tensor::from_rows({{0.6, 0.8}});
  b.labels = {0};
  b.num_classes = 1;
  // the label distance between the two singleton conditionals is also 1,
  // so the joint cost is sqrt(1 + 1)
  CHECK(otdd_exact(a, b, exact_opts()) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));
}

TEST_CASE("otdd via sinkhorn matches exact transport on the same joint cost") {
  RngState rng(25);
  LabeledEmbeddingSet a = random_set(8, 3, 2, rng);
  LabeledEmbeddingSet b = random_set(8, 3, 2, rng, 0.4);
  OtddOptions opts = exact_opts();
  const double reference = otdd_exact(a, b, opts);

  OtddOptions entropic = opts;
  entropic.solver = SolverKind::Sinkhorn;
  entropic.epsilon = 1e-3;
  entropic.max_iter = 200000;
  const double approx = otdd_exact(a, b, entropic);
  CHECK(approx >= reference - 1e-9);
  CHECK(approx <= reference * 1.01 + 1e-9);
}

TEST_CASE("stochastic estimate collapses to the per-class OTDD") {
  RngState rng(26);
  // sizes respect the exact solver cap: subsamples x static stay within 8x8
  LabeledEmbeddingSet dyn = random_set(9, 3, 3, rng);
  LabeledEmbeddingSet stat = random_set(8, 3, 2, rng, 0.3);
  OtddOptions opts = exact_opts();
  RngState est_rng(5);
  OtddEstimate est = otdd_class_weighted_stochastic(dyn, stat, 100, 1, opts, est_rng);

  double expected_aggregate = 0.0;
  const auto idx = dyn.class_indices();
  for (int c = 0; c < 3; ++c) {
    LabeledEmbeddingSet slice;
    slice.num_classes = 1;
    slice.features = Tensor({idx[c].size(), 3});
    for (std::size_t i = 0; i < idx[c].size(); ++i) {
      for (std::size_t k = 0; k < 3; ++k)
        slice.features.at(i, k) = dyn.features.at(idx[c][i], k);
      slice.labels.push_back(0);
    }
    const double d_c = otdd_exact(slice, stat, opts);
    CHECK(std::fabs(est.per_class[c] - d_c) <= 1e-9);
    expected_aggregate += est.weights[c] * d_c;
  }
  CHECK(std::fabs(est.aggregate - expected_aggregate) <= 1e-9);
}

TEST_CASE("class weights follow class sizes") {
  RngState rng(27);
  LabeledEmbeddingSet dyn;
  dyn.num_classes = 2;
  dyn.features = random_features(40, 2, rng);
  for (int i = 0; i < 10; ++i) dyn.labels.push_back(0);
  for (int i = 0; i < 30; ++i) dyn.labels.push_back(1);
  LabeledEmbeddingSet stat = random_set(8, 2, 2, rng);
  RngState est_rng(6);
  OtddEstimate est = otdd_class_weighted_stochastic(dyn, stat, 4, 2, exact_opts(), est_rng);
  CHECK(est.weights[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(est.weights[1] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(est.weights[0] + est.weights[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("stochastic estimate is bit-reproducible under a fixed seed") {
  RngState rng(28);
  LabeledEmbeddingSet dyn = random_set(24, 3, 2, rng);
  LabeledEmbeddingSet stat = random_set(10, 3, 2, rng, 0.2);
  OtddOptions opts;  // gaussian + sinkhorn defaults
  RngState r1(77), r2(77);
  OtddEstimate e1 = otdd_class_weighted_stochastic(dyn, stat, 5, 4, opts, r1);
  OtddEstimate e2 = otdd_class_weighted_stochastic(dyn, stat, 5, 4, opts, r2);
  CHECK(std::memcmp(&e1.aggregate, &e2.aggregate, sizeof(double)) == 0);
  CHECK(e1.per_round.max_abs_diff(e2.per_round) == 0.0);
  CHECK(e1.per_class == e2.per_class);
}

TEST_CASE("estimator validates inputs") {
  RngState rng(29);
  LabeledEmbeddingSet dyn = random_set(6, 2, 2, rng);
  LabeledEmbeddingSet stat = random_set(6, 2, 2, rng);
  RngState r(1);
  CHECK_THROWS_AS(otdd_class_weighted_stochastic(dyn, stat, 0, 1, exact_opts(), r), Error);
  CHECK_THROWS_AS(otdd_class_weighted_stochastic(dyn, stat, 4, 0, exact_opts(), r), Error);
  LabeledEmbeddingSet gap = dyn;
  gap.num_classes = 3;  // class 2 has no members
  CHECK_THROWS_AS(otdd_class_weighted_stochastic(gap, stat, 4, 1, exact_opts(), r), Error);
}

TEST_CASE("more rounds shrink the estimator's spread") {
  RngState rng(30);
  LabeledEmbeddingSet dyn = random_set(48, 3, 2, rng);
  LabeledEmbeddingSet stat = random_set(16, 3, 2, rng, 0.5);
  OtddOptions opts;  // gaussian + sinkhorn keeps this quick
  auto spread = [&](int rounds) {
    std::vector<double> vals;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      RngState r(seed);
      vals.push_back(
          otdd_class_weighted_stochastic(dyn, stat, 8, rounds, opts, r).aggregate);
    }
    double mean = 0.0;
    for (double v : vals) mean += v / vals.size();
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean) / vals.size();
    return std::sqrt(var);
  };
  CHECK(spread(16) <= spread(1));
}

TEST_CASE("alignment terms reproduce the estimate and freeze the couplings") {
  RngState rng(31);
  LabeledEmbeddingSet dyn = random_set(14, 3, 2, rng);
  LabeledEmbeddingSet stat = random_set(10, 3, 2, rng, 0.2);
  std::vector<double> weights{6.0 / 14.0, 8.0 / 14.0};
  for (InnerMode mode : {InnerMode::Gaussian, InnerMode::Exact}) {
    OtddOptions opts;
    opts.inner = mode;
    RngState r(9);
    auto terms = alignment_loss_terms(dyn.features, dyn.labels, weights, stat, 4, 2, opts, r);
    REQUIRE(terms.size() == 4);  // 2 classes x 2 rounds
    for (const auto& term : terms) {
      // <coeff, D_p> + constant reproduces the solver's transport value
      double v = 0.0;
      for (std::size_t i = 0; i < term.rows.size(); ++i)
        for (std::size_t j = 0; j < stat.size(); ++j) {
          double sq = 0.0;
          for (std::size_t c = 0; c < 3; ++c) {
            const double d = dyn.features.at(term.rows[i], c) - stat.features.at(j, c);
            sq += d * d;
          }
          v += term.coeff.at(i, j) * sq;
        }
      v += term.constant;
      CHECK(std::pow(std::max(v, 0.0), 0.5) == doctest::Approx(term.value).epsilon(1e-9));
    }
  }
}

TEST_CASE("mmd basics, limit case and kernel-sum oracle") {
  RngState rng(32);
  Tensor x = random_features(6, 3, rng);
  CHECK(mmd(x, x, 1.0) <= 1e-12);

  Tensor y = random_features(5, 3, rng, 0.3);
  CHECK(mmd(x, y, 1e6) <= 1e-6);  // kernel flattens to a constant

  const double bw = 0.8;
  auto kernel = [&](const double* a, const double* b) {
    double sq = 0.0;
    for (int c = 0; c < 3; ++c) sq += (a[c] - b[c]) * (a[c] - b[c]);
    return std::exp(-sq / (2.0 * bw * bw));
  };
  double kxx = 0, kyy = 0, kxy = 0;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) kxx += kernel(x.data() + 3 * i, x.data() + 3 * j);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) kyy += kernel(y.data() + 3 * i, y.data() + 3 * j);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 5; ++j) kxy += kernel(x.data() + 3 * i, y.data() + 3 * j);
  const double m2 = kxx / 36.0 + kyy / 25.0 - 2.0 * kxy / 30.0;
  CHECK(mmd(x, y, bw) == doctest::Approx(std::sqrt(std::max(0.0, m2))).epsilon(1e-10));

  CHECK_THROWS_AS(mmd(x, y, 0.0), Error);
}

TEST_CASE("cka is 1 on itself, scale-invariant and rotation-invariant") {
  RngState rng(33);
  Tensor x = random_features(8, 4, rng);
  CHECK(cka(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cka(x, scale(x, -3.7)) == doctest::Approx(1.0).epsilon(1e-12));

  // orthogonal rotation via Gram-Schmidt on a random gaussian matrix
  Tensor q({4, 4});
  for (std::size_t j = 0; j < 4; ++j) {
    std::vector<double> col(4);
    for (auto& v : col) v = rng.normal();
    for (std::size_t prev = 0; prev < j; ++prev) {
      double dot = 0.0;
      for (std::size_t i = 0; i < 4; ++i) dot += col[i] * q.at(i, prev);
      for (std::size_t i = 0; i < 4; ++i) col[i] -= dot * q.at(i, prev);
    }
    double norm = 0.0;
    for (double v : col) norm += v * v;
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < 4; ++i) q.at(i, j) = col[i] / norm;
  }
  CHECK(cka(x, matmul(x, q)) == doctest::Approx(1.0).epsilon(1e-9));

  Tensor short_y = random_features(5, 4, rng);
  CHECK_THROWS_AS(cka(x, short_y), Error);
  CHECK_THROWS_AS(cka(Tensor({4, 2}), Tensor({4, 2})), Error);  // zero after centering
}

TEST_CASE("mean_euclidean basics and oracle") {
  RngState rng(34);
  Tensor x = random_features(7, 2, rng);
  CHECK(mean_euclidean(x, x) == 0.0);

  Tensor a = Tensor::from_rows({{0.0, 0.0}, {0.0, 0.0}});
  Tensor b = Tensor::from_rows({{3.0, 4.0}});
  CHECK(mean_euclidean(a, b) == doctest::Approx(5.0).epsilon(1e-12));

  Tensor y = random_features(9, 2, rng, 0.3);
  double m1[2] = {0, 0}, m2[2] = {0, 0};
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t c = 0; c < 2; ++c) m1[c] += x.at(i, c) / 7.0;
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t c = 0; c < 2; ++c) m2[c] += y.at(i, c) / 9.0;
  const double expected = std::hypot(m1[0] - m2[0], m1[1] - m2[1]);
  CHECK(mean_euclidean(x, y) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("every distance stays non-negative on random inputs") {
  RngState rng(35);
  for (int trial = 0; trial < 5; ++trial) {
    LabeledEmbeddingSet a = random_set(8, 3, 2, rng);
    LabeledEmbeddingSet b = random_set(8, 3, 2, rng, rng.uniform(-0.5, 0.5));
    OtddOptions opts;
    CHECK(otdd_exact(a, b, opts) >= -1e-12);
    CHECK(mmd(a.features, b.features, 1.0) >= -1e-12);
    CHECK(cka(a.features, b.features) >= -1e-12);
    CHECK(mean_euclidean(a.features, b.features) >= -1e-12);
    CHECK(ot::wasserstein_1d({0, 1, 2}, {0.5, 1.5, 2.5}, 2.0) >= -1e-12);
  }
}
