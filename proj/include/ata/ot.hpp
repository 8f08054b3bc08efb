#pragma once

#include <vector>

#include "ata/tensor.hpp"

namespace ata::ot {

struct DiscreteMeasure {
  std::vector<double> w;  // non-negative, sums to 1

  static DiscreteMeasure uniform(std::size_t n);
  std::size_t size() const { return w.size(); }
  void validate() const;
  bool is_uniform(double tol = 1e-12) const;
};

struct TransportPlan {
  Tensor plan;  // n x m, non-negative
  DiscreteMeasure source;
  DiscreteMeasure target;
  double epsilon = 0.0;
  double cost_value = 0.0;      // <plan, cost>, the unregularized transport cost
  double entropic_value = 0.0;  // epsilon * sum plan (log plan - 1)
  double marginal_violation = 0.0;  // L1 over both marginals
  int iterations = 0;
  bool converged = true;
};

struct SinkhornOptions {
  double epsilon = 0.1;
  int max_iter = 2000;
  double tol = 1e-6;            // L1 marginal violation, checked every 10 iterations
  bool normalize_cost = false;  // solve on cost / median(cost); value reported on raw cost
};

// Log-domain Sinkhorn with running-max stabilization. Non-convergence within
// max_iter is reported through the converged flag, never thrown.
TransportPlan sinkhorn(const Tensor& cost, const DiscreteMeasure& a, const DiscreteMeasure& b,
                       const SinkhornOptions& opts);
TransportPlan sinkhorn(const Tensor& cost, const DiscreteMeasure& a, const DiscreteMeasure& b,
                       double epsilon, int max_iter = 2000, double tol = 1e-6);

// Exact solver, capped at n, m <= 8. Uniform square instances are solved by
// enumerating permutation couplings; the rest by the transportation simplex
// started from the north-west corner.
TransportPlan exact_ot(const Tensor& cost, const DiscreteMeasure& a, const DiscreteMeasure& b);

// Closed-form p-Wasserstein between two equal-size uniform samples on the
// line; monotone matching is optimal.
double wasserstein_1d(std::vector<double> xs, std::vector<double> ys, double p);

// C[i,j] = ||x_i - y_j||_2^2
Tensor pairwise_sq_l2(const Tensor& x, const Tensor& y);
// C[i,j] = ||x_i - y_j||_2^p
Tensor pairwise_pow_l2(const Tensor& x, const Tensor& y, double p);

}  // namespace ata::ot
