#include "ata/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ata::ot {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::size_t kExactCap = 8;

double log_sum_exp(const double* v, std::size_t n) {
  double mx = kNegInf;
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, v[i]);
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

double median_of(const std::vector<double>& v) {
  std::vector<double> c = v;
  std::size_t mid = c.size() / 2;
  std::nth_element(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(mid), c.end());
  return c[mid];
}

void finish_plan(TransportPlan& tp, const Tensor& raw_cost) {
  double cost = 0.0, ent = 0.0;
  for (std::size_t i = 0; i < tp.plan.numel(); ++i) {
    const double p = tp.plan[i];
    cost += p * raw_cost[i];
    if (p > 0.0) ent += p * (std::log(p) - 1.0);
  }
  tp.cost_value = cost;
  tp.entropic_value = tp.epsilon * ent;
}

double marginal_violation_l1(const Tensor& plan, const DiscreteMeasure& a,
                             const DiscreteMeasure& b) {
  const std::size_t n = plan.rows(), m = plan.cols();
  double viol = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < m; ++j) r += plan.at(i, j);
    viol += std::fabs(r - a.w[i]);
  }
  for (std::size_t j = 0; j < m; ++j) {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += plan.at(i, j);
    viol += std::fabs(c - b.w[j]);
  }
  return viol;
}

// Project a nearly-feasible plan onto exact marginals: clamp row and column
// sums from above, then spread the residual mass as a rank-1 correction. The
// result is feasible, so its cost can never undercut the exact optimum.
void round_to_marginals(Tensor& plan, const DiscreteMeasure& a, const DiscreteMeasure& b) {
  const std::size_t n = plan.rows(), m = plan.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < m; ++j) r += plan.at(i, j);
    if (r > a.w[i] && r > 0.0) {
      const double s = a.w[i] / r;
      for (std::size_t j = 0; j < m; ++j) plan.at(i, j) *= s;
    }
  }
  std::vector<double> col(m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) col[j] += plan.at(i, j);
  for (std::size_t j = 0; j < m; ++j) {
    if (col[j] > b.w[j] && col[j] > 0.0) {
      const double s = b.w[j] / col[j];
      for (std::size_t i = 0; i < n; ++i) plan.at(i, j) *= s;
    }
  }
  std::vector<double> err_a(n, 0.0), err_b(m, 0.0);
  double total_err = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < m; ++j) r += plan.at(i, j);
    err_a[i] = std::max(a.w[i] - r, 0.0);
    total_err += err_a[i];
  }
  for (std::size_t j = 0; j < m; ++j) {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += plan.at(i, j);
    err_b[j] = std::max(b.w[j] - c, 0.0);
  }
  if (total_err > 0.0)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) plan.at(i, j) += err_a[i] * err_b[j] / total_err;
}

}  // namespace

DiscreteMeasure DiscreteMeasure::uniform(std::size_t n) {
  DiscreteMeasure m;
  m.w.assign(n, 1.0 / static_cast<double>(n));
  return m;
}

void DiscreteMeasure::validate() const {
  require(!w.empty(), ErrorKind::EmptyDataset, "measure has no support");
  double s = 0.0;
  for (double x : w) {
    require(x >= 0.0, ErrorKind::ShapeMismatch, "measure weights must be non-negative");
    s += x;
  }
  require(std::fabs(s - 1.0) <= 1e-9, ErrorKind::ShapeMismatch, "measure weights must sum to 1");
}

bool DiscreteMeasure::is_uniform(double tol) const {
  const double u = 1.0 / static_cast<double>(w.size());
  for (double x : w)
    if (std::fabs(x - u) > tol) return false;
  return true;
}

TransportPlan sinkhorn(const Tensor& cost, const DiscreteMeasure& a, const DiscreteMeasure& b,
                       const SinkhornOptions& opts) {
  require(opts.epsilon > 0.0, ErrorKind::NegativeEpsilon, "sinkhorn needs epsilon > 0");
  require(cost.rank() == 2, ErrorKind::ShapeMismatch, "cost must be 2-D");
  require(cost.all_finite(), ErrorKind::ShapeMismatch, "cost must be finite");
  const std::size_t n = cost.rows(), m = cost.cols();
  require(a.size() == n && b.size() == m, ErrorKind::ShapeMismatch,
          "marginal sizes must match the cost matrix");
  a.validate();
  b.validate();

  Tensor c = cost;
  if (opts.normalize_cost) {
    const double med = median_of(cost.vec());
    if (med > 0.0)
      for (auto& v : c.vec()) v /= med;
  }

  std::vector<double> log_a(n), log_b(m);
  for (std::size_t i = 0; i < n; ++i) log_a[i] = a.w[i] > 0.0 ? std::log(a.w[i]) : kNegInf;
  for (std::size_t j = 0; j < m; ++j) log_b[j] = b.w[j] > 0.0 ? std::log(b.w[j]) : kNegInf;

  const double eps = opts.epsilon;
  std::vector<double> f(n, 0.0), g(m, 0.0), buf(std::max(n, m));

  TransportPlan tp;
  tp.source = a;
  tp.target = b;
  tp.epsilon = opts.epsilon;
  tp.plan = Tensor({n, m});
  tp.converged = false;

  auto build_plan = [&]() {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double l = (f[i] + g[j] - c.at(i, j)) / eps;
        tp.plan.at(i, j) = l == kNegInf ? 0.0 : std::exp(l);
      }
  };

  // epsilon scaling: warm-start the potentials from a loose regularization
  // and anneal geometrically; plain iteration stalls for epsilon near 1e-3
  double cost_max = 0.0;
  for (double v : c.vec()) cost_max = std::max(cost_max, std::fabs(v));
  std::vector<double> levels;
  for (double level = std::max(cost_max, eps); level > eps * 1.5; level *= 0.5)
    levels.push_back(level);
  levels.push_back(eps);

  int iter = 0;
  auto sweep = [&](double level) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) buf[j] = (g[j] - c.at(i, j)) / level;
      f[i] = log_a[i] == kNegInf ? kNegInf : level * (log_a[i] - log_sum_exp(buf.data(), m));
    }
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < n; ++i) buf[i] = (f[i] - c.at(i, j)) / level;
      g[j] = log_b[j] == kNegInf ? kNegInf : level * (log_b[j] - log_sum_exp(buf.data(), n));
    }
    ++iter;
  };

  for (std::size_t lv = 0; lv + 1 < levels.size() && iter < opts.max_iter; ++lv)
    for (int k = 0; k < 20 && iter < opts.max_iter; ++k) sweep(levels[lv]);
  while (iter < opts.max_iter) {
    sweep(eps);
    if (iter % 10 == 0 || iter == opts.max_iter) {
      build_plan();
      tp.marginal_violation = marginal_violation_l1(tp.plan, a, b);
      if (tp.marginal_violation <= opts.tol) {
        tp.converged = true;
        break;
      }
    }
  }
  if (!tp.converged) {
    build_plan();
    tp.marginal_violation = marginal_violation_l1(tp.plan, a, b);
    tp.converged = tp.marginal_violation <= opts.tol;
  }
  round_to_marginals(tp.plan, a, b);
  tp.marginal_violation = marginal_violation_l1(tp.plan, a, b);
  tp.iterations = iter;
  finish_plan(tp, cost);
  return tp;
}

TransportPlan sinkhorn(const Tensor& cost, const DiscreteMeasure& a, const DiscreteMeasure& b,
                       double epsilon, int max_iter, double tol) {
  SinkhornOptions opts;
  opts.epsilon = epsilon;
  opts.max_iter = max_iter;
  opts.tol = tol;
  return sinkhorn(cost, a, b, opts);
}

namespace {

TransportPlan exact_permutation(const Tensor& cost, const DiscreteMeasure& a,
                                const DiscreteMeasure& b) {
  const std::size_t n = cost.rows();
  std::vector<std::size_t> perm(n), best(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += cost.at(i, perm[i]);
    if (c < best_cost) {
      best_cost = c;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  TransportPlan tp;
  tp.source = a;
  tp.target = b;
  tp.plan = Tensor({n, n});
  const double u = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) tp.plan.at(i, best[i]) = u;
  tp.marginal_violation = 0.0;
  finish_plan(tp, cost);
  return tp;
}

// Transportation simplex: north-west-corner start, then pivoting on the first
// negative reduced cost in row-major order until optimal.
TransportPlan exact_simplex(const Tensor& cost, const DiscreteMeasure& a,
                            const DiscreteMeasure& b) {
  const std::size_t n = cost.rows(), m = cost.cols();
  std::vector<double> supply = a.w, demand = b.w;
  Tensor flow({n, m});
  std::vector<char> basic(n * m, 0);

  std::size_t i = 0, j = 0;
  while (true) {
    const double q = std::min(supply[i], demand[j]);
    flow.at(i, j) = q;
    basic[i * m + j] = 1;
    supply[i] -= q;
    demand[j] -= q;
    if (i == n - 1 && j == m - 1) break;
    if (i == n - 1) ++j;
    else if (j == m - 1) ++i;
    else if (supply[i] == 0.0) ++i;
    else ++j;
  }

  const int max_pivots = 100000;
  for (int pivot = 0; pivot < max_pivots; ++pivot) {
    // duals from the spanning basis
    std::vector<double> u(n, 0.0), v(m, 0.0);
    std::vector<char> u_set(n, 0), v_set(m, 0);
    u_set[0] = 1;
    bool progress = true;
    while (progress) {
      progress = false;
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) {
          if (!basic[r * m + c]) continue;
          if (u_set[r] && !v_set[c]) {
            v[c] = cost.at(r, c) - u[r];
            v_set[c] = 1;
            progress = true;
          } else if (!u_set[r] && v_set[c]) {
            u[r] = cost.at(r, c) - v[c];
            u_set[r] = 1;
            progress = true;
          }
        }
    }

    // entering cell: first negative reduced cost, row-major
    std::size_t ei = n, ej = m;
    for (std::size_t r = 0; r < n && ei == n; ++r)
      for (std::size_t c = 0; c < m; ++c) {
        if (basic[r * m + c]) continue;
        if (cost.at(r, c) - u[r] - v[c] < -1e-12) {
          ei = r;
          ej = c;
          break;
        }
      }
    if (ei == n) break;  // optimal

    // The basis is a spanning tree on rows+columns, so adding the entering
    // cell closes exactly one cycle; BFS from row ei finds the path to ej.
    std::vector<int> row_parent(n, -2), col_parent(m, -2);
    row_parent[ei] = -1;
    std::vector<std::pair<char, std::size_t>> queue{{'r', ei}};
    for (std::size_t head = 0; head < queue.size() && col_parent[ej] == -2; ++head) {
      const auto [kind, idx] = queue[head];
      if (kind == 'r') {
        for (std::size_t c = 0; c < m; ++c)
          if (basic[idx * m + c] && col_parent[c] == -2) {
            col_parent[c] = static_cast<int>(idx);
            queue.emplace_back('c', c);
          }
      } else {
        for (std::size_t r = 0; r < n; ++r)
          if (basic[r * m + idx] && row_parent[r] == -2) {
            row_parent[r] = static_cast<int>(idx);
            queue.emplace_back('r', r);
          }
      }
    }
    require(col_parent[ej] != -2, ErrorKind::InstanceTooLarge,
            "transport basis lost connectivity");

    // reconstruct cycle cells: entering (+), then alternate along the path
    std::vector<std::pair<std::size_t, std::size_t>> cycle;
    cycle.emplace_back(ei, ej);
    std::size_t c = ej;
    while (true) {
      const std::size_t r = static_cast<std::size_t>(col_parent[c]);
      cycle.emplace_back(r, c);  // '-' position
      if (r == ei) break;
      c = static_cast<std::size_t>(row_parent[r]);
      cycle.emplace_back(r, c);  // '+' position
    }

    double theta = std::numeric_limits<double>::infinity();
    std::size_t leave = 1;
    for (std::size_t kk = 1; kk < cycle.size(); kk += 2) {
      const double fl = flow.at(cycle[kk].first, cycle[kk].second);
      if (fl < theta || (fl == theta && cycle[kk] < cycle[leave])) {
        theta = fl;
        leave = kk;
      }
    }
    for (std::size_t kk = 0; kk < cycle.size(); ++kk) {
      double& fl = flow.at(cycle[kk].first, cycle[kk].second);
      fl += (kk % 2 == 0) ? theta : -theta;
    }
    basic[ei * m + ej] = 1;
    basic[cycle[leave].first * m + cycle[leave].second] = 0;
    flow.at(cycle[leave].first, cycle[leave].second) = 0.0;
  }

  TransportPlan tp;
  tp.source = a;
  tp.target = b;
  tp.plan = flow;
  for (auto& x : tp.plan.vec())
    if (x < 0.0) x = 0.0;  // clear -0 and pivot dust
  tp.marginal_violation = marginal_violation_l1(tp.plan, a, b);
  finish_plan(tp, cost);
  return tp;
}

}  // namespace

TransportPlan exact_ot(const Tensor& cost, const DiscreteMeasure& a, const DiscreteMeasure& b) {
  require(cost.rank() == 2, ErrorKind::ShapeMismatch, "cost must be 2-D");
  const std::size_t n = cost.rows(), m = cost.cols();
  require(n <= kExactCap && m <= kExactCap, ErrorKind::InstanceTooLarge,
          "exact_ot is capped at 8x8 instances");
  require(a.size() == n && b.size() == m, ErrorKind::ShapeMismatch,
          "marginal sizes must match the cost matrix");
  a.validate();
  b.validate();
  if (n == m && a.is_uniform() && b.is_uniform()) return exact_permutation(cost, a, b);
  return exact_simplex(cost, a, b);
}

double wasserstein_1d(std::vector<double> xs, std::vector<double> ys, double p) {
  require(xs.size() == ys.size() && !xs.empty(), ErrorKind::LengthMismatch,
          "wasserstein_1d needs equal non-empty samples");
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) s += std::pow(std::fabs(xs[i] - ys[i]), p);
  return std::pow(s / static_cast<double>(xs.size()), 1.0 / p);
}

Tensor pairwise_sq_l2(const Tensor& x, const Tensor& y) {
  require(x.rank() == 2 && y.rank() == 2 && x.cols() == y.cols(), ErrorKind::ShapeMismatch,
          "pairwise distance needs matching feature widths");
  const std::size_t n = x.rows(), m = y.rows(), e = x.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double sq = 0.0;
      for (std::size_t c = 0; c < e; ++c) {
        const double d = x.at(i, c) - y.at(j, c);
        sq += d * d;
      }
      out.at(i, j) = sq;
    }
  return out;
}

Tensor pairwise_pow_l2(const Tensor& x, const Tensor& y, double p) {
  Tensor out = pairwise_sq_l2(x, y);
  if (p == 2.0) return out;
  for (auto& v : out.vec()) v = std::pow(v, p / 2.0);
  return out;
}

}  // namespace ata::ot
