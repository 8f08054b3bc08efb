#include "ata/tape.hpp"

#include <algorithm>
#include <cmath>

namespace ata {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double gelu_fwd(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

}  // namespace

ValueId Tape::push(Tensor value, std::function<void(Tape&, ValueId)> back, bool is_leaf) {
  values_.push_back(std::move(value));
  nodes_.push_back(Node{is_leaf, std::move(back)});
  return static_cast<ValueId>(values_.size() - 1);
}

void Tape::check(ValueId id) const {
  require(id >= 0 && static_cast<std::size_t>(id) < values_.size(), ErrorKind::DetachedNode,
          "value id is not on this tape");
}

ValueId Tape::leaf(Tensor value) { return push(std::move(value), {}, true); }

const Tensor& Tape::value(ValueId id) const {
  check(id);
  return values_[static_cast<std::size_t>(id)];
}

ValueId Tape::add(ValueId a, ValueId b) {
  check(a);
  check(b);
  Tensor out = ata::add(value(a), value(b));
  return push(std::move(out), [a, b](Tape& t, ValueId id) {
    const Tensor& g = t.grad(id);
    Tensor& ga = t.grad(a);
    Tensor& gb = t.grad(b);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  });
}

ValueId Tape::sub(ValueId a, ValueId b) {
  check(a);
  check(b);
  Tensor out = ata::sub(value(a), value(b));
  return push(std::move(out), [a, b](Tape& t, ValueId id) {
    const Tensor& g = t.grad(id);
    Tensor& ga = t.grad(a);
    Tensor& gb = t.grad(b);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga[i] += g[i];
      gb[i] -= g[i];
    }
  });
}

ValueId Tape::mul(ValueId a, ValueId b) {
  check(a);
  check(b);
  Tensor out = ata::mul(value(a), value(b));
  return push(std::move(out), [a, b](Tape& t, ValueId id) {
    const Tensor& g = t.grad(id);
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    Tensor& ga = t.grad(a);
    Tensor& gb = t.grad(b);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga[i] += g[i] * vb[i];
      gb[i] += g[i] * va[i];
    }
  });
}

ValueId Tape::scale(ValueId a, double c) {
  check(a);
  Tensor out = ata::scale(value(a), c);
  return push(std::move(out), [a, c](Tape& t, ValueId id) {
    const Tensor& g = t.grad(id);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += c * g[i];
  });
}

ValueId Tape::add_const(ValueId a, double c) {
  check(a);
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += c;
  return push(std::move(out), [a](Tape& t, ValueId id) {
    const Tensor& g = t.grad(id);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
  });
}

ValueId Tape::pow_const(ValueId a, double q) {
  check(a);
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::pow(out[i], q);
  return push(std::move(out), [a, q](Tape& t, ValueId id) {
    const Tensor& g = t.grad(id);
    const Tensor& va = t.value(a);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.numel(); ++i) {
      if (va[i] == 0.0 && q < 1.0) continue;  // subgradient 0 at the cone tip
      ga[i] += g[i] * q * std::pow(va[i], q - 1.0);
    }
  });
}

ValueId Tape::matmul(ValueId a, ValueId b) {
  check(a);
  check(b);
  Tensor out = ata::matmul(value(a), value(b));
  return push(std::move(out), [a, b](Tape& t, ValueId id) {
    const Tensor& g = t.grad(id);
    const Tensor& va = t.value(a);
    const Tensor& vb = t.value(b);
    const std::size_t n = va.rows(), k = va.cols(), m = vb.cols();
    // dA += G.B^T: rows of G against rows of B
    {
      Tensor& ga = t.grad(a);
      for (std::size_t i = 0; i < n; ++i) {
        const double* grow = g.data() + i * m;
        double* garow = ga.data() + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const double* brow = vb.data() + kk * m;
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
          garow[kk] += acc;
        }
      }
    }
    // dB += A^T.G
    {
      Tensor& gb = t.grad(b);
      for (std::size_t i = 0; i < n; ++i) {
        const double* arow = va.data() + i * k;
        const double* grow = g.data() + i * m;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const double av = arow[kk];
          if (av == 0.0) continue;
          double* gbrow = gb.data() + kk * m;
          for (std::size_t j = 0; j < m; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
}

ValueId Tape::transpose(ValueId a) {
  check(a);
  Tensor out = ata::transpose(value(a));
  return push(std::move(out), [a](Tape& t, ValueId id) {
    const Tensor& g = t.grad(id);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) ga.at(j, i) += g.at(i, j);
  });
}

ValueId Tape::linear(ValueId x, ValueId w, ValueId b) {
  check(x);
  check(w);
  check(b);
  const Tensor& vx = value(x);
  const Tensor& vw = value(w);
  const Tensor& vb = value(b);
  require(vb.rank() == 1 && vb.dim(0) == vw.cols(), ErrorKind::ShapeMismatch,
          "linear bias width must match output width");
  Tensor out = ata::matmul(vx, vw);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out.at(i, j) += vb[j];
  return push(std::move(out), [x, w, b](Tape& t, ValueId id) {
    const Tensor& g = t.grad(id);
    const Tensor& vx = t.value(x);
    const Tensor& vw = t.value(w);
    Tensor& gx = t.grad(x);
    Tensor& gw = t.grad(w);
    Tensor& gb = t.grad(b);
    const std::size_t n = vx.rows(), k = vx.cols(), m = vw.cols();
    for (std::size_t i = 0; i < n; ++i) {
      const double* grow = g.data() + i * m;
      const double* xrow = vx.data() + i * k;
      double* gxrow = gx.data() + i * k;
      for (std::size_t j = 0; j < m; ++j) gb[j] += grow[j];
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double* wrow = vw.data() + kk * m;
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) acc += grow[j] * wrow[j];
        gxrow[kk] += acc;
        const double xv = xrow[kk];
        if (xv != 0.0) {
          double* gwrow = gw.data() + kk * m;
          for (std::size_t j = 0; j < m; ++j) gwrow[j] += xv * grow[j];
        }
      }
    }
  });
}

ValueId Tape::sum(ValueId a) {
  check(a);
  double s = 0.0;
  for (double v : value(a).vec()) s += v;
  return push(Tensor::scalar(s), [a](Tape& t, ValueId id) {
    const double g = t.grad(id)[0];
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g;
  });
}

ValueId Tape::mean(ValueId a) {
  check(a);
  const std::size_t n = value(a).numel();
  double s = 0.0;
  for (double v : value(a).vec()) s += v;
  return push(Tensor::scalar(s / static_cast<double>(n)), [a, n](Tape& t, ValueId id) {
    const double g = t.grad(id)[0] / static_cast<double>(n);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g;
  });
}

ValueId Tape::mean_rows(ValueId a) {
  check(a);
  const Tensor& va = value(a);
  require(va.rank() == 2, ErrorKind::ShapeMismatch, "mean_rows expects a 2-D input");
  const std::size_t n = va.rows(), e = va.cols();
  Tensor out({1, e});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < e; ++j) out[j] += va.at(i, j);
  for (std::size_t j = 0; j < e; ++j) out[j] /= static_cast<double>(n);
  return push(std::move(out), [a, n](Tape& t, ValueId id) {
    const Tensor& g = t.grad(id);
    Tensor& ga = t.grad(a);
    const std::size_t e = g.numel();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < e; ++j) ga.at(i, j) += g[j] / static_cast<double>(n);
  });
}

ValueId Tape::relu(ValueId a) {
  check(a);
  Tensor out = value(a);
  for (auto& v : out.vec()) v = v > 0.0 ? v : 0.0;
  return push(std::move(out), [a](Tape& t, ValueId id) {
    const Tensor& g = t.grad(id);
    const Tensor& va = t.value(a);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (va[i] > 0.0) ga[i] += g[i];
  });
}

ValueId Tape::gelu(ValueId a) {
  check(a);
  Tensor out = value(a);
  for (auto& v : out.vec()) v = gelu_fwd(v);
  return push(std::move(out), [a](Tape& t, ValueId id) {
    const Tensor& g = t.grad(id);
    const Tensor& va = t.value(a);
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * gelu_grad(va[i]);
  });
}

ValueId Tape::row_softmax(ValueId a) {
  check(a);
  const Tensor& va = value(a);
  require(va.rank() == 2, ErrorKind::ShapeMismatch, "row_softmax expects a 2-D input");
  Tensor out = va;
  const std::size_t n = va.rows(), m = va.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double mx = out.at(i, 0);
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, out.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      double e = std::exp(out.at(i, j) - mx);
      out.at(i, j) = e;
      z += e;
    }
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) /= z;
  }
  return push(std::move(out), [a](Tape& t, ValueId id) {
    const Tensor& g = t.grad(id);
    const Tensor& s = t.value(id);
    Tensor& ga = t.grad(a);
    const std::size_t n = s.rows(), m = s.cols();
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += g.at(i, j) * s.at(i, j);
      for (std::size_t j = 0; j < m; ++j) ga.at(i, j) += s.at(i, j) * (g.at(i, j) - dot);
    }
  });
}

ValueId Tape::layer_norm(ValueId x, ValueId gamma, ValueId beta, double eps) {
  check(x);
  check(gamma);
  check(beta);
  const Tensor& vx = value(x);
  require(vx.rank() == 2, ErrorKind::ShapeMismatch, "layer_norm expects a 2-D input");
  const std::size_t n = vx.rows(), d = vx.cols();
  const Tensor& vg = value(gamma);
  const Tensor& vb = value(beta);
  require(vg.numel() == d && vb.numel() == d, ErrorKind::ShapeMismatch,
          "layer_norm gamma/beta width mismatch");
  Tensor out({n, d});
  std::vector<double> inv_std(n);
  Tensor xhat({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += vx.at(i, j);
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double c = vx.at(i, j) - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat.at(i, j) = (vx.at(i, j) - mu) * inv_std[i];
      out.at(i, j) = vg[j] * xhat.at(i, j) + vb[j];
    }
  }
  return push(std::move(out),
              [x, gamma, beta, inv_std = std::move(inv_std), xhat = std::move(xhat)](
                  Tape& t, ValueId id) {
                const Tensor& g = t.grad(id);
                const Tensor& vg = t.value(gamma);
                Tensor& gx = t.grad(x);
                Tensor& gg = t.grad(gamma);
                Tensor& gb = t.grad(beta);
                const std::size_t n = g.rows(), d = g.cols();
                for (std::size_t i = 0; i < n; ++i) {
                  double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                  for (std::size_t j = 0; j < d; ++j) {
                    const double gv = g.at(i, j);
                    gg[j] += gv * xhat.at(i, j);
                    gb[j] += gv;
                    const double dxhat = gv * vg[j];
                    mean_dxhat += dxhat;
                    mean_dxhat_xhat += dxhat * xhat.at(i, j);
                  }
                  mean_dxhat /= static_cast<double>(d);
                  mean_dxhat_xhat /= static_cast<double>(d);
                  for (std::size_t j = 0; j < d; ++j) {
                    const double dxhat = g.at(i, j) * vg[j];
                    gx.at(i, j) +=
                        inv_std[i] * (dxhat - mean_dxhat - xhat.at(i, j) * mean_dxhat_xhat);
                  }
                }
              });
}

ValueId Tape::dropout(ValueId x, const Tensor& mask) {
  check(x);
  require(value(x).same_shape(mask), ErrorKind::ShapeMismatch, "dropout mask shape mismatch");
  Tensor out = ata::mul(value(x), mask);
  return push(std::move(out), [x, mask](Tape& t, ValueId id) {
    const Tensor& g = t.grad(id);
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * mask[i];
  });
}

ValueId Tape::slice_cols(ValueId x, std::size_t begin, std::size_t count) {
  check(x);
  const Tensor& vx = value(x);
  require(vx.rank() == 2 && begin + count <= vx.cols(), ErrorKind::ShapeMismatch,
          "slice_cols out of range");
  const std::size_t n = vx.rows();
  Tensor out({n, count});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < count; ++j) out.at(i, j) = vx.at(i, begin + j);
  return push(std::move(out), [x, begin, count](Tape& t, ValueId id) {
    const Tensor& g = t.grad(id);
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < count; ++j) gx.at(i, begin + j) += g.at(i, j);
  });
}

ValueId Tape::concat_cols(const std::vector<ValueId>& xs) {
  require(!xs.empty(), ErrorKind::ShapeMismatch, "concat_cols needs at least one input");
  std::size_t n = 0, total = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    check(xs[k]);
    const Tensor& v = value(xs[k]);
    require(v.rank() == 2, ErrorKind::ShapeMismatch, "concat_cols expects 2-D inputs");
    if (k == 0) n = v.rows();
    require(v.rows() == n, ErrorKind::ShapeMismatch, "concat_cols row mismatch");
    total += v.cols();
  }
  Tensor out({n, total});
  std::vector<std::size_t> offs;
  std::size_t off = 0;
  for (ValueId id : xs) {
    const Tensor& v = value(id);
    offs.push_back(off);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out.at(i, off + j) = v.at(i, j);
    off += v.cols();
  }
  return push(std::move(out), [xs, offs](Tape& t, ValueId id) {
    const Tensor& g = t.grad(id);
    for (std::size_t k = 0; k < xs.size(); ++k) {
      Tensor& gx = t.grad(xs[k]);
      for (std::size_t i = 0; i < gx.rows(); ++i)
        for (std::size_t j = 0; j < gx.cols(); ++j) gx.at(i, j) += g.at(i, offs[k] + j);
    }
  });
}

ValueId Tape::slice_rows(ValueId x, std::vector<std::size_t> rows) {
  check(x);
  const Tensor& vx = value(x);
  require(vx.rank() == 2, ErrorKind::ShapeMismatch, "slice_rows expects a 2-D input");
  for (std::size_t r : rows)
    require(r < vx.rows(), ErrorKind::ShapeMismatch, "slice_rows index out of range");
  const std::size_t m = vx.cols();
  Tensor out({rows.size(), m});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) = vx.at(rows[i], j);
  return push(std::move(out), [x, rows = std::move(rows)](Tape& t, ValueId id) {
    const Tensor& g = t.grad(id);
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) gx.at(rows[i], j) += g.at(i, j);
  });
}

ValueId Tape::concat_rows(const std::vector<ValueId>& xs) {
  require(!xs.empty(), ErrorKind::ShapeMismatch, "concat_rows needs at least one input");
  std::size_t m = 0, total = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    check(xs[k]);
    const Tensor& v = value(xs[k]);
    require(v.rank() == 2, ErrorKind::ShapeMismatch, "concat_rows expects 2-D inputs");
    if (k == 0) m = v.cols();
    require(v.cols() == m, ErrorKind::ShapeMismatch, "concat_rows column mismatch");
    total += v.rows();
  }
  Tensor out({total, m});
  std::vector<std::size_t> offs;
  std::size_t off = 0;
  for (ValueId id : xs) {
    const Tensor& v = value(id);
    offs.push_back(off);
    for (std::size_t i = 0; i < v.rows(); ++i)
      for (std::size_t j = 0; j < m; ++j) out.at(off + i, j) = v.at(i, j);
    off += v.rows();
  }
  return push(std::move(out), [xs, offs](Tape& t, ValueId id) {
    const Tensor& g = t.grad(id);
    for (std::size_t k = 0; k < xs.size(); ++k) {
      Tensor& gx = t.grad(xs[k]);
      for (std::size_t i = 0; i < gx.rows(); ++i)
        for (std::size_t j = 0; j < gx.cols(); ++j) gx.at(i, j) += g.at(offs[k] + i, j);
    }
  });
}

ValueId Tape::reshape(ValueId x, std::vector<std::size_t> shape) {
  check(x);
  Tensor out = value(x).reshaped(std::move(shape));
  return push(std::move(out), [x](Tape& t, ValueId id) {
    const Tensor& g = t.grad(id);
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
  });
}

ValueId Tape::segment_max(ValueId x, std::vector<std::size_t> offsets) {
  check(x);
  const Tensor& vx = value(x);
  require(vx.rank() == 2, ErrorKind::ShapeMismatch, "segment_max expects a 2-D input");
  require(offsets.size() >= 2 && offsets.front() == 0 && offsets.back() == vx.rows(),
          ErrorKind::ShapeMismatch, "segment offsets must span all rows");
  for (std::size_t g = 0; g + 1 < offsets.size(); ++g)
    require(offsets[g] < offsets[g + 1], ErrorKind::ShapeMismatch, "empty segment");
  const std::size_t groups = offsets.size() - 1, e = vx.cols();
  Tensor out({groups, e});
  std::vector<std::size_t> argmax(groups * e);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t j = 0; j < e; ++j) {
      std::size_t best = offsets[g];
      double bv = vx.at(best, j);
      for (std::size_t r = offsets[g] + 1; r < offsets[g + 1]; ++r) {
        if (vx.at(r, j) > bv) {
          bv = vx.at(r, j);
          best = r;
        }
      }
      out.at(g, j) = bv;
      argmax[g * e + j] = best;
    }
  }
  return push(std::move(out), [x, argmax = std::move(argmax)](Tape& t, ValueId id) {
    const Tensor& g = t.grad(id);
    Tensor& gx = t.grad(x);
    const std::size_t e = g.cols();
    for (std::size_t gi = 0; gi < g.rows(); ++gi)
      for (std::size_t j = 0; j < e; ++j) gx.at(argmax[gi * e + j], j) += g.at(gi, j);
  });
}

ValueId Tape::dwsep_conv(ValueId x, ValueId w_depth, ValueId w_point) {
  check(x);
  check(w_depth);
  check(w_point);
  const Tensor& vx = value(x);
  const Tensor& wd = value(w_depth);
  const Tensor& wp = value(w_point);
  require(vx.rank() == 3, ErrorKind::ShapeMismatch, "dwsep_conv expects a (T,N,C) input");
  const std::size_t T = vx.dim(0), N = vx.dim(1), C = vx.dim(2);
  require(wd.rank() == 2 && wd.rows() == C, ErrorKind::ShapeMismatch,
          "w_depth must be (C, kernel)");
  const std::size_t K = wd.cols();
  require(K % 2 == 1, ErrorKind::EvenKernel, "kernel must be odd");
  require(K <= T, ErrorKind::KernelTooLarge, "kernel exceeds temporal extent");
  require(wp.rank() == 2 && wp.rows() == C && wp.cols() == C, ErrorKind::ShapeMismatch,
          "w_point must be (C, C)");
  const std::size_t h = (K - 1) / 2;

  // depth stage: per-channel temporal convolution with zero padding
  Tensor y({T, N, C});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t tau = 0; tau < K; ++tau) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + tau) - static_cast<std::ptrdiff_t>(h);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
          y.at(t, n, c) += wd.at(c, tau) * vx.at(static_cast<std::size_t>(src), n, c);
    }
  // point stage: 1x1 channel mixing
  Tensor out({T, N, C});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const double yv = y.at(t, n, c);
        if (yv == 0.0) continue;
        for (std::size_t j = 0; j < C; ++j) out.at(t, n, j) += yv * wp.at(c, j);
      }

  return push(std::move(out), [x, w_depth, w_point, y = std::move(y), T, N, C, K,
                               h](Tape& t, ValueId id) {
    const Tensor& g = t.grad(id);
    const Tensor& vx = t.value(x);
    const Tensor& wd = t.value(w_depth);
    const Tensor& wp = t.value(w_point);
    Tensor& gx = t.grad(x);
    Tensor& gwd = t.grad(w_depth);
    Tensor& gwp = t.grad(w_point);
    Tensor gy({T, N, C});
    for (std::size_t tt = 0; tt < T; ++tt)
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
          double acc = 0.0;
          for (std::size_t j = 0; j < C; ++j) {
            acc += g.at(tt, n, j) * wp.at(c, j);
            gwp.at(c, j) += y.at(tt, n, c) * g.at(tt, n, j);
          }
          gy.at(tt, n, c) = acc;
        }
    for (std::size_t tt = 0; tt < T; ++tt)
      for (std::size_t tau = 0; tau < K; ++tau) {
        const std::ptrdiff_t src =
            static_cast<std::ptrdiff_t>(tt + tau) - static_cast<std::ptrdiff_t>(h);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t c = 0; c < C; ++c) {
            gwd.at(c, tau) += vx.at(static_cast<std::size_t>(src), n, c) * gy.at(tt, n, c);
            gx.at(static_cast<std::size_t>(src), n, c) += wd.at(c, tau) * gy.at(tt, n, c);
          }
      }
  });
}

ValueId Tape::cross_entropy(ValueId logits, std::vector<int> labels) {
  check(logits);
  const Tensor& z = value(logits);
  require(z.rank() == 2, ErrorKind::ShapeMismatch, "cross_entropy expects 2-D logits");
  const std::size_t n = z.rows(), k = z.cols();
  require(labels.size() == n, ErrorKind::LengthMismatch, "one label per logits row required");
  for (int y : labels)
    require(y >= 0 && static_cast<std::size_t>(y) < k, ErrorKind::ShapeMismatch,
            "label outside logits width");
  Tensor softmax({n, k});
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = z.at(i, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, z.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      double e = std::exp(z.at(i, j) - mx);
      softmax.at(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < k; ++j) softmax.at(i, j) /= sum;
    loss += std::log(sum) + mx - z.at(i, static_cast<std::size_t>(labels[i]));
  }
  loss /= static_cast<double>(n);
  return push(Tensor::scalar(loss), [logits, labels = std::move(labels),
                                     softmax = std::move(softmax)](Tape& t, ValueId id) {
    const double g = t.grad(id)[0];
    Tensor& gz = t.grad(logits);
    const std::size_t n = gz.rows(), k = gz.cols();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        double p = softmax.at(i, j);
        if (j == static_cast<std::size_t>(labels[i])) p -= 1.0;
        gz.at(i, j) += g * p / static_cast<double>(n);
      }
  });
}

ValueId Tape::weighted_pow_dist(ValueId x, Tensor anchors, Tensor coeff, double p) {
  check(x);
  const Tensor& vx = value(x);
  require(vx.rank() == 2 && anchors.rank() == 2 && vx.cols() == anchors.cols(),
          ErrorKind::ShapeMismatch, "weighted_pow_dist feature width mismatch");
  require(coeff.rank() == 2 && coeff.rows() == vx.rows() && coeff.cols() == anchors.rows(),
          ErrorKind::ShapeMismatch, "weighted_pow_dist coefficient shape mismatch");
  const std::size_t n = vx.rows(), m = anchors.rows(), e = vx.cols();
  const double half_p = p / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double w = coeff.at(i, j);
      if (w == 0.0) continue;
      double sq = 0.0;
      for (std::size_t c = 0; c < e; ++c) {
        const double d = vx.at(i, c) - anchors.at(j, c);
        sq += d * d;
      }
      total += w * std::pow(sq, half_p);
    }
  return push(Tensor::scalar(total), [x, anchors = std::move(anchors), coeff = std::move(coeff),
                                      p](Tape& t, ValueId id) {
    const double g = t.grad(id)[0];
    const Tensor& vx = t.value(x);
    Tensor& gx = t.grad(x);
    const std::size_t n = vx.rows(), m = anchors.rows(), e = vx.cols();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double w = coeff.at(i, j);
        if (w == 0.0) continue;
        double sq = 0.0;
        for (std::size_t c = 0; c < e; ++c) {
          const double d = vx.at(i, c) - anchors.at(j, c);
          sq += d * d;
        }
        if (sq == 0.0) continue;  // subgradient 0 at coincident points
        const double f = g * w * p * std::pow(sq, p / 2.0 - 1.0);
        for (std::size_t c = 0; c < e; ++c)
          gx.at(i, c) += f * (vx.at(i, c) - anchors.at(j, c));
      }
  });
}

ValueId Tape::mmd_sq(ValueId x, Tensor y, double bandwidth) {
  check(x);
  require(bandwidth > 0.0, ErrorKind::NonPositiveBandwidth, "bandwidth must be positive");
  const Tensor& vx = value(x);
  require(vx.rank() == 2 && y.rank() == 2 && vx.cols() == y.cols(), ErrorKind::ShapeMismatch,
          "mmd feature width mismatch");
  const std::size_t n = vx.rows(), m = y.rows(), e = vx.cols();
  const double inv2bw2 = 1.0 / (2.0 * bandwidth * bandwidth);
  auto k_of = [&](const double* a, const double* b) {
    double sq = 0.0;
    for (std::size_t c = 0; c < e; ++c) {
      const double d = a[c] - b[c];
      sq += d * d;
    }
    return std::exp(-sq * inv2bw2);
  };
  double kxx = 0.0, kyy = 0.0, kxy = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) kxx += k_of(vx.data() + i * e, vx.data() + j * e);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) kyy += k_of(y.data() + i * e, y.data() + j * e);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) kxy += k_of(vx.data() + i * e, y.data() + j * e);
  const double nn = static_cast<double>(n), mm = static_cast<double>(m);
  const double val = kxx / (nn * nn) + kyy / (mm * mm) - 2.0 * kxy / (nn * mm);
  return push(Tensor::scalar(val), [x, y = std::move(y), inv2bw2](Tape& t, ValueId id) {
    const double g = t.grad(id)[0];
    const Tensor& vx = t.value(x);
    Tensor& gx = t.grad(x);
    const std::size_t n = vx.rows(), m = y.rows(), e = vx.cols();
    const double nn = static_cast<double>(n), mm = static_cast<double>(m);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        double sq = 0.0;
        for (std::size_t c = 0; c < e; ++c) {
          const double d = vx.at(i, c) - vx.at(j, c);
          sq += d * d;
        }
        // d k(xi,xj) w.r.t. xi, counted twice (as i and as j in the double sum)
        const double f = g * (2.0 / (nn * nn)) * std::exp(-sq * inv2bw2) * (-2.0 * inv2bw2);
        for (std::size_t c = 0; c < e; ++c) gx.at(i, c) += f * (vx.at(i, c) - vx.at(j, c));
      }
      for (std::size_t j = 0; j < m; ++j) {
        double sq = 0.0;
        for (std::size_t c = 0; c < e; ++c) {
          const double d = vx.at(i, c) - y.at(j, c);
          sq += d * d;
        }
        const double f = g * (-2.0 / (nn * mm)) * std::exp(-sq * inv2bw2) * (-2.0 * inv2bw2);
        for (std::size_t c = 0; c < e; ++c) gx.at(i, c) += f * (vx.at(i, c) - y.at(j, c));
      }
    }
  });
}

namespace {

Tensor center_columns(const Tensor& x) {
  Tensor out = x;
  const std::size_t n = x.rows(), e = x.cols();
  for (std::size_t j = 0; j < e; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += x.at(i, j);
    mu /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) out.at(i, j) -= mu;
  }
  return out;
}

double frob(const Tensor& m) {
  double s = 0.0;
  for (double v : m.vec()) s += v * v;
  return std::sqrt(s);
}

}  // namespace

ValueId Tape::linear_cka(ValueId x, Tensor y) {
  check(x);
  const Tensor& vx = value(x);
  require(vx.rank() == 2 && y.rank() == 2, ErrorKind::ShapeMismatch, "cka expects 2-D inputs");
  require(vx.rows() == y.rows(), ErrorKind::RowCountMismatch,
          "cka compares paired representations, row counts must match");
  require(vx.rows() >= 2, ErrorKind::RowCountMismatch, "cka needs at least two rows");
  Tensor xc = center_columns(vx);
  Tensor yc = center_columns(y);
  const double sx = frob(ata::matmul(ata::transpose(xc), xc));
  const double sy = frob(ata::matmul(ata::transpose(yc), yc));
  require(sx > 0.0 && sy > 0.0, ErrorKind::DegenerateInput, "cka input is zero after centering");
  Tensor cross = ata::matmul(ata::transpose(yc), xc);
  double h = 0.0;
  for (double v : cross.vec()) h += v * v;
  const double val = h / (sx * sy);
  return push(Tensor::scalar(val), [x, yc = std::move(yc), xc = std::move(xc), sx, sy,
                                    h](Tape& t, ValueId id) {
    const double g = t.grad(id)[0];
    Tensor& gx = t.grad(x);
    const std::size_t n = xc.rows(), e = xc.cols();
    // d h / d xc = 2 yc yc^T xc ; d sx / d xc = 2 xc (xc^T xc) / sx
    Tensor yyx = ata::matmul(ata::matmul(yc, ata::transpose(yc)), xc);
    Tensor xxt = ata::matmul(xc, ata::matmul(ata::transpose(xc), xc));
    Tensor d({n, e});
    for (std::size_t i = 0; i < n * e; ++i)
      d[i] = g * (2.0 * yyx[i] / (sx * sy) - (h / (sx * sx * sx * sy)) * 2.0 * xxt[i]);
    // chain through column centering (the centering matrix is symmetric)
    for (std::size_t j = 0; j < e; ++j) {
      double mu = 0.0;
      for (std::size_t i = 0; i < n; ++i) mu += d.at(i, j);
      mu /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) gx.at(i, j) += d.at(i, j) - mu;
    }
  });
}

std::map<ValueId, Tensor> Tape::backward(ValueId loss) {
  check(loss);
  require(value(loss).numel() == 1, ErrorKind::NotScalar, "backward needs a scalar loss");
  grads_.clear();
  grads_.reserve(values_.size());
  for (const Tensor& v : values_) grads_.push_back(Tensor::zeros(v.shape()));
  grads_[static_cast<std::size_t>(loss)][0] = 1.0;
  for (std::size_t i = values_.size(); i-- > 0;) {
    if (nodes_[i].is_leaf || !nodes_[i].back) continue;
    nodes_[i].back(*this, static_cast<ValueId>(i));
  }
  std::map<ValueId, Tensor> out;
  for (std::size_t i = 0; i < values_.size(); ++i)
    if (nodes_[i].is_leaf) out.emplace(static_cast<ValueId>(i), std::move(grads_[i]));
  grads_.clear();
  return out;
}

}  // namespace ata
