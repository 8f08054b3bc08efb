#include "ata/tensor.hpp"

#include <cmath>
#include <sstream>

namespace ata {

const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::DivisibilityError: return "DivisibilityError";
    case ErrorKind::KernelTooLarge: return "KernelTooLarge";
    case ErrorKind::EvenKernel: return "EvenKernel";
    case ErrorKind::NotScalar: return "NotScalar";
    case ErrorKind::DetachedNode: return "DetachedNode";
    case ErrorKind::NegativeEpsilon: return "NegativeEpsilon";
    case ErrorKind::InstanceTooLarge: return "InstanceTooLarge";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::MissingLabelEntry: return "MissingLabelEntry";
    case ErrorKind::InvalidBudget: return "InvalidBudget";
    case ErrorKind::NonPositiveBandwidth: return "NonPositiveBandwidth";
    case ErrorKind::RowCountMismatch: return "RowCountMismatch";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::EmptyCloud: return "EmptyCloud";
    case ErrorKind::ClipTooShort: return "ClipTooShort";
    case ErrorKind::TooFewPoints: return "TooFewPoints";
    case ErrorKind::UnknownPlacement: return "UnknownPlacement";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::TooManyClasses: return "TooManyClasses";
    case ErrorKind::TooFewFrames: return "TooFewFrames";
    case ErrorKind::BadFile: return "BadFile";
    case ErrorKind::BadConfig: return "BadConfig";
  }
  return "Error";
}

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  require(shape_numel(shape_) == data_.size(), ErrorKind::ShapeMismatch,
          "tensor data length does not match shape");
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  Tensor t(std::move(shape));
  for (auto& x : t.data_) x = v;
  return t;
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  std::size_t r = rows.size();
  std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Tensor t({r, c});
  std::size_t i = 0;
  for (const auto& row : rows) {
    require(row.size() == c, ErrorKind::ShapeMismatch, "ragged initializer rows");
    std::size_t j = 0;
    for (double v : row) t.at(i, j++) = v;
    ++i;
  }
  return t;
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  require(shape_numel(shape) == numel(), ErrorKind::ShapeMismatch,
          "reshape must preserve element count");
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double Tensor::max_abs_diff(const Tensor& o) const {
  require(same_shape(o), ErrorKind::ShapeMismatch, "max_abs_diff shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < data_.size(); ++i) m = std::max(m, std::fabs(data_[i] - o.data_[i]));
  return m;
}

double Tensor::scalar_value() const {
  require(numel() == 1, ErrorKind::NotScalar, "expected a scalar tensor");
  return data_[0];
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << ")";
  return os.str();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, ErrorKind::ShapeMismatch, "matmul expects 2-D inputs");
  require(a.cols() == b.rows(), ErrorKind::ShapeMismatch,
          "matmul inner dimensions differ: " + a.shape_str() + " x " + b.shape_str());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor out({n, m});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = pa + i * k;
    double* orow = po + i * m;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = pb + kk * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require(a.rank() == 2, ErrorKind::ShapeMismatch, "transpose expects a 2-D input");
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), ErrorKind::ShapeMismatch, "add shape mismatch");
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), ErrorKind::ShapeMismatch, "sub shape mismatch");
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), ErrorKind::ShapeMismatch, "mul shape mismatch");
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b[i];
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= c;
  return out;
}

}  // namespace ata
