#include "clip/nd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace clip::nd {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("tensor data has " + std::to_string(data_.size()) +
                     " values but shape " + shape_str(shape_) + " needs " +
                     std::to_string(shape_numel(shape_)));
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::scalar(double value) { return Tensor({}, std::vector<double>{value}); }

std::size_t Tensor::rows() const {
  if (shape_.empty()) return 1;
  std::size_t n = 1;
  for (std::size_t i = 0; i + 1 < shape_.size(); ++i) n *= shape_[i];
  return n;
}

std::size_t Tensor::cols() const { return shape_.empty() ? 1 : shape_.back(); }

std::span<double> Tensor::row(std::size_t r) {
  const auto c = cols();
  return {data_.data() + r * c, c};
}

std::span<const double> Tensor::row(std::size_t r) const {
  const auto c = cols();
  return {data_.data() + r * c, c};
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_str(shape_));
  }
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(what) + ": expected a matrix, got shape " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

namespace {

// c[m×n] += a[m×k] · b[k×n], all row-major with the given leading dimensions.
// Four output rows share each streamed row of b.
void kernel_nn(std::size_t m, std::size_t n, std::size_t k, const double* __restrict a,
               std::size_t lda, const double* __restrict b, std::size_t ldb,
               double* __restrict c, std::size_t ldc) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    double* __restrict c0 = c + (i + 0) * ldc;
    double* __restrict c1 = c + (i + 1) * ldc;
    double* __restrict c2 = c + (i + 2) * ldc;
    double* __restrict c3 = c + (i + 3) * ldc;
    const double* a0 = a + (i + 0) * lda;
    const double* a1 = a + (i + 1) * lda;
    const double* a2 = a + (i + 2) * lda;
    const double* a3 = a + (i + 3) * lda;
    for (std::size_t p = 0; p < k; ++p) {
      const double v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
      const double* __restrict br = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) {
        const double bv = br[j];
        c0[j] += v0 * bv;
        c1[j] += v1 * bv;
        c2[j] += v2 * bv;
        c3[j] += v3 * bv;
      }
    }
  }
  for (; i < m; ++i) {
    double* __restrict ci = c + i * ldc;
    const double* ai = a + i * lda;
    for (std::size_t p = 0; p < k; ++p) {
      const double v = ai[p];
      const double* __restrict br = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) ci[j] += v * br[j];
    }
  }
}

}  // namespace

void gemm_nn(const Tensor& a, const Tensor& b, Tensor& out) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const auto m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  if (out.shape() != Shape{m, n}) out = Tensor({m, n});
  else out.fill(0.0);
  kernel_nn(m, n, k, a.data(), k, b.data(), n, out.data(), n);
}

void gemm_nt(const Tensor& a, const Tensor& b, Tensor& out) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  if (a.shape()[1] != b.shape()[1]) {
    throw ShapeError("matmul_nt: inner dimensions differ " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()) + "^T");
  }
  gemm_nn(a, transpose(b), out);
}

void gemm_tn(const Tensor& a, const Tensor& b, Tensor& out) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  if (b.shape()[0] != a.shape()[0]) {
    throw ShapeError("matmul_tn: inner dimensions differ " + shape_str(a.shape()) + "^T x " +
                     shape_str(b.shape()));
  }
  // Streaming rows of a transposed copy beats the strided k-outer loop.
  gemm_nn(transpose(a), b, out);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tensor out;
  gemm_nn(a, b, out);
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const auto r = a.shape()[0], c = a.shape()[1];
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data()[j * r + i] = a.data()[i * c + j];
  return out;
}

void add_inplace(Tensor& dst, const Tensor& src) {
  if (dst.size() != src.size()) {
    throw ShapeError("add_inplace: " + shape_str(dst.shape()) + " vs " + shape_str(src.shape()));
  }
  double* __restrict d = dst.data();
  const double* __restrict s = src.data();
  for (std::size_t i = 0, n = dst.size(); i < n; ++i) d[i] += s[i];
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double frobenius_norm(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

}  // namespace clip::nd
