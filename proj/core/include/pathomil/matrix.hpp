#pragma once

#include <cstddef>
#include <vector>

namespace pathomil {

// Dense row-major matrix of doubles: the container for instance-feature
// bags, layer weights, and intermediate activations. Computation is done
// in double precision throughout; 32-bit floats appear only in the
// serialized file formats.
struct DenseMatrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;  // rows * cols entries, row-major

  DenseMatrix() = default;
  DenseMatrix(size_t r, size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& at(size_t r, size_t c) { return data[r * cols + c]; }
  double at(size_t r, size_t c) const { return data[r * cols + c]; }
  double* row(size_t r) { return data.data() + r * cols; }
  const double* row(size_t r) const { return data.data() + r * cols; }
  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
};

// C = A * B          (a: m x k, b: k x n)
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
// C = A * B^T        (a: m x k, b: n x k)
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);
// C = A^T * B        (a: k x m, b: k x n)
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);

// Accumulating variants used by the backward passes: c += product.
void add_matmul(DenseMatrix& c, const DenseMatrix& a, const DenseMatrix& b);
void add_matmul_nt(DenseMatrix& c, const DenseMatrix& a, const DenseMatrix& b);
void add_matmul_tn(DenseMatrix& c, const DenseMatrix& a, const DenseMatrix& b);

// y = A * x and y = A^T * x.
std::vector<double> matvec(const DenseMatrix& a, const std::vector<double>& x);
std::vector<double> matvec_t(const DenseMatrix& a, const std::vector<double>& x);

bool all_finite(const DenseMatrix& m);
bool all_finite(const std::vector<double>& v);

}  // namespace pathomil
