#include "pathomil/matrix.hpp"

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "pathomil/errors.hpp"

namespace pathomil {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<EMat>;
using CMap = Eigen::Map<const EMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;

void check_dims(size_t got_a, size_t got_b, const char* op) {
  if (got_a != got_b) {
    throw ContractError(std::string(op) + ": inner dimensions differ (" +
                        std::to_string(got_a) + " vs " + std::to_string(got_b) +
                        ")");
  }
}

}  // namespace

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  check_dims(a.cols, b.rows, "matmul");
  DenseMatrix c(a.rows, b.cols);
  Map(c.data.data(), c.rows, c.cols).noalias() =
      CMap(a.data.data(), a.rows, a.cols) * CMap(b.data.data(), b.rows, b.cols);
  return c;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  check_dims(a.cols, b.cols, "matmul_nt");
  DenseMatrix c(a.rows, b.rows);
  Map(c.data.data(), c.rows, c.cols).noalias() =
      CMap(a.data.data(), a.rows, a.cols) *
      CMap(b.data.data(), b.rows, b.cols).transpose();
  return c;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  check_dims(a.rows, b.rows, "matmul_tn");
  DenseMatrix c(a.cols, b.cols);
  Map(c.data.data(), c.rows, c.cols).noalias() =
      CMap(a.data.data(), a.rows, a.cols).transpose() *
      CMap(b.data.data(), b.rows, b.cols);
  return c;
}

void add_matmul(DenseMatrix& c, const DenseMatrix& a, const DenseMatrix& b) {
  check_dims(a.cols, b.rows, "add_matmul");
  check_dims(c.rows, a.rows, "add_matmul(output rows)");
  check_dims(c.cols, b.cols, "add_matmul(output cols)");
  Map(c.data.data(), c.rows, c.cols).noalias() +=
      CMap(a.data.data(), a.rows, a.cols) * CMap(b.data.data(), b.rows, b.cols);
}

void add_matmul_nt(DenseMatrix& c, const DenseMatrix& a, const DenseMatrix& b) {
  check_dims(a.cols, b.cols, "add_matmul_nt");
  check_dims(c.rows, a.rows, "add_matmul_nt(output rows)");
  check_dims(c.cols, b.rows, "add_matmul_nt(output cols)");
  Map(c.data.data(), c.rows, c.cols).noalias() +=
      CMap(a.data.data(), a.rows, a.cols) *
      CMap(b.data.data(), b.rows, b.cols).transpose();
}

void add_matmul_tn(DenseMatrix& c, const DenseMatrix& a, const DenseMatrix& b) {
  check_dims(a.rows, b.rows, "add_matmul_tn");
  check_dims(c.rows, a.cols, "add_matmul_tn(output rows)");
  check_dims(c.cols, b.cols, "add_matmul_tn(output cols)");
  Map(c.data.data(), c.rows, c.cols).noalias() +=
      CMap(a.data.data(), a.rows, a.cols).transpose() *
      CMap(b.data.data(), b.rows, b.cols);
}

std::vector<double> matvec(const DenseMatrix& a, const std::vector<double>& x) {
  check_dims(a.cols, x.size(), "matvec");
  std::vector<double> y(a.rows);
  VecMap(y.data(), static_cast<Eigen::Index>(y.size())).noalias() =
      CMap(a.data.data(), a.rows, a.cols) *
      CVecMap(x.data(), static_cast<Eigen::Index>(x.size()));
  return y;
}

std::vector<double> matvec_t(const DenseMatrix& a, const std::vector<double>& x) {
  check_dims(a.rows, x.size(), "matvec_t");
  std::vector<double> y(a.cols);
  VecMap(y.data(), static_cast<Eigen::Index>(y.size())).noalias() =
      CMap(a.data.data(), a.rows, a.cols).transpose() *
      CVecMap(x.data(), static_cast<Eigen::Index>(x.size()));
  return y;
}

bool all_finite(const DenseMatrix& m) {
  return all_finite(m.data);
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace pathomil
