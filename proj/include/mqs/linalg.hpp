#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <string>
#include <vector>

#include "core.hpp"

namespace mqs {

// Sparse symmetric matrix in CSR form. Construction certifies symmetry:
// max |A - A^T| <= 1e-12 max |A|.
class SparseSymmetric {
 public:
  SparseSymmetric() = default;

  SparseSymmetric(int n, const std::vector<Eigen::Triplet<double>>& triplets) {
    a_.resize(n, n);
    a_.setFromTriplets(triplets.begin(), triplets.end());
    a_.makeCompressed();
    certify();
  }

  explicit SparseSymmetric(Eigen::SparseMatrix<double> a) : a_(std::move(a)) {
    a_.makeCompressed();
    certify();
  }

  int dim() const { return static_cast<int>(a_.rows()); }
  long long nnz() const { return static_cast<long long>(a_.nonZeros()); }
  const Eigen::SparseMatrix<double>& matrix() const { return a_; }

 private:
  Eigen::SparseMatrix<double> a_;

  void certify() const {
    if (a_.rows() != a_.cols())
      throw InvalidParams("symmetric matrix must be square");
    const double scale = a_.coeffs().size() ? a_.coeffs().cwiseAbs().maxCoeff() : 0.0;
    Eigen::SparseMatrix<double> diff = Eigen::SparseMatrix<double>(a_.transpose()) - a_;
    double worst = 0.0;
    for (int k = 0; k < diff.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(diff, k); it; ++it)
        worst = std::max(worst, std::abs(it.value()));
    if (worst > 1e-12 * std::max(scale, 1e-300))
      throw InvalidParams("matrix is not symmetric: max |A - A^T| = " + std::to_string(worst));
  }
};

// Direct solve of an SPD system by sparse LDL^T factorization. A non-positive
// pivot identifies an indefinite matrix and is reported with its index. The
// solution is refined once if needed and certified to ||Ax-b|| <= 1e-10 ||b||.
inline VectorXd solve_spd(const SparseSymmetric& A, const VectorXd& b) {
  if (b.size() != A.dim()) throw InvalidParams("solve_spd: size mismatch");
  if (A.dim() == 0) return VectorXd();
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  ldlt.compute(A.matrix());
  if (ldlt.info() != Eigen::Success)
    throw NotPositiveDefinite("sparse LDL^T factorization failed");
  const VectorXd d = ldlt.vectorD();
  for (int i = 0; i < d.size(); ++i)
    if (!(d[i] > 0.0))
      throw NotPositiveDefinite("non-positive pivot " + std::to_string(d[i]) +
                                " at index " + std::to_string(i));
  VectorXd x = ldlt.solve(b);
  const double bnorm = b.norm();
  double rnorm = (A.matrix() * x - b).norm();
  if (rnorm > 1e-10 * bnorm) {
    x += ldlt.solve(b - A.matrix() * x);  // one step of iterative refinement
    rnorm = (A.matrix() * x - b).norm();
    if (rnorm > 1e-10 * bnorm)
      throw Error("solve_spd: residual " + std::to_string(rnorm) +
                  " exceeds tolerance after refinement");
  }
  return x;
}

}  // namespace mqs
