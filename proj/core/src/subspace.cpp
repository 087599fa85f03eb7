#include "lis/subspace.hpp"

#include <cmath>

#include "lis/io.hpp"

namespace lis {

namespace {

// Full symmetric eigendecomposition in descending order. Iterative partial
// solvers are not worth the loss of determinism at desk scale.
void descending_eigs(const Mat& matrix, Vec& values, Mat& vectors) {
  Eigen::SelfAdjointEigenSolver<Mat> solver(0.5 * (matrix + matrix.transpose().eval()));
  values = solver.eigenvalues().reverse();
  vectors = solver.eigenvectors().rowwise().reverse();
}

void fix_column_signs(Mat& vectors) {
  for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
    Eigen::Index arg_max = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
      const double mag = std::abs(vectors(i, j));
      if (mag > best + 1e-15) {
        best = mag;
        arg_max = i;
      }
    }
    if (vectors(arg_max, j) < 0.0) vectors.col(j) = -vectors.col(j);
  }
}

void check_psd(const Mat& matrix, const char* label) {
  Eigen::SelfAdjointEigenSolver<Mat> solver(matrix, Eigen::EigenvaluesOnly);
  const double max_eig = std::max(solver.eigenvalues().maxCoeff(), 0.0);
  if (solver.eigenvalues().minCoeff() < -1e-8 * std::max(max_eig, 1.0)) {
    throw numerical_error(std::string(label) + " is not positive semidefinite");
  }
}

}  // namespace

Subspace Subspace::empty(int dim, Vec source_spectrum) {
  Subspace out;
  out.basis = Mat::Zero(dim, 0);
  out.eigenvalues = Vec::Zero(0);
  out.source_spectrum = std::move(source_spectrum);
  return out;
}

SpectrumReport SpectrumReport::from_matrix(const Mat& matrix) {
  Vec values;
  Mat vectors;
  descending_eigs(matrix, values, vectors);
  const Eigen::Index d = values.size();
  SpectrumReport report;
  report.eigenvalues = values;
  report.gaps = Vec(d - 1);
  for (Eigen::Index r = 0; r + 1 < d; ++r) report.gaps[r] = values[r] - values[r + 1];
  report.tail_sums = Vec::Zero(d + 1);
  for (Eigen::Index r = d - 1; r >= 0; --r) {
    report.tail_sums[r] = report.tail_sums[r + 1] + values[r];
  }
  return report;
}

Subspace leading_eigs(const Mat& matrix, int d_r) {
  require(matrix.rows() == matrix.cols(), "matrix must be square");
  require(d_r >= 1 && d_r <= matrix.rows(), "reduced dimension out of range");
  Vec values;
  Mat vectors;
  descending_eigs(matrix, values, vectors);
  Subspace out;
  out.basis = vectors.leftCols(d_r);
  fix_column_signs(out.basis);
  out.eigenvalues = values.head(d_r);
  out.source_spectrum = values;
  return out;
}

Subspace leading_eigs(const GramEstimate& estimate, int d_r) {
  return leading_eigs(estimate.matrix, d_r);
}

double residual(const Mat& basis, const Mat& matrix) {
  require(basis.rows() == matrix.rows() && matrix.rows() == matrix.cols(),
          "residual: dimension mismatch");
  const double total = matrix.trace();
  double retained = 0.0;
  if (basis.cols() > 0) retained = (basis.transpose() * matrix * basis).trace();
  const double value = total - retained;
  if (value < -1e-8 * std::max(std::abs(total), 1.0)) {
    throw numerical_error("residual is negative beyond roundoff; basis not orthonormal?");
  }
  return std::max(0.0, value);
}

double residual(const Subspace& subspace, const Mat& matrix) {
  return residual(subspace.basis, matrix);
}

int truncate_by_tail(const Mat& matrix, double tol) {
  require(tol > 0.0, "tail tolerance must be positive");
  const SpectrumReport report = SpectrumReport::from_matrix(matrix);
  const int d = static_cast<int>(report.eigenvalues.size());
  for (int r = 0; r <= d; ++r) {
    if (report.tail_sums[r] <= tol) return r;
  }
  return d;
}

SplitPoint split(const Vec& x, const Subspace& subspace) {
  require(x.size() == subspace.dim(), "split: dimension mismatch");
  SplitPoint out;
  out.coefficients = subspace.basis.transpose() * x;
  out.complement = x - subspace.basis * out.coefficients;
  return out;
}

Vec unsplit(const SplitPoint& point, const Subspace& subspace) {
  return subspace.basis * point.coefficients + point.complement;
}

GapFreeBounds gap_free_residual_bounds(const Mat& matrix_true, const Mat& matrix_hat, int d_r) {
  require(matrix_true.rows() == matrix_true.cols() &&
              matrix_hat.rows() == matrix_hat.cols() &&
              matrix_true.rows() == matrix_hat.rows(),
          "bound inputs must be square and equally sized");
  check_psd(matrix_true, "true matrix");
  check_psd(matrix_hat, "estimated matrix");

  const Subspace estimated = leading_eigs(matrix_hat, d_r);
  const double frob = (matrix_hat - matrix_true).norm();
  const double tail_true = SpectrumReport::from_matrix(matrix_true).tail_sums[d_r];
  const double tail_hat = estimated.source_spectrum.tail(estimated.dim() - d_r).sum();

  GapFreeBounds out;
  out.actual = residual(estimated, matrix_true);
  out.bound_a = tail_true + 2.0 * std::sqrt(static_cast<double>(d_r)) * frob;
  out.bound_b = tail_hat + std::sqrt(static_cast<double>(d_r)) * frob +
                (matrix_true - matrix_hat).trace();
  const double slack = 1e-8 * std::max(1.0, std::abs(matrix_true.trace()));
  if (out.actual > std::min(out.bound_a, out.bound_b) + slack) {
    throw numerical_error("gap-free residual bound violated");
  }
  return out;
}

void write_subspace_csv(const std::filesystem::path& path, const Subspace& subspace) {
  std::vector<std::string> header(subspace.reduced_dim());
  for (int j = 0; j < subspace.reduced_dim(); ++j) header[j] = format_double(subspace.eigenvalues[j]);
  write_matrix_csv(path, subspace.basis, header);
}

void write_spectrum_csv(const std::filesystem::path& path, const SpectrumReport& report) {
  CsvWriter writer(path, {"index", "eigenvalue", "gap", "tail_sum"});
  const Eigen::Index d = report.eigenvalues.size();
  for (Eigen::Index r = 0; r < d; ++r) {
    const double gap = (r + 1 < d) ? report.gaps[r] : 0.0;
    writer.row({static_cast<double>(r + 1), report.eigenvalues[r], gap,
                report.tail_sums[r + 1]});
  }
}

}  // namespace lis
