#pragma once

#include <filesystem>

#include "lis/common.hpp"
#include "lis/gram.hpp"

namespace lis {

// Orthonormal basis of a retained leading eigensubspace together with the
// spectrum it was cut from.
struct Subspace {
  Mat basis;            // d x d_r, orthonormal columns
  Vec eigenvalues;      // d_r retained eigenvalues, descending
  Vec source_spectrum;  // full spectrum of the generating matrix, descending

  int dim() const { return static_cast<int>(basis.rows()); }
  int reduced_dim() const { return static_cast<int>(basis.cols()); }

  // The d_r = 0 degenerate subspace (empty basis, residual = full trace).
  static Subspace empty(int dim, Vec source_spectrum);
};

struct SpectrumReport {
  Vec eigenvalues;  // descending, length d
  Vec gaps;         // lambda_r - lambda_{r+1}, length d-1
  Vec tail_sums;    // entry r = sum_{i>r} lambda_i, length d+1, last entry 0

  static SpectrumReport from_matrix(const Mat& matrix);
};

// Leading d_r eigenvectors of the symmetrized matrix, eigenvalues descending.
// Sign convention: the largest-magnitude entry of each column is positive,
// ties resolved toward the lowest index, so serialized bases compare equal
// across runs.
Subspace leading_eigs(const Mat& matrix, int d_r);
Subspace leading_eigs(const GramEstimate& estimate, int d_r);

// Residual tr(P_perp H P_perp) = tr(H) - tr(V^T H V), clamped at zero.
double residual(const Mat& basis, const Mat& matrix);
double residual(const Subspace& subspace, const Mat& matrix);

// Smallest d_r whose spectrum tail sum is <= tol; d when none qualifies.
int truncate_by_tail(const Mat& matrix, double tol);

struct SplitPoint {
  Vec coefficients;  // V^T x, length d_r
  Vec complement;    // x - V (V^T x), full length d
};

SplitPoint split(const Vec& x, const Subspace& subspace);

// Reassemble V x_r + x_perp.
Vec unsplit(const SplitPoint& point, const Subspace& subspace);

// Gap-free residual bounds for the leading subspace of a perturbed matrix:
//   actual   = residual of the estimated subspace against the true matrix
//   bound_a  = true tail sum + 2 sqrt(d_r) |Hhat - H|_F
//   bound_b  = estimated tail sum + sqrt(d_r) |Hhat - H|_F + tr(H - Hhat)
// Throws if either input fails a PSD check or the bounds are violated
// beyond roundoff.
struct GapFreeBounds {
  double actual;
  double bound_a;
  double bound_b;
};

GapFreeBounds gap_free_residual_bounds(const Mat& matrix_true, const Mat& matrix_hat, int d_r);

// CSV layouts consumed by the CLI: the subspace writes its eigenvalues as
// the header row followed by one column per eigenvector; the spectrum
// report writes one row per index.
void write_subspace_csv(const std::filesystem::path& path, const Subspace& subspace);
void write_spectrum_csv(const std::filesystem::path& path, const SpectrumReport& report);

}  // namespace lis
