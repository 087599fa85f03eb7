#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lis/common.hpp"
#include "lis/rng.hpp"

namespace lis {

// Reference measure in whitened coordinates: always N(0, I_d). A physical
// parameter z relates to the whitened x through z = factor * x when a
// whitening factor is present (SPD, diagonal allowed).
class WhitenedReference {
 public:
  explicit WhitenedReference(int dim);
  WhitenedReference(int dim, Mat whitening_factor);

  int dim() const { return dim_; }
  bool has_factor() const { return factor_.has_value(); }
  const Mat& factor() const;

  double log_density(const Vec& x) const;
  Vec unwhiten(const Vec& x) const;  // physical = factor * whitened
  Vec whiten(const Vec& z) const;    // solves factor * x = z

 private:
  int dim_;
  std::optional<Mat> factor_;
  std::optional<Eigen::LLT<Mat>> factor_llt_;
};

// A target pi(x) = mu(x) f(x) / Z in whitened coordinates: the model supplies
// log f and its gradient; mu is the standard Gaussian of the reference.
// Models are immutable after construction and safe to share across threads.
class TargetModel {
 public:
  virtual ~TargetModel() = default;

  virtual int dim() const = 0;
  virtual double log_likelihood(const Vec& x) const = 0;
  virtual Vec grad_log_likelihood(const Vec& x) const = 0;
  virtual const WhitenedReference& reference() const = 0;
};

// log mu(x) + log f(x); -inf likelihoods propagate.
double log_unnormalized_target(const TargetModel& model, const Vec& x);

// Central finite-difference check of the model gradient at x with a
// scale-aware step h = base_step * (1 + |x|). Returns the worst relative
// error over coordinates.
double gradient_relative_error(const TargetModel& model, const Vec& x,
                               double base_step = 1e-5);

// ---------------------------------------------------------------------------
// Gaussian likelihood with linear observation map: log f(x) = -|Ax - y|^2 / 2.
// Everything about the posterior is available in closed form.
class LinearGaussianModel : public TargetModel {
 public:
  LinearGaussianModel(Mat observation_map, Vec data);

  int dim() const override { return static_cast<int>(observation_map_.cols()); }
  int obs_dim() const { return static_cast<int>(observation_map_.rows()); }
  double log_likelihood(const Vec& x) const override;
  Vec grad_log_likelihood(const Vec& x) const override;
  const WhitenedReference& reference() const override { return reference_; }

  const Mat& observation_map() const { return observation_map_; }
  const Vec& data() const { return data_; }
  const Mat& gram() const { return gram_; }                 // A^T A
  const Vec& gram_eigenvalues() const { return gram_eigs_; }  // descending

 private:
  Mat observation_map_;
  Vec data_;
  Mat gram_;
  Vec gram_eigs_;
  WhitenedReference reference_;
};

struct GaussianMoments {
  Vec mean;
  Mat covariance;
};

// Posterior N((A^T A + I)^{-1} A^T y, (A^T A + I)^{-1}).
GaussianMoments exact_linear_posterior(const LinearGaussianModel& model);

// log Z = -log det(I + A A^T)/2 - y^T (I + A A^T)^{-1} y / 2.
double exact_linear_log_normalizer(const LinearGaussianModel& model);

// log Z_beta for the tempered target mu f^beta.
double exact_linear_log_normalizer(const LinearGaussianModel& model, double beta);

// n independent posterior draws, one per row.
Mat sample_exact_linear_posterior(const LinearGaussianModel& model, int n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Linear observations of a log-normal field:
//   log f(x) = -|y - G exp(gamma_sqrt .* x)|^2 / (2 sigma^2).
class LogNormalObservationModel : public TargetModel {
 public:
  LogNormalObservationModel(Mat observation_map, Vec gamma_sqrt, double sigma, Vec data);

  int dim() const override { return static_cast<int>(observation_map_.cols()); }
  int obs_dim() const { return static_cast<int>(observation_map_.rows()); }
  double log_likelihood(const Vec& x) const override;
  Vec grad_log_likelihood(const Vec& x) const override;
  const WhitenedReference& reference() const override { return reference_; }

  const Mat& observation_map() const { return observation_map_; }
  const Vec& gamma_sqrt() const { return gamma_sqrt_; }
  double sigma() const { return sigma_; }
  const Vec& data() const { return data_; }

 private:
  Mat observation_map_;
  Vec gamma_sqrt_;
  double sigma_;
  Vec data_;
  WhitenedReference reference_;
};

// ---------------------------------------------------------------------------
// 1-D elliptic flow problem: -(kappa u')' = 0 on (0,1), u(0)=1, u(1)=0,
// kappa = exp(field), field piecewise constant on the n_grid+1 cells of a
// uniform grid. Observations are windowed averages of u at interior nodes.
// The prior on the field is a zero-mean Gaussian with exponential kernel
// exp(-|t-t'|/corr_length) at cell midpoints; the model works in whitened
// coordinates, field = Gamma^{1/2} x. Gradients come from the discrete
// adjoint of the tridiagonal solve.
class Elliptic1DModel : public TargetModel {
 public:
  // obs_windows: inclusive [first, last] interior-node index ranges.
  Elliptic1DModel(int n_grid, std::vector<std::pair<int, int>> obs_windows,
                  double sigma, Vec data, double corr_length);

  int dim() const override { return n_grid_ + 1; }
  double log_likelihood(const Vec& x) const override;
  Vec grad_log_likelihood(const Vec& x) const override;
  const WhitenedReference& reference() const override { return reference_; }

  int n_grid() const { return n_grid_; }
  double sigma() const { return sigma_; }
  const Vec& data() const { return data_; }

  // Interior solution values for a whitened parameter.
  Vec solve(const Vec& x) const;
  // Model outputs (window averages of u) for a whitened parameter.
  Vec forward(const Vec& x) const;
  // Discrete flux kappa_c (u_{c+1} - u_c) / h on each cell, boundary
  // values included; constant across cells for the homogeneous equation.
  Vec flux(const Vec& x) const;

 private:
  Vec cell_conductivity(const Vec& x) const;
  Vec solve_tridiagonal(const Vec& kappa, const Vec& rhs) const;

  int n_grid_;
  std::vector<std::pair<int, int>> obs_windows_;
  double sigma_;
  Vec data_;
  WhitenedReference reference_;
};

// Exponential-kernel covariance exp(-|t_i - t_j| / corr_length) at points t.
Mat exponential_kernel_covariance(const Vec& points, double corr_length);

// Symmetric PSD square root via eigendecomposition.
Mat symmetric_sqrt(const Mat& matrix);

// ---------------------------------------------------------------------------
// JSON-configured construction. The document must carry "kind" plus the
// model-specific keys documented in the README; unknown keys are rejected.
struct ModelBundle {
  std::shared_ptr<TargetModel> model;
  Vec data;                   // observation vector the model was built with
  std::optional<Vec> truth;   // whitened truth when data was synthesized
};

ModelBundle make_model_from_json(const std::string& json_text);

// Writes the synthesized observation vector and truth to CSV (header row,
// one row per index; truth column empty when sizes differ).
void write_synthetic_data_csv(const std::filesystem::path& path, const Vec& data,
                              const std::optional<Vec>& truth);

}  // namespace lis
