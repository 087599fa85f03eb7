#include "lis/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "lis/io.hpp"

namespace lis {

using nlohmann::json;

// --------------------------------------------------------------------------
// WhitenedReference

WhitenedReference::WhitenedReference(int dim) : dim_(dim) {
  require(dim >= 1, "reference dimension must be positive");
}

WhitenedReference::WhitenedReference(int dim, Mat whitening_factor) : dim_(dim) {
  require(dim >= 1, "reference dimension must be positive");
  require(whitening_factor.rows() == dim && whitening_factor.cols() == dim,
          "whitening factor must be dim x dim");
  Eigen::SelfAdjointEigenSolver<Mat> eigs(whitening_factor);
  require(eigs.eigenvalues().minCoeff() > 0.0,
          "whitening factor must have strictly positive eigenvalues");
  factor_ = std::move(whitening_factor);
  factor_llt_.emplace(*factor_);
}

const Mat& WhitenedReference::factor() const {
  require(factor_.has_value(), "reference has no whitening factor");
  return *factor_;
}

double WhitenedReference::log_density(const Vec& x) const {
  require(x.size() == dim_, "reference log-density: dimension mismatch");
  return -0.5 * dim_ * kLogTwoPi - 0.5 * x.squaredNorm();
}

Vec WhitenedReference::unwhiten(const Vec& x) const {
  if (!factor_) return x;
  return (*factor_) * x;
}

Vec WhitenedReference::whiten(const Vec& z) const {
  if (!factor_) return z;
  return factor_llt_->solve(z);
}

// --------------------------------------------------------------------------

double log_unnormalized_target(const TargetModel& model, const Vec& x) {
  require(x.size() == model.dim(), "log_unnormalized_target: dimension mismatch");
  const double log_f = model.log_likelihood(x);
  if (std::isnan(log_f)) throw numerical_error("log-likelihood evaluated to NaN");
  return model.reference().log_density(x) + log_f;
}

double gradient_relative_error(const TargetModel& model, const Vec& x, double base_step) {
  const double h = base_step * (1.0 + x.norm());
  const Vec grad = model.grad_log_likelihood(x);
  Vec fd(x.size());
  Vec probe = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    probe[j] = x[j] + h;
    const double up = model.log_likelihood(probe);
    probe[j] = x[j] - h;
    const double down = model.log_likelihood(probe);
    probe[j] = x[j];
    fd[j] = (up - down) / (2.0 * h);
  }
  return (fd - grad).norm() / (grad.norm() + 1e-12);
}

// --------------------------------------------------------------------------
// LinearGaussianModel

LinearGaussianModel::LinearGaussianModel(Mat observation_map, Vec data)
    : observation_map_(std::move(observation_map)),
      data_(std::move(data)),
      reference_(static_cast<int>(observation_map_.cols())) {
  require(observation_map_.rows() == data_.size(),
          "observation map rows must match data length");
  gram_ = observation_map_.transpose() * observation_map_;
  gram_ = 0.5 * (gram_ + gram_.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> eigs(gram_);
  gram_eigs_ = eigs.eigenvalues().reverse();
}

double LinearGaussianModel::log_likelihood(const Vec& x) const {
  require(x.size() == dim(), "log_likelihood: dimension mismatch");
  return -0.5 * (observation_map_ * x - data_).squaredNorm();
}

Vec LinearGaussianModel::grad_log_likelihood(const Vec& x) const {
  require(x.size() == dim(), "grad_log_likelihood: dimension mismatch");
  return observation_map_.transpose() * (data_ - observation_map_ * x);
}

GaussianMoments exact_linear_posterior(const LinearGaussianModel& model) {
  const int d = model.dim();
  Mat precision = model.gram() + Mat::Identity(d, d);
  Eigen::LLT<Mat> llt(precision);
  GaussianMoments out;
  out.covariance = llt.solve(Mat::Identity(d, d));
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose().eval());
  out.mean = llt.solve(model.observation_map().transpose() * model.data());
  return out;
}

double exact_linear_log_normalizer(const LinearGaussianModel& model) {
  return exact_linear_log_normalizer(model, 1.0);
}

double exact_linear_log_normalizer(const LinearGaussianModel& model, double beta) {
  require(beta >= 0.0, "tempering exponent must be nonnegative");
  const auto& map = model.observation_map();
  const int d_y = model.obs_dim();
  Mat outer = Mat::Identity(d_y, d_y) + beta * (map * map.transpose());
  Eigen::LLT<Mat> llt(outer);
  double log_det = 0.0;
  for (int i = 0; i < d_y; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
  const double quad = beta * model.data().dot(llt.solve(model.data()));
  return -0.5 * log_det - 0.5 * quad;
}

Mat sample_exact_linear_posterior(const LinearGaussianModel& model, int n, std::uint64_t seed) {
  require(n >= 1, "sample count must be positive");
  const GaussianMoments moments = exact_linear_posterior(model);
  Eigen::LLT<Mat> llt(moments.covariance);
  const Mat root = llt.matrixL();
  Rng rng(seed);
  Mat samples(n, model.dim());
  for (int i = 0; i < n; ++i) {
    samples.row(i) = (moments.mean + root * rng.normal_vector(model.dim())).transpose();
  }
  return samples;
}

// --------------------------------------------------------------------------
// LogNormalObservationModel

LogNormalObservationModel::LogNormalObservationModel(Mat observation_map, Vec gamma_sqrt,
                                                     double sigma, Vec data)
    : observation_map_(std::move(observation_map)),
      gamma_sqrt_(std::move(gamma_sqrt)),
      sigma_(sigma),
      data_(std::move(data)),
      reference_(static_cast<int>(observation_map_.cols()),
                 Mat(gamma_sqrt_.asDiagonal())) {
  require(sigma_ > 0.0, "observation noise must be positive");
  require(gamma_sqrt_.size() == observation_map_.cols(),
          "gamma_sqrt length must match parameter dimension");
  require(gamma_sqrt_.minCoeff() > 0.0, "gamma_sqrt entries must be positive");
  require(data_.size() == observation_map_.rows(),
          "data length must match observation rows");
}

double LogNormalObservationModel::log_likelihood(const Vec& x) const {
  require(x.size() == dim(), "log_likelihood: dimension mismatch");
  const Vec field = (gamma_sqrt_.array() * x.array()).exp();
  return -(data_ - observation_map_ * field).squaredNorm() / (2.0 * sigma_ * sigma_);
}

Vec LogNormalObservationModel::grad_log_likelihood(const Vec& x) const {
  require(x.size() == dim(), "grad_log_likelihood: dimension mismatch");
  const Vec field = (gamma_sqrt_.array() * x.array()).exp();
  const Vec misfit = data_ - observation_map_ * field;
  const Vec back = observation_map_.transpose() * misfit;
  return (back.array() * gamma_sqrt_.array() * field.array()).matrix() / (sigma_ * sigma_);
}

// --------------------------------------------------------------------------
// Elliptic1DModel

Mat exponential_kernel_covariance(const Vec& points, double corr_length) {
  require(corr_length > 0.0, "correlation length must be positive");
  const Eigen::Index n = points.size();
  Mat cov(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      cov(i, j) = std::exp(-std::abs(points[i] - points[j]) / corr_length);
  return cov;
}

Mat symmetric_sqrt(const Mat& matrix) {
  Eigen::SelfAdjointEigenSolver<Mat> eigs(matrix);
  require(eigs.eigenvalues().minCoeff() > -1e-12 * std::abs(eigs.eigenvalues().maxCoeff()),
          "symmetric_sqrt needs a PSD matrix");
  Vec roots = eigs.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eigs.eigenvectors() * roots.asDiagonal() * eigs.eigenvectors().transpose();
}

Elliptic1DModel::Elliptic1DModel(int n_grid, std::vector<std::pair<int, int>> obs_windows,
                                 double sigma, Vec data, double corr_length)
    : n_grid_(n_grid),
      obs_windows_(std::move(obs_windows)),
      sigma_(sigma),
      data_(std::move(data)),
      reference_(n_grid + 1, [&] {
        const int cells = n_grid + 1;
        Vec midpoints(cells);
        const double h = 1.0 / (n_grid + 1);
        for (int c = 0; c < cells; ++c) midpoints[c] = (c + 0.5) * h;
        return symmetric_sqrt(exponential_kernel_covariance(midpoints, corr_length));
      }()) {
  require(n_grid_ >= 1, "grid size must be positive");
  require(sigma_ > 0.0, "observation noise must be positive");
  require(static_cast<Eigen::Index>(obs_windows_.size()) == data_.size(),
          "data length must match number of observation windows");
  for (const auto& [first, last] : obs_windows_) {
    require(first >= 0 && last >= first && last < n_grid_,
            "observation window out of range");
  }
}

Vec Elliptic1DModel::cell_conductivity(const Vec& x) const {
  require(x.size() == dim(), "dimension mismatch");
  const Vec field = reference_.unwhiten(x);
  return field.array().exp();
}

// Thomas algorithm for the SPD tridiagonal conductance system. The matrix is
// assembled per cell: cell c couples interior nodes c-1 and c, with the two
// boundary cells contributing to the diagonal and the right-hand side.
Vec Elliptic1DModel::solve_tridiagonal(const Vec& kappa, const Vec& rhs) const {
  const int n = n_grid_;
  Vec diag(n), off(std::max(n - 1, 0)), b = rhs;
  for (int i = 0; i < n; ++i) diag[i] = kappa[i] + kappa[i + 1];
  for (int i = 0; i + 1 < n; ++i) off[i] = -kappa[i + 1];
  for (int i = 1; i < n; ++i) {
    const double w = off[i - 1] / diag[i - 1];
    diag[i] -= w * off[i - 1];
    b[i] -= w * b[i - 1];
  }
  Vec u(n);
  u[n - 1] = b[n - 1] / diag[n - 1];
  for (int i = n - 2; i >= 0; --i) u[i] = (b[i] - off[i] * u[i + 1]) / diag[i];
  return u;
}

Vec Elliptic1DModel::solve(const Vec& x) const {
  const Vec kappa = cell_conductivity(x);
  Vec rhs = Vec::Zero(n_grid_);
  rhs[0] = kappa[0];  // left boundary u(0) = 1
  return solve_tridiagonal(kappa, rhs);
}

Vec Elliptic1DModel::forward(const Vec& x) const {
  const Vec u = solve(x);
  Vec out(data_.size());
  for (std::size_t w = 0; w < obs_windows_.size(); ++w) {
    const auto& [first, last] = obs_windows_[w];
    out[w] = u.segment(first, last - first + 1).mean();
  }
  return out;
}

Vec Elliptic1DModel::flux(const Vec& x) const {
  const Vec kappa = cell_conductivity(x);
  const Vec u = solve(x);
  const double h = 1.0 / (n_grid_ + 1);
  Vec flux(n_grid_ + 1);
  for (int c = 0; c <= n_grid_; ++c) {
    const double left = (c == 0) ? 1.0 : u[c - 1];
    const double right = (c == n_grid_) ? 0.0 : u[c];
    flux[c] = kappa[c] * (right - left) / h;
  }
  return flux;
}

double Elliptic1DModel::log_likelihood(const Vec& x) const {
  return -(data_ - forward(x)).squaredNorm() / (2.0 * sigma_ * sigma_);
}

Vec Elliptic1DModel::grad_log_likelihood(const Vec& x) const {
  const Vec kappa = cell_conductivity(x);
  Vec rhs = Vec::Zero(n_grid_);
  rhs[0] = kappa[0];
  const Vec u = solve_tridiagonal(kappa, rhs);

  Vec out(data_.size());
  for (std::size_t w = 0; w < obs_windows_.size(); ++w) {
    const auto& [first, last] = obs_windows_[w];
    out[w] = u.segment(first, last - first + 1).mean();
  }
  const Vec misfit = (data_ - out) / (sigma_ * sigma_);

  Vec sensitivity = Vec::Zero(n_grid_);
  for (std::size_t w = 0; w < obs_windows_.size(); ++w) {
    const auto& [first, last] = obs_windows_[w];
    const double weight = misfit[w] / (last - first + 1);
    for (int i = first; i <= last; ++i) sensitivity[i] += weight;
  }
  const Vec adjoint = solve_tridiagonal(kappa, sensitivity);

  // d log f / d kappa_c = -(du across cell c)(dlambda across cell c), with
  // the Dirichlet values 1 and 0 padding u and zeros padding the adjoint.
  Vec grad_kappa(n_grid_ + 1);
  for (int c = 0; c <= n_grid_; ++c) {
    const double u_left = (c == 0) ? 1.0 : u[c - 1];
    const double u_right = (c == n_grid_) ? 0.0 : u[c];
    const double l_left = (c == 0) ? 0.0 : adjoint[c - 1];
    const double l_right = (c == n_grid_) ? 0.0 : adjoint[c];
    grad_kappa[c] = -(u_right - u_left) * (l_right - l_left);
  }
  const Vec grad_field = grad_kappa.array() * kappa.array();
  return reference_.factor() * grad_field;  // symmetric factor
}

// --------------------------------------------------------------------------
// JSON factory

namespace {

void reject_unknown_keys(const json& doc, const std::set<std::string>& allowed) {
  for (const auto& item : doc.items()) {
    if (!allowed.contains(item.key())) {
      throw contract_error("unknown config key: " + item.key());
    }
  }
}

double require_positive(const json& doc, const std::string& key, double fallback = 0.0) {
  double value = fallback;
  if (doc.contains(key)) value = doc.at(key).get<double>();
  require(value > 0.0, "config key must be positive: " + key);
  return value;
}

Vec vec_from_json(const json& arr) {
  Vec out(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) out[i] = arr[i].get<double>();
  return out;
}

Mat mat_from_json(const json& rows) {
  require(!rows.empty(), "matrix config must be non-empty");
  Mat out(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i].size() == rows[0].size(), "ragged matrix in config");
    for (std::size_t j = 0; j < rows[i].size(); ++j) out(i, j) = rows[i][j].get<double>();
  }
  return out;
}

// Haar-ish random orthogonal columns: QR of a Gaussian matrix with the sign
// of each R diagonal folded into Q.
Mat random_orthogonal(int rows, int cols, Rng& rng) {
  Mat gauss(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) gauss(i, j) = rng.normal();
  Eigen::HouseholderQR<Mat> qr(gauss);
  Mat q = qr.householderQ() * Mat::Identity(rows, cols);
  const Mat r = qr.matrixQR().topLeftCorner(cols, cols);
  for (int j = 0; j < cols; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

Vec power_spectrum(double scale, double decay, int count) {
  Vec out(count);
  for (int j = 0; j < count; ++j) out[j] = scale * std::pow(j + 1.0, -decay);
  return out;
}

// Observation map with prescribed singular values: U diag(s) V^T.
Mat random_observation_map(int rows, int cols, const Vec& singular_values, Rng& rng) {
  require(singular_values.size() == std::min(rows, cols),
          "singular value count must equal min(dim_obs, dim)");
  const int k = static_cast<int>(singular_values.size());
  const Mat u = random_orthogonal(rows, k, rng);
  const Mat v = random_orthogonal(cols, k, rng);
  return u * singular_values.asDiagonal() * v.transpose();
}

ModelBundle make_linear_gaussian(const json& doc) {
  reject_unknown_keys(doc, {"kind", "dim", "dim_obs", "seed", "observation_map", "y",
                            "singular_values", "sv_scale", "sv_decay"});
  Mat map;
  std::uint64_t seed = doc.value("seed", 0ULL);
  Rng rng(seed);
  if (doc.contains("observation_map")) {
    map = mat_from_json(doc.at("observation_map"));
  } else {
    const int dim = doc.at("dim").get<int>();
    const int dim_obs = doc.at("dim_obs").get<int>();
    require(dim >= 1 && dim_obs >= 1, "dim and dim_obs must be positive");
    Vec sv;
    if (doc.contains("singular_values")) {
      sv = vec_from_json(doc.at("singular_values"));
    } else {
      sv = power_spectrum(doc.value("sv_scale", 1.0), doc.value("sv_decay", 1.0),
                          std::min(dim, dim_obs));
    }
    map = random_observation_map(dim_obs, dim, sv, rng);
  }
  ModelBundle bundle;
  if (doc.contains("y")) {
    bundle.data = vec_from_json(doc.at("y"));
  } else {
    Vec truth = rng.normal_vector(map.cols());
    Vec noise = rng.normal_vector(map.rows());
    bundle.data = map * truth + noise;
    bundle.truth = truth;
  }
  bundle.model = std::make_shared<LinearGaussianModel>(map, bundle.data);
  return bundle;
}

ModelBundle make_log_normal(const json& doc) {
  reject_unknown_keys(doc, {"kind", "dim", "dim_obs", "seed", "gamma0", "beta_gamma",
                            "lambda0", "beta_lambda", "sigma", "y"});
  const int dim = doc.at("dim").get<int>();
  const int dim_obs = doc.at("dim_obs").get<int>();
  require(dim >= 1 && dim_obs >= 1 && dim_obs <= dim, "need 1 <= dim_obs <= dim");
  const double sigma = require_positive(doc, "sigma", 1.0);
  const double gamma0 = require_positive(doc, "gamma0", 1.0);
  const double lambda0 = require_positive(doc, "lambda0", 1.0);
  // Sign convention for the spectral decays is configurable: positive values
  // give decaying prior variances gamma0 * j^-beta_gamma.
  const double beta_gamma = doc.value("beta_gamma", 2.0);
  const double beta_lambda = doc.value("beta_lambda", 1.0);
  std::uint64_t seed = doc.value("seed", 0ULL);
  Rng rng(seed);
  const Vec gamma = power_spectrum(gamma0, beta_gamma, dim);
  const Vec gamma_sqrt = gamma.cwiseSqrt();
  const Vec lambda = power_spectrum(lambda0, beta_lambda, dim_obs);
  const Mat map = random_observation_map(dim_obs, dim, lambda, rng);

  ModelBundle bundle;
  if (doc.contains("y")) {
    bundle.data = vec_from_json(doc.at("y"));
  } else {
    Vec truth = rng.normal_vector(dim);
    Vec field = (gamma_sqrt.array() * truth.array()).exp();
    bundle.data = map * field + sigma * rng.normal_vector(dim_obs);
    bundle.truth = truth;
  }
  bundle.model = std::make_shared<LogNormalObservationModel>(map, gamma_sqrt, sigma, bundle.data);
  return bundle;
}

ModelBundle make_elliptic(const json& doc) {
  reject_unknown_keys(doc, {"kind", "n_grid", "seed", "sigma", "corr_length",
                            "obs_windows", "n_windows", "y"});
  const int n_grid = doc.at("n_grid").get<int>();
  require(n_grid >= 1, "n_grid must be positive");
  const double sigma = require_positive(doc, "sigma", 0.05);
  const double corr_length = require_positive(doc, "corr_length", 0.5);
  std::vector<std::pair<int, int>> windows;
  if (doc.contains("obs_windows")) {
    for (const auto& w : doc.at("obs_windows")) {
      windows.emplace_back(w.at(0).get<int>(), w.at(1).get<int>());
    }
  } else {
    const int n_windows = doc.value("n_windows", std::min(8, n_grid));
    require(n_windows >= 1 && n_windows <= n_grid, "n_windows out of range");
    // equal-width windows tiling the interior nodes
    for (int w = 0; w < n_windows; ++w) {
      const int first = (w * n_grid) / n_windows;
      const int last = ((w + 1) * n_grid) / n_windows - 1;
      windows.emplace_back(first, std::max(first, last));
    }
  }
  std::uint64_t seed = doc.value("seed", 0ULL);
  Rng rng(seed);
  ModelBundle bundle;
  if (doc.contains("y")) {
    bundle.data = vec_from_json(doc.at("y"));
    bundle.model = std::make_shared<Elliptic1DModel>(n_grid, windows, sigma, bundle.data,
                                                     corr_length);
  } else {
    Vec placeholder = Vec::Zero(windows.size());
    Elliptic1DModel generator(n_grid, windows, sigma, placeholder, corr_length);
    Vec truth = rng.normal_vector(n_grid + 1);
    bundle.data = generator.forward(truth) + sigma * rng.normal_vector(windows.size());
    bundle.truth = truth;
    bundle.model = std::make_shared<Elliptic1DModel>(n_grid, windows, sigma, bundle.data,
                                                     corr_length);
  }
  return bundle;
}

}  // namespace

ModelBundle make_model_from_json(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& err) {
    throw contract_error(std::string("model config is not valid JSON: ") + err.what());
  }
  require(doc.contains("kind"), "model config needs a kind");
  const std::string kind = doc.at("kind").get<std::string>();
  try {
    if (kind == "linear_gaussian") return make_linear_gaussian(doc);
    if (kind == "log_normal") return make_log_normal(doc);
    if (kind == "elliptic1d") return make_elliptic(doc);
  } catch (const json::exception& err) {
    throw contract_error(std::string("model config: ") + err.what());
  }
  throw contract_error("unknown model kind: " + kind);
}

void write_synthetic_data_csv(const std::filesystem::path& path, const Vec& data,
                              const std::optional<Vec>& truth) {
  CsvWriter writer(path, {"index", "y", "truth"});
  const Eigen::Index rows = std::max(data.size(), truth ? truth->size() : 0);
  for (Eigen::Index i = 0; i < rows; ++i) {
    std::vector<std::string> cells(3);
    cells[0] = format_double(static_cast<double>(i));
    cells[1] = i < data.size() ? format_double(data[i]) : "";
    cells[2] = (truth && i < truth->size()) ? format_double((*truth)[i]) : "";
    writer.raw_row(cells);
  }
}

}  // namespace lis
