#include "lis/gram.hpp"

#include <cmath>

#include <json.hpp>

#include "lis/io.hpp"
#include "lis/rng.hpp"

namespace lis {

std::string to_string(GramKind kind) {
  switch (kind) {
    case GramKind::ReferenceMC: return "reference_mc";
    case GramKind::WeightedIS: return "weighted_is";
    case GramKind::ChainEpochAverage: return "chain_epoch_average";
    case GramKind::SmcWeighted: return "smc_weighted";
  }
  return "unknown";
}

GramKind gram_kind_from_string(const std::string& name) {
  if (name == "reference_mc") return GramKind::ReferenceMC;
  if (name == "weighted_is") return GramKind::WeightedIS;
  if (name == "chain_epoch_average") return GramKind::ChainEpochAverage;
  if (name == "smc_weighted") return GramKind::SmcWeighted;
  throw contract_error("unknown gram kind: " + name);
}

GramEstimate make_gram_estimate(Mat raw, std::int64_t sample_count, GramKind kind,
                                std::optional<double> variance_estimate) {
  require(raw.rows() == raw.cols(), "gram matrix must be square");
  require(sample_count >= 1, "gram sample count must be positive");
  Mat sym = 0.5 * (raw + raw.transpose().eval());
  Eigen::SelfAdjointEigenSolver<Mat> eigs(sym);
  if (eigs.eigenvalues().minCoeff() < 0.0) {
    const Vec floored = eigs.eigenvalues().cwiseMax(0.0);
    sym = eigs.eigenvectors() * floored.asDiagonal() * eigs.eigenvectors().transpose();
    sym = 0.5 * (sym + sym.transpose().eval());
  }
  GramEstimate out;
  out.matrix = std::move(sym);
  out.sample_count = sample_count;
  out.kind = kind;
  out.variance_estimate = variance_estimate;
  return out;
}

GramAccumulator::GramAccumulator(int dim)
    : sum_(Mat::Zero(dim, dim)), sum_squares_(Mat::Zero(dim, dim)) {
  require(dim >= 1, "accumulator dimension must be positive");
}

void GramAccumulator::add(const Vec& gradient) {
  require(gradient.size() == sum_.rows(), "gradient dimension mismatch");
  const Mat term = gradient * gradient.transpose();
  sum_ += term;
  sum_squares_ += term.cwiseProduct(term);
  ++count_;
}

void GramAccumulator::merge(const GramAccumulator& other) {
  require(other.sum_.rows() == sum_.rows(), "accumulator dimension mismatch");
  sum_ += other.sum_;
  sum_squares_ += other.sum_squares_;
  count_ += other.count_;
}

GramEstimate GramAccumulator::finalize(GramKind kind) const {
  require(count_ >= 1, "cannot finalize an empty accumulator");
  const Mat mean = sum_ / static_cast<double>(count_);
  std::optional<double> variance;
  if (count_ >= 2) {
    const double m = static_cast<double>(count_);
    variance = (sum_squares_ - m * mean.cwiseProduct(mean)).sum() / (m - 1.0);
    variance = std::max(0.0, *variance);
  }
  return make_gram_estimate(mean, count_, kind, variance);
}

GramEstimate estimate_reference_gram(const TargetModel& model, std::int64_t m,
                                     std::uint64_t seed) {
  require(m >= 1, "sample count must be at least 1");
  Rng rng(seed);
  GramAccumulator acc(model.dim());
  for (std::int64_t i = 0; i < m; ++i) {
    const Vec x = rng.normal_vector(model.dim());
    const Vec grad = model.grad_log_likelihood(x);
    if (!grad.allFinite()) {
      throw numerical_error("non-finite gradient at reference sample " + std::to_string(i));
    }
    acc.add(grad);
  }
  return acc.finalize(GramKind::ReferenceMC);
}

GramEstimate estimate_posterior_gram_weighted(const std::vector<Vec>& gradients,
                                              const std::vector<double>& log_weights) {
  require(!gradients.empty(), "need at least one gradient");
  require(gradients.size() == log_weights.size(),
          "gradients and log-weights must have equal length");
  const Eigen::Index d = gradients.front().size();
  double max_lw = kNegInf;
  for (double lw : log_weights) {
    require(!std::isnan(lw), "NaN log-weight");
    max_lw = std::max(max_lw, lw);
  }
  if (max_lw == kNegInf) {
    throw numerical_error("degenerate ensemble: all log-weights are -inf");
  }
  const std::int64_t m = static_cast<std::int64_t>(gradients.size());
  Mat weighted_sum = Mat::Zero(d, d);
  double weight_sum = 0.0;
  std::vector<double> weights(gradients.size());
  for (std::size_t i = 0; i < gradients.size(); ++i) {
    require(gradients[i].size() == d, "gradient dimension mismatch");
    if (!gradients[i].allFinite()) {
      throw numerical_error("non-finite gradient at weighted sample " + std::to_string(i));
    }
    weights[i] = std::exp(log_weights[i] - max_lw);
    weighted_sum += weights[i] * (gradients[i] * gradients[i].transpose());
    weight_sum += weights[i];
  }
  const Mat mean = weighted_sum / weight_sum;
  std::optional<double> variance;
  if (m >= 2) {
    // variance of the normalized terms m * wtilde_i g_i g_i^T, whose sample
    // mean is the estimate itself
    Mat sq_sum = Mat::Zero(d, d);
    for (std::size_t i = 0; i < gradients.size(); ++i) {
      const Mat term =
          (static_cast<double>(m) * weights[i] / weight_sum) * (gradients[i] * gradients[i].transpose());
      sq_sum += term.cwiseProduct(term);
    }
    const double md = static_cast<double>(m);
    variance = std::max(0.0, (sq_sum - md * mean.cwiseProduct(mean)).sum() / (md - 1.0));
  }
  return make_gram_estimate(mean, m, GramKind::WeightedIS, variance);
}

GramEstimate estimate_posterior_gram_chain(const TargetModel& model, const Mat& chain_states) {
  require(chain_states.rows() >= 1, "chain must be nonempty");
  require(chain_states.cols() == model.dim(), "chain state dimension mismatch");
  GramAccumulator acc(model.dim());
  for (Eigen::Index i = 0; i < chain_states.rows(); ++i) {
    const Vec grad = model.grad_log_likelihood(chain_states.row(i).transpose());
    if (!grad.allFinite()) {
      throw numerical_error("non-finite gradient at chain state " + std::to_string(i));
    }
    acc.add(grad);
  }
  return acc.finalize(GramKind::ChainEpochAverage);
}

GramEstimate epoch_running_mean(const std::vector<GramEstimate>& history, int j, int burn) {
  require(j >= 0 && burn >= 0, "epoch indices must be nonnegative");
  const int first = std::min(j, burn);
  require(j < static_cast<int>(history.size()) && first <= j,
          "epoch running mean: retained window not covered by history");
  Mat sum = Mat::Zero(history[first].matrix.rows(), history[first].matrix.cols());
  std::int64_t samples = 0;
  for (int i = first; i <= j; ++i) {
    sum += history[i].matrix;
    samples += history[i].sample_count;
  }
  const double count = j + 1 - first;
  return make_gram_estimate(sum / count, samples, GramKind::ChainEpochAverage, std::nullopt);
}

double empirical_one_sample_variance(const std::vector<Mat>& terms) {
  require(terms.size() >= 2, "variance needs at least two terms");
  const Eigen::Index d = terms.front().rows();
  Mat sum = Mat::Zero(d, terms.front().cols());
  Mat sum_squares = sum;
  for (const Mat& term : terms) {
    require(term.rows() == sum.rows() && term.cols() == sum.cols(),
            "term shape mismatch");
    sum += term;
    sum_squares += term.cwiseProduct(term);
  }
  const double m = static_cast<double>(terms.size());
  const Mat mean = sum / m;
  return std::max(0.0, (sum_squares - m * mean.cwiseProduct(mean)).sum() / (m - 1.0));
}

void write_gram_csv(const std::filesystem::path& csv_path, const GramEstimate& estimate) {
  std::vector<std::string> header(estimate.matrix.cols());
  for (Eigen::Index j = 0; j < estimate.matrix.cols(); ++j)
    header[j] = "c" + std::to_string(j);
  write_matrix_csv(csv_path, estimate.matrix, header);
}

void write_gram_sidecar(const std::filesystem::path& json_path, const GramEstimate& estimate) {
  nlohmann::json doc;
  doc["sample_count"] = estimate.sample_count;
  doc["kind"] = to_string(estimate.kind);
  if (estimate.variance_estimate) {
    doc["variance_estimate"] = *estimate.variance_estimate;
  } else {
    doc["variance_estimate"] = nullptr;
  }
  write_text_file(json_path, doc.dump(2) + "\n");
}

}  // namespace lis
