#include "lis/marginalize.hpp"

#include <algorithm>
#include <cmath>

#include "lis/rng.hpp"

namespace lis {

std::string to_string(MarginalKind kind) {
  switch (kind) {
    case MarginalKind::Likelihood: return "f";
    case MarginalKind::SqrtLikelihood: return "g";
    case MarginalKind::LogLikelihood: return "l";
  }
  return "?";
}

MarginalKind marginal_kind_from_string(const std::string& name) {
  if (name == "f") return MarginalKind::Likelihood;
  if (name == "g") return MarginalKind::SqrtLikelihood;
  if (name == "l") return MarginalKind::LogLikelihood;
  throw contract_error("unknown marginalization kind: " + name);
}

ConditionalReferenceSampler::ConditionalReferenceSampler(Subspace subspace, std::uint64_t seed,
                                                         int bank_size)
    : subspace_(std::move(subspace)), seed_(seed) {
  require(bank_size >= 0, "bank size must be nonnegative");
  ensure_bank(bank_size);
}

void ConditionalReferenceSampler::ensure_bank(int count) const {
  while (static_cast<int>(bank_.size()) < count) {
    Rng block_rng(Rng::derive_seed(seed_, bank_.size()));
    bank_.push_back(block_rng.normal_vector(subspace_.dim()));
  }
}

Vec ConditionalReferenceSampler::complement_block(int i) const {
  require(i >= 0, "bank index must be nonnegative");
  ensure_bank(i + 1);
  const Vec& z = bank_[i];
  return z - subspace_.basis * (subspace_.basis.transpose() * z);
}

Mat ConditionalReferenceSampler::sample_conditional_complement(const Vec& coefficients,
                                                               int count) const {
  require(count >= 1, "sample count must be positive");
  require(coefficients.size() == subspace_.reduced_dim(),
          "coefficient length must equal the reduced dimension");
  ensure_bank(count);
  const Vec retained = subspace_.basis * coefficients;
  Mat out(count, subspace_.dim());
  for (int i = 0; i < count; ++i) {
    out.row(i) = (retained + complement_block(i)).transpose();
  }
  return out;
}

namespace {

double log_sum_exp(const std::vector<double>& values) {
  double max_value = kNegInf;
  for (double v : values) max_value = std::max(max_value, v);
  if (max_value == kNegInf) return kNegInf;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - max_value);
  return max_value + std::log(sum);
}

}  // namespace

double combine_log_terms(MarginalKind kind, const std::vector<double>& log_f_terms) {
  require(!log_f_terms.empty(), "need at least one marginalization sample");
  const double m = static_cast<double>(log_f_terms.size());
  for (std::size_t i = 0; i < log_f_terms.size(); ++i) {
    if (std::isnan(log_f_terms[i])) {
      throw numerical_error("log-likelihood is NaN at marginalization sample " +
                            std::to_string(i));
    }
    if (kind == MarginalKind::LogLikelihood && log_f_terms[i] == kNegInf) {
      throw numerical_error("log marginalization hit a zero likelihood at sample " +
                            std::to_string(i));
    }
  }
  switch (kind) {
    case MarginalKind::Likelihood:
      return log_sum_exp(log_f_terms) - std::log(m);
    case MarginalKind::SqrtLikelihood: {
      std::vector<double> halves(log_f_terms.size());
      for (std::size_t i = 0; i < log_f_terms.size(); ++i) halves[i] = 0.5 * log_f_terms[i];
      return 2.0 * (log_sum_exp(halves) - std::log(m));
    }
    case MarginalKind::LogLikelihood: {
      double sum = 0.0;
      for (double v : log_f_terms) sum += v;
      return sum / m;
    }
  }
  return kNegInf;
}

SurrogateDensity::SurrogateDensity(std::shared_ptr<const TargetModel> model, Subspace subspace,
                                   MarginalKind kind, int sample_size, BankPolicy randomness,
                                   std::uint64_t seed, double beta)
    : model_(std::move(model)),
      sampler_(std::move(subspace), seed, randomness == BankPolicy::FixedSeedBank ? sample_size : 0),
      kind_(kind),
      sample_size_(sample_size),
      randomness_(randomness),
      seed_(seed),
      beta_(beta) {
  require(model_ != nullptr, "surrogate needs a model");
  require(sample_size_ >= 1, "marginalization sample size must be at least 1");
  require(beta_ >= 0.0, "tempering exponent must be nonnegative");
  require(sampler_.subspace().dim() == model_->dim(),
          "subspace dimension must match the model");
}

double SurrogateDensity::log_marginal(const Vec& coefficients) const {
  require(coefficients.size() == sampler_.subspace().reduced_dim(),
          "coefficient length must equal the reduced dimension");
  const Vec retained = sampler_.subspace().basis * coefficients;
  std::vector<double> terms(sample_size_);
  if (randomness_ == BankPolicy::FixedSeedBank) {
    for (int i = 0; i < sample_size_; ++i) {
      terms[i] = beta_ * model_->log_likelihood(retained + sampler_.complement_block(i));
    }
  } else {
    Rng rng(Rng::derive_seed(seed_, 0x46524553 + fresh_counter_++));
    const auto& basis = sampler_.subspace().basis;
    for (int i = 0; i < sample_size_; ++i) {
      const Vec z = rng.normal_vector(model_->dim());
      const Vec complement = z - basis * (basis.transpose() * z);
      terms[i] = beta_ * model_->log_likelihood(retained + complement);
    }
  }
  return combine_log_terms(kind_, terms);
}

double SurrogateDensity::log_surrogate_posterior(const Vec& coefficients) const {
  const double reduced_dim = static_cast<double>(coefficients.size());
  return log_marginal(coefficients) - 0.5 * reduced_dim * kLogTwoPi -
         0.5 * coefficients.squaredNorm();
}

MarginalEvaluator marginal_evaluator(const std::shared_ptr<const SurrogateDensity>& surrogate) {
  return [surrogate](const Vec& coefficients) { return surrogate->log_marginal(coefficients); };
}

}  // namespace lis
