#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lis/common.hpp"
#include "lis/model.hpp"
#include "lis/subspace.hpp"

namespace lis {

// Which function of the likelihood is marginalized over the complement
// subspace: f itself, its square root, or its logarithm.
enum class MarginalKind { Likelihood, SqrtLikelihood, LogLikelihood };

std::string to_string(MarginalKind kind);
MarginalKind marginal_kind_from_string(const std::string& name);

enum class BankPolicy { FixedSeedBank, Fresh };

// Draws from the conditional reference mu(x_perp | x_r), which in whitened
// coordinates is N(0, P_perp) regardless of x_r. Complement noise comes from
// projecting fixed full-dimensional Gaussian blocks, so the draws depend on
// the retained span only, never on the particular orthonormal basis.
class ConditionalReferenceSampler {
 public:
  ConditionalReferenceSampler(Subspace subspace, std::uint64_t seed, int bank_size);

  const Subspace& subspace() const { return subspace_; }
  int bank_size() const { return static_cast<int>(bank_.size()); }

  // Complement part of bank block i: P_perp z_i.
  Vec complement_block(int i) const;

  // Full-space points V x_r + P_perp z_i for i = 0..count-1 (one per row);
  // count beyond the bank extends it deterministically from the seed.
  Mat sample_conditional_complement(const Vec& coefficients, int count) const;

 private:
  Subspace subspace_;
  std::uint64_t seed_;
  mutable std::vector<Vec> bank_;

  void ensure_bank(int count) const;
};

// Monte Carlo marginalization surrogate over a subspace: evaluates the
// log of fbar^M / (gbar^M)^2 / exp(lbar^M) at subspace coefficients, with an
// optional tempering exponent applied to the likelihood. With the fixed
// seed bank the evaluation is a pure function of the coefficients, i.e. a
// well-defined (randomly drawn, then frozen) density; Fresh redraws the
// complement blocks on every call and exists for unbiasedness tests.
class SurrogateDensity {
 public:
  SurrogateDensity(std::shared_ptr<const TargetModel> model, Subspace subspace,
                   MarginalKind kind, int sample_size, BankPolicy randomness,
                   std::uint64_t seed, double beta = 1.0);

  MarginalKind kind() const { return kind_; }
  int sample_size() const { return sample_size_; }
  double beta() const { return beta_; }
  const Subspace& subspace() const { return sampler_.subspace(); }
  const TargetModel& model() const { return *model_; }

  // Unnormalized log marginal (no Z_g / Z_l subtraction).
  double log_marginal(const Vec& coefficients) const;

  // log_marginal plus the standard normal log density of the coefficients.
  double log_surrogate_posterior(const Vec& coefficients) const;

 private:
  std::shared_ptr<const TargetModel> model_;
  ConditionalReferenceSampler sampler_;
  MarginalKind kind_;
  int sample_size_;
  BankPolicy randomness_;
  std::uint64_t seed_;
  double beta_;
  mutable std::uint64_t fresh_counter_ = 0;
};

// Log marginal evaluated at subspace coefficients; lets diagnostics swap in
// closed-form marginals where they exist.
using MarginalEvaluator = std::function<double(const Vec&)>;

MarginalEvaluator marginal_evaluator(const std::shared_ptr<const SurrogateDensity>& surrogate);

// Combines finite per-sample log-likelihood values per marginalization rule.
// -inf terms are tolerated for Likelihood / SqrtLikelihood (all -inf gives
// -inf); LogLikelihood requires every term finite.
double combine_log_terms(MarginalKind kind, const std::vector<double>& log_f_terms);

}  // namespace lis
