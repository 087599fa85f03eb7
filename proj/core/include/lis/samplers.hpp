#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "lis/common.hpp"
#include "lis/gram.hpp"
#include "lis/marginalize.hpp"
#include "lis/model.hpp"
#include "lis/rng.hpp"
#include "lis/subspace.hpp"

namespace lis {

enum class ProposalKind { RandomWalk, PCN };

struct MHConfig {
  double step_size = 0.5;
  ProposalKind proposal = ProposalKind::RandomWalk;
  double pcn_rho = 0.5;  // in (0, 1]
};

struct MhResult {
  Vec state;
  bool accepted = false;
};

// One Metropolis-Hastings update of log_density with the configured
// proposal. Proposals with -inf density are rejected; the current state must
// have finite density.
MhResult mh_step(const std::function<double(const Vec&)>& log_density, const Vec& x,
                 const MHConfig& config, Rng& rng);

struct LisStepFlags {
  bool accepted_low = false;   // subspace proposal survived its MH check
  bool accepted_full = false;  // full-space proposal accepted
};

struct LisStepResult {
  Vec state;
  LisStepFlags flags;
};

// One split-kernel update leaving mu f^beta invariant (beta comes from the
// surrogate): MH on the subspace coefficients against the surrogate
// posterior, an independent conditional-reference refresh of the
// complement, then a full-space accept/reject. A rejection at the last
// stage reverts the subspace move as well.
LisStepResult lis_mcmc_step(const TargetModel& model, const SurrogateDensity& surrogate,
                            const Vec& x, const MHConfig& config, Rng& rng);

struct ChainRecord {
  Mat states;  // one row per step
  std::vector<std::uint8_t> accepted_low;
  std::vector<std::uint8_t> accepted_full;

  double accept_rate_low() const;
  double accept_rate_full() const;
};

ChainRecord run_lis_mcmc(const TargetModel& model, const SurrogateDensity& surrogate,
                         const Vec& initial_state, int steps, const MHConfig& config, Rng& rng);

// Long-run variant: discards burn_in steps, then records count states, one
// every thin steps. Acceptance flags cover the recorded stretch only.
ChainRecord run_lis_mcmc_thinned(const TargetModel& model, const SurrogateDensity& surrogate,
                                 const Vec& initial_state, int count, int thin, int burn_in,
                                 const MHConfig& config, Rng& rng);

// --------------------------------------------------------------------------
// Adaptive subspace refinement: epoch 0 estimates the Gram matrix from
// reference draws, later epochs re-estimate it from chain states and refresh
// the subspace from the running epoch mean (the first min(j, burn_epochs)
// epochs are discarded from that mean).
struct AdaptiveLisConfig {
  int epochs = 10;          // refinement epochs after the reference epoch
  int epoch_length = 1000;  // states per epoch
  int burn_epochs = 1;
  int reduced_dim = 4;
  MHConfig mh{};
  MarginalKind kind = MarginalKind::SqrtLikelihood;
  int marginal_samples = 4;
};

struct AdaptiveLisResult {
  Mat states;  // (epochs + 1) * epoch_length rows; first epoch is i.i.d. reference draws
  Subspace subspace;
  std::vector<GramEstimate> epoch_grams;
  std::vector<double> accept_rate_low;   // one entry per MCMC epoch
  std::vector<double> accept_rate_full;
};

AdaptiveLisResult run_adaptive_lis(const std::shared_ptr<const TargetModel>& model,
                                   const AdaptiveLisConfig& config, std::uint64_t seed);

// --------------------------------------------------------------------------
// Tempered SMC with a per-level subspace refresh.

struct ParticleEnsemble {
  Mat particles;  // one row per particle
  std::vector<double> log_weights;
  double beta = 0.0;

  double ess() const;
};

// (sum w)^2 / sum w^2 on exponentiated, shift-stabilized log-weights.
double ess(const std::vector<double>& log_weights);

// Next tempering coefficient: 1 when the ESS ratio at beta = 1 stays above
// the threshold, otherwise the bisection solution of ESS ratio = tau over
// the increment exponent, resolved to |dbeta| <= 1e-6.
double next_beta(const std::vector<double>& log_f, double beta_current, double tau);

Mat resample_multinomial(const Mat& particles, const std::vector<double>& log_weights, Rng& rng);
Mat resample_systematic(const Mat& particles, const std::vector<double>& log_weights, Rng& rng);

struct SmcConfig {
  int n_particles = 512;
  double ess_threshold = 0.5;  // tau
  std::optional<std::vector<double>> fixed_betas;  // strictly increasing to 1
  int mutation_steps = 5;  // split-kernel updates per particle per level
  int reduced_dim = 4;
  MHConfig mh{};
  MarginalKind kind = MarginalKind::SqrtLikelihood;
  int marginal_samples = 4;
  bool systematic_resampling = false;
  int threads = 1;
  int max_levels = 1000;
  bool record_level_detail = false;  // keep per-level particles/gradients/log f
};

struct SmcLevel {
  double beta_from = 0.0;
  double beta_to = 0.0;
  double ess_ratio = 0.0;  // at beta_to, before resampling
  GramEstimate gram;
  Subspace subspace;
  double accept_rate_low = 0.0;
  double accept_rate_full = 0.0;
  // populated only when record_level_detail is set; particles are the
  // pre-reweighting ensemble the level started from
  std::optional<Mat> particles;
  std::optional<Mat> gradients;
  std::optional<Vec> log_f;
};

struct SmcResult {
  Mat particles;  // final equally weighted ensemble
  std::vector<SmcLevel> levels;

  std::vector<double> betas() const;
};

SmcResult run_smc_lis(const std::shared_ptr<const TargetModel>& model, const SmcConfig& config,
                      std::uint64_t seed);

}  // namespace lis
