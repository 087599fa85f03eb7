#include "lis/samplers.hpp"

#include <algorithm>
#include <cmath>

#include "lis/parallel.hpp"

namespace lis {

namespace {

struct Proposal {
  Vec state;
  double log_ratio_correction;  // log q(x'->x) - log q(x->x')
};

Proposal propose(const Vec& x, const MHConfig& config, Rng& rng) {
  Proposal out;
  if (config.proposal == ProposalKind::RandomWalk) {
    require(config.step_size >= 0.0, "step size must be nonnegative");
    out.state = x + config.step_size * rng.normal_vector(x.size());
    out.log_ratio_correction = 0.0;
  } else {
    const double rho = config.pcn_rho;
    require(rho > 0.0 && rho <= 1.0, "pCN rho must lie in (0,1]");
    out.state = std::sqrt(1.0 - rho * rho) * x + rho * rng.normal_vector(x.size());
    // q is reversible w.r.t. the standard Gaussian
    out.log_ratio_correction = 0.5 * (out.state.squaredNorm() - x.squaredNorm());
  }
  return out;
}

bool accept(double log_ratio, Rng& rng) {
  if (log_ratio >= 0.0) return true;
  if (log_ratio == kNegInf) return false;
  return std::log(rng.uniform()) < log_ratio;
}

double stable_max(const std::vector<double>& values) {
  double max_value = kNegInf;
  for (double v : values) {
    require(!std::isnan(v), "NaN log-weight");
    max_value = std::max(max_value, v);
  }
  return max_value;
}

}  // namespace

MhResult mh_step(const std::function<double(const Vec&)>& log_density, const Vec& x,
                 const MHConfig& config, Rng& rng) {
  const double current = log_density(x);
  if (!std::isfinite(current)) {
    throw numerical_error("MH chain is at a state with non-finite density");
  }
  const Proposal proposal = propose(x, config, rng);
  const double proposed = log_density(proposal.state);
  if (std::isnan(proposed)) throw numerical_error("proposal density is NaN");
  MhResult out;
  if (accept(proposed - current + proposal.log_ratio_correction, rng)) {
    out.state = proposal.state;
    out.accepted = true;
  } else {
    out.state = x;
    out.accepted = false;
  }
  return out;
}

// --------------------------------------------------------------------------
// Split-kernel chain. The cursor caches the surrogate and likelihood values
// of the current state so a long run costs two fresh evaluations per step.

namespace {

struct LisCursor {
  Vec coefficients;
  Vec complement;
  double log_marginal;    // surrogate log marginal at coefficients
  double log_likelihood;  // beta-scaled log f at the assembled state
};

LisCursor make_cursor(const TargetModel& model, const SurrogateDensity& surrogate,
                      const Vec& x) {
  require(x.size() == model.dim(), "state dimension mismatch");
  require(x.allFinite(), "chain state must be finite");
  LisCursor cursor;
  const SplitPoint parts = split(x, surrogate.subspace());
  cursor.coefficients = parts.coefficients;
  cursor.complement = parts.complement;
  cursor.log_marginal = surrogate.log_marginal(cursor.coefficients);
  if (!std::isfinite(cursor.log_marginal)) {
    throw numerical_error("surrogate is not finite at the current state; "
                          "the chain must start inside the support");
  }
  cursor.log_likelihood =
      surrogate.beta() * model.log_likelihood(surrogate.subspace().basis * cursor.coefficients +
                                              cursor.complement);
  return cursor;
}

Vec assemble(const SurrogateDensity& surrogate, const Vec& coefficients, const Vec& complement) {
  return surrogate.subspace().basis * coefficients + complement;
}

LisStepFlags advance(const TargetModel& model, const SurrogateDensity& surrogate,
                     LisCursor& cursor, const MHConfig& config, Rng& rng) {
  LisStepFlags flags;
  const auto& basis = surrogate.subspace().basis;

  // (i) MH on the subspace coefficients against the surrogate posterior
  const Proposal proposal = propose(cursor.coefficients, config, rng);
  const double proposed_marginal = surrogate.log_marginal(proposal.state);
  const double low_ratio = (proposed_marginal - 0.5 * proposal.state.squaredNorm()) -
                           (cursor.log_marginal - 0.5 * cursor.coefficients.squaredNorm()) +
                           proposal.log_ratio_correction;
  Vec next_coefficients = cursor.coefficients;
  double next_marginal = cursor.log_marginal;
  if (accept(low_ratio, rng)) {
    flags.accepted_low = true;
    next_coefficients = proposal.state;
    next_marginal = proposed_marginal;
  }

  // (ii) independent conditional-reference refresh of the complement
  const Vec noise = rng.normal_vector(model.dim());
  const Vec next_complement = noise - basis * (basis.transpose() * noise);

  // (iii) full-space accept/reject; the marginal reference factors cancel,
  // leaving the likelihood ratio corrected by the surrogate ratio
  const double proposed_likelihood =
      surrogate.beta() * model.log_likelihood(assemble(surrogate, next_coefficients, next_complement));
  const double full_ratio = (proposed_likelihood - cursor.log_likelihood) +
                            (cursor.log_marginal - next_marginal);
  if (accept(full_ratio, rng)) {
    flags.accepted_full = true;
    cursor.coefficients = next_coefficients;
    cursor.complement = next_complement;
    cursor.log_marginal = next_marginal;
    cursor.log_likelihood = proposed_likelihood;
  }
  // a full-space rejection reverts the subspace move as well
  return flags;
}

}  // namespace

LisStepResult lis_mcmc_step(const TargetModel& model, const SurrogateDensity& surrogate,
                            const Vec& x, const MHConfig& config, Rng& rng) {
  LisCursor cursor = make_cursor(model, surrogate, x);
  LisStepResult out;
  out.flags = advance(model, surrogate, cursor, config, rng);
  out.state = assemble(surrogate, cursor.coefficients, cursor.complement);
  return out;
}

double ChainRecord::accept_rate_low() const {
  if (accepted_low.empty()) return 0.0;
  double sum = 0.0;
  for (auto f : accepted_low) sum += f;
  return sum / static_cast<double>(accepted_low.size());
}

double ChainRecord::accept_rate_full() const {
  if (accepted_full.empty()) return 0.0;
  double sum = 0.0;
  for (auto f : accepted_full) sum += f;
  return sum / static_cast<double>(accepted_full.size());
}

ChainRecord run_lis_mcmc(const TargetModel& model, const SurrogateDensity& surrogate,
                         const Vec& initial_state, int steps, const MHConfig& config, Rng& rng) {
  require(steps >= 1, "chain length must be positive");
  LisCursor cursor = make_cursor(model, surrogate, initial_state);
  ChainRecord record;
  record.states.resize(steps, model.dim());
  record.accepted_low.resize(steps);
  record.accepted_full.resize(steps);
  for (int t = 0; t < steps; ++t) {
    const LisStepFlags flags = advance(model, surrogate, cursor, config, rng);
    record.states.row(t) = assemble(surrogate, cursor.coefficients, cursor.complement).transpose();
    record.accepted_low[t] = flags.accepted_low;
    record.accepted_full[t] = flags.accepted_full;
  }
  return record;
}

ChainRecord run_lis_mcmc_thinned(const TargetModel& model, const SurrogateDensity& surrogate,
                                 const Vec& initial_state, int count, int thin, int burn_in,
                                 const MHConfig& config, Rng& rng) {
  require(count >= 1 && thin >= 1 && burn_in >= 0, "invalid thinned-run plan");
  LisCursor cursor = make_cursor(model, surrogate, initial_state);
  for (int t = 0; t < burn_in; ++t) advance(model, surrogate, cursor, config, rng);
  ChainRecord record;
  record.states.resize(count, model.dim());
  record.accepted_low.reserve(count * thin);
  record.accepted_full.reserve(count * thin);
  for (int i = 0; i < count; ++i) {
    for (int t = 0; t < thin; ++t) {
      const LisStepFlags flags = advance(model, surrogate, cursor, config, rng);
      record.accepted_low.push_back(flags.accepted_low);
      record.accepted_full.push_back(flags.accepted_full);
    }
    record.states.row(i) = assemble(surrogate, cursor.coefficients, cursor.complement).transpose();
  }
  return record;
}

// --------------------------------------------------------------------------

AdaptiveLisResult run_adaptive_lis(const std::shared_ptr<const TargetModel>& model,
                                   const AdaptiveLisConfig& config, std::uint64_t seed) {
  require(model != nullptr, "adaptive sampler needs a model");
  require(config.epochs >= 0, "epoch count must be nonnegative");
  require(config.epoch_length >= 1, "epoch length must be positive");
  require(config.burn_epochs >= 0, "burn epoch count must be nonnegative");
  const int d = model->dim();
  const int t = config.epoch_length;
  Rng rng(seed);

  AdaptiveLisResult out;
  out.states.resize((config.epochs + 1) * t, d);

  // reference epoch: i.i.d. draws from mu and the initial Gram estimate
  GramAccumulator acc(d);
  for (int i = 0; i < t; ++i) {
    const Vec x = rng.normal_vector(d);
    out.states.row(i) = x.transpose();
    const Vec grad = model->grad_log_likelihood(x);
    if (!grad.allFinite()) {
      throw numerical_error("non-finite gradient at reference sample " + std::to_string(i));
    }
    acc.add(grad);
  }
  out.epoch_grams.push_back(acc.finalize(GramKind::ReferenceMC));
  out.subspace = leading_eigs(out.epoch_grams.back(), config.reduced_dim);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto surrogate = std::make_shared<SurrogateDensity>(
        model, out.subspace, config.kind, config.marginal_samples, BankPolicy::FixedSeedBank,
        Rng::derive_seed(seed, 0xADA0 + epoch));
    Rng chain_rng = rng.child(epoch);
    const Vec start = out.states.row(epoch * t - 1).transpose();
    const ChainRecord record =
        run_lis_mcmc(*model, *surrogate, start, t, config.mh, chain_rng);
    out.states.middleRows(epoch * t, t) = record.states;
    out.accept_rate_low.push_back(record.accept_rate_low());
    out.accept_rate_full.push_back(record.accept_rate_full());

    GramEstimate epoch_gram = estimate_posterior_gram_chain(*model, record.states);
    out.epoch_grams.push_back(std::move(epoch_gram));
    const GramEstimate running =
        epoch_running_mean(out.epoch_grams, epoch, config.burn_epochs);
    out.subspace = leading_eigs(running, config.reduced_dim);
  }
  return out;
}

// --------------------------------------------------------------------------

double ess(const std::vector<double>& log_weights) {
  require(!log_weights.empty(), "ESS of an empty ensemble");
  const double max_lw = stable_max(log_weights);
  if (max_lw == kNegInf) {
    throw numerical_error("degenerate ensemble: all log-weights are -inf");
  }
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double lw : log_weights) {
    const double w = std::exp(lw - max_lw);
    sum += w;
    sum_sq += w * w;
  }
  return (sum * sum) / sum_sq;
}

double ParticleEnsemble::ess() const { return lis::ess(log_weights); }

double next_beta(const std::vector<double>& log_f, double beta_current, double tau) {
  require(beta_current >= 0.0 && beta_current < 1.0, "current beta must lie in [0,1)");
  require(tau > 0.0 && tau < 1.0, "ESS threshold must lie in (0,1)");
  const double n = static_cast<double>(log_f.size());
  const auto ratio_at = [&](double beta) {
    std::vector<double> lw(log_f.size());
    for (std::size_t i = 0; i < log_f.size(); ++i) lw[i] = (beta - beta_current) * log_f[i];
    return ess(lw) / n;
  };
  if (ratio_at(1.0) >= tau) return 1.0;

  double lo = beta_current;  // ratio(lo) = 1 > tau
  double hi = 1.0;           // ratio(hi) < tau
  double mid = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    mid = 0.5 * (lo + hi);
    const double r = ratio_at(mid);
    if (hi - lo <= 1e-6 && std::abs(r - tau) <= 1e-3) break;
    if (hi - lo <= 1e-14) break;
    if (r >= tau) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return mid;
}

namespace {

std::vector<double> normalized_weights(const std::vector<double>& log_weights) {
  const double max_lw = stable_max(log_weights);
  if (max_lw == kNegInf) {
    throw numerical_error("degenerate ensemble: all log-weights are -inf");
  }
  std::vector<double> weights(log_weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    weights[i] = std::exp(log_weights[i] - max_lw);
    total += weights[i];
  }
  for (double& w : weights) w /= total;
  return weights;
}

std::vector<int> multinomial_indices(const std::vector<double>& weights, int n, Rng& rng) {
  std::vector<double> cumulative(weights.size());
  double run = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    run += weights[i];
    cumulative[i] = run;
  }
  cumulative.back() = 1.0;
  std::vector<int> indices(n);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    indices[i] = static_cast<int>(
        std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
  }
  return indices;
}

std::vector<int> systematic_indices(const std::vector<double>& weights, int n, Rng& rng) {
  std::vector<int> indices(n);
  const double offset = rng.uniform();
  double cumulative = weights[0];
  int j = 0;
  for (int i = 0; i < n; ++i) {
    const double position = (i + offset) / n;
    while (position > cumulative && j + 1 < static_cast<int>(weights.size())) {
      cumulative += weights[++j];
    }
    indices[i] = j;
  }
  return indices;
}

Mat gather_rows(const Mat& particles, const std::vector<int>& indices) {
  Mat out(indices.size(), particles.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) out.row(i) = particles.row(indices[i]);
  return out;
}

}  // namespace

Mat resample_multinomial(const Mat& particles, const std::vector<double>& log_weights, Rng& rng) {
  require(particles.rows() == static_cast<Eigen::Index>(log_weights.size()),
          "weight count must match particle count");
  const auto weights = normalized_weights(log_weights);
  return gather_rows(particles, multinomial_indices(weights, particles.rows(), rng));
}

Mat resample_systematic(const Mat& particles, const std::vector<double>& log_weights, Rng& rng) {
  require(particles.rows() == static_cast<Eigen::Index>(log_weights.size()),
          "weight count must match particle count");
  const auto weights = normalized_weights(log_weights);
  return gather_rows(particles, systematic_indices(weights, particles.rows(), rng));
}

std::vector<double> SmcResult::betas() const {
  std::vector<double> out;
  out.reserve(levels.size());
  for (const auto& level : levels) out.push_back(level.beta_to);
  return out;
}

SmcResult run_smc_lis(const std::shared_ptr<const TargetModel>& model, const SmcConfig& config,
                      std::uint64_t seed) {
  require(model != nullptr, "SMC needs a model");
  require(config.n_particles >= 2, "need at least two particles");
  require(config.mutation_steps >= 1, "need at least one mutation step per level");
  if (config.fixed_betas) {
    const auto& betas = *config.fixed_betas;
    require(!betas.empty() && betas.back() == 1.0, "fixed schedule must end at 1");
    for (std::size_t k = 0; k + 1 < betas.size(); ++k) {
      require(betas[k] < betas[k + 1], "fixed schedule must be strictly increasing");
    }
  }
  const int n = config.n_particles;
  const int d = model->dim();
  Rng rng(seed);

  SmcResult result;
  Mat particles(n, d);
  for (int i = 0; i < n; ++i) particles.row(i) = rng.normal_vector(d).transpose();

  double beta = 0.0;
  int schedule_cursor = 0;
  for (int level = 0; beta < 1.0; ++level) {
    if (level >= config.max_levels) {
      throw numerical_error("tempering did not reach beta = 1 within max_levels");
    }
    std::vector<double> log_f(n);
    std::vector<Vec> gradients(n);
    for (int i = 0; i < n; ++i) {
      const Vec x = particles.row(i).transpose();
      log_f[i] = model->log_likelihood(x);
      gradients[i] = model->grad_log_likelihood(x);
      if (std::isnan(log_f[i]) || !gradients[i].allFinite()) {
        throw numerical_error("non-finite likelihood data at particle " + std::to_string(i));
      }
    }

    double beta_next;
    if (config.fixed_betas) {
      beta_next = (*config.fixed_betas)[schedule_cursor++];
      require(beta_next > beta, "fixed schedule must move forward");
    } else {
      beta_next = next_beta(log_f, beta, config.ess_threshold);
    }

    std::vector<double> log_weights(n);
    for (int i = 0; i < n; ++i) log_weights[i] = (beta_next - beta) * log_f[i];

    SmcLevel record;
    record.beta_from = beta;
    record.beta_to = beta_next;
    record.ess_ratio = ess(log_weights) / n;
    record.gram = estimate_posterior_gram_weighted(gradients, log_weights);
    record.gram.kind = GramKind::SmcWeighted;
    record.subspace = leading_eigs(record.gram, config.reduced_dim);
    if (config.record_level_detail) {
      record.particles = particles;
      Mat grad_matrix(n, d);
      for (int i = 0; i < n; ++i) grad_matrix.row(i) = gradients[i].transpose();
      record.gradients = std::move(grad_matrix);
      record.log_f = Eigen::Map<const Vec>(log_f.data(), n);
    }

    const auto surrogate = std::make_shared<SurrogateDensity>(
        model, record.subspace, config.kind, config.marginal_samples,
        BankPolicy::FixedSeedBank, Rng::derive_seed(seed, 0x53AC + level), beta_next);

    // one independent categorical draw per mutation slot, as the resampling
    // inside the per-particle loop
    Rng resample_rng = rng.child(0xCA7 + level);
    const auto weights = normalized_weights(log_weights);
    const std::vector<int> ancestry =
        config.systematic_resampling ? systematic_indices(weights, n, resample_rng)
                                     : multinomial_indices(weights, n, resample_rng);

    Mat mutated(n, d);
    std::vector<double> slot_accept_low(n), slot_accept_full(n);
    const std::uint64_t level_seed = Rng::derive_seed(seed, 0x3A6 + level);
    parallel_for(n, config.threads, [&](int slot) {
      Rng slot_rng(Rng::derive_seed(level_seed, slot));
      const Vec start = particles.row(ancestry[slot]).transpose();
      const ChainRecord chain = run_lis_mcmc(*model, *surrogate, start, config.mutation_steps,
                                             config.mh, slot_rng);
      mutated.row(slot) = chain.states.row(config.mutation_steps - 1);
      slot_accept_low[slot] = chain.accept_rate_low();
      slot_accept_full[slot] = chain.accept_rate_full();
    });

    record.accept_rate_low = 0.0;
    record.accept_rate_full = 0.0;
    for (int i = 0; i < n; ++i) {
      record.accept_rate_low += slot_accept_low[i] / n;
      record.accept_rate_full += slot_accept_full[i] / n;
    }

    particles = std::move(mutated);
    beta = beta_next;
    result.levels.push_back(std::move(record));
  }
  result.particles = std::move(particles);
  return result;
}

}  // namespace lis
