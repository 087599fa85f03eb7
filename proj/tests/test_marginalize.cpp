#include <doctest.h>

#include <cmath>
#include <memory>

#include "lis/diagnostics.hpp"
#include "lis/marginalize.hpp"
#include "lis/model.hpp"
#include "lis/rng.hpp"
#include "lis/subspace.hpp"
#include "support.hpp"

using namespace lis;

namespace {

std::shared_ptr<LinearGaussianModel> shared_linear(int d, int d_y, std::uint64_t seed,
                                                   double scale = 1.0) {
  Rng rng(seed);
  Mat map(d_y, d);
  for (int i = 0; i < d_y; ++i)
    for (int j = 0; j < d; ++j) map(i, j) = scale * rng.normal();
  return std::make_shared<LinearGaussianModel>(map, rng.normal_vector(d_y));
}

Subspace subspace_of(const LinearGaussianModel& model, int d_r) {
  return leading_eigs(linear_exact_posterior_gram(model), d_r);
}

// brute-force conditional expectation of f over the 1-D complement via
// Gauss-Hermite quadrature; valid for d - d_r = 1
double quadrature_log_marginal(const LinearGaussianModel& model, const Subspace& subspace,
                               const Vec& coeffs, MarginalKind kind) {
  REQUIRE(subspace.dim() - subspace.reduced_dim() == 1);
  // complement direction from a QR completion of the basis
  Eigen::HouseholderQR<Mat> qr(subspace.basis);
  const Mat full = qr.householderQ();
  const Vec complement_dir = full.col(subspace.dim() - 1);
  const Vec base = subspace.basis * coeffs;
  const auto rule = gauss_hermite(64);
  std::vector<double> log_terms(rule.nodes.size());
  for (Eigen::Index i = 0; i < rule.nodes.size(); ++i) {
    log_terms[i] = model.log_likelihood(base + rule.nodes[i] * complement_dir);
  }
  switch (kind) {
    case MarginalKind::Likelihood: {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < rule.nodes.size(); ++i)
        acc += rule.weights[i] * std::exp(log_terms[i]);
      return std::log(acc);
    }
    case MarginalKind::SqrtLikelihood: {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < rule.nodes.size(); ++i)
        acc += rule.weights[i] * std::exp(0.5 * log_terms[i]);
      return 2.0 * std::log(acc);
    }
    case MarginalKind::LogLikelihood: {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < rule.nodes.size(); ++i)
        acc += rule.weights[i] * log_terms[i];
      return acc;
    }
  }
  return 0.0;
}

}  // namespace

TEST_CASE("constant likelihood marginalizes to its own value for every kind") {
  Vec y(2);
  y << 0.7, -0.4;
  auto model = std::make_shared<LinearGaussianModel>(Mat::Zero(2, 4), y);
  const double log_c = -0.5 * y.squaredNorm();
  const auto subspace = leading_eigs(Mat::Identity(4, 4), 2);
  for (auto kind :
       {MarginalKind::Likelihood, MarginalKind::SqrtLikelihood, MarginalKind::LogLikelihood}) {
    for (int m : {1, 4, 33}) {
      SurrogateDensity surrogate(model, subspace, kind, m, BankPolicy::FixedSeedBank, 5);
      CHECK(surrogate.log_marginal(Vec::Zero(2)) == doctest::Approx(log_c).epsilon(1e-12));
    }
  }
}

TEST_CASE("single-sample marginalization makes all kinds coincide") {
  auto model = shared_linear(5, 3, 17);
  const auto subspace = subspace_of(*model, 2);
  Rng rng(18);
  const Vec coeffs = rng.normal_vector(2);
  double values[3];
  int idx = 0;
  for (auto kind :
       {MarginalKind::Likelihood, MarginalKind::SqrtLikelihood, MarginalKind::LogLikelihood}) {
    SurrogateDensity surrogate(model, subspace, kind, 1, BankPolicy::FixedSeedBank, 7);
    values[idx++] = surrogate.log_marginal(coeffs);
  }
  CHECK(values[0] == doctest::Approx(values[1]).epsilon(1e-12));
  CHECK(values[1] == doctest::Approx(values[2]).epsilon(1e-12));
}

TEST_CASE("Monte Carlo marginal agrees with Gauss-Hermite quadrature") {
  auto model = shared_linear(2, 2, 19, 0.8);
  const auto subspace = subspace_of(*model, 1);
  Rng rng(20);
  const Vec coeffs = rng.normal_vector(1);
  const double oracle = quadrature_log_marginal(*model, subspace, coeffs, MarginalKind::Likelihood);

  SurrogateDensity fixed(model, subspace, MarginalKind::Likelihood, 10000,
                         BankPolicy::FixedSeedBank, 21);
  // spread of fresh-bank evaluations gives the Monte Carlo standard error
  SurrogateDensity fresh(model, subspace, MarginalKind::Likelihood, 10000, BankPolicy::Fresh, 22);
  std::vector<double> fresh_values(40);
  for (auto& v : fresh_values) v = fresh.log_marginal(coeffs);
  const auto spread = testing::chain_mean(fresh_values);
  const double se = spread.std_err * std::sqrt(static_cast<double>(fresh_values.size()));
  CHECK(std::abs(fixed.log_marginal(coeffs) - oracle) < 3.0 * se);
}

TEST_CASE("error policy for vanished likelihood terms") {
  // a likelihood that is -inf on half the complement directions
  struct HalfSpace : TargetModel {
    WhitenedReference ref{2};
    int dim() const override { return 2; }
    const WhitenedReference& reference() const override { return ref; }
    double log_likelihood(const Vec& x) const override {
      return x[1] > 0.0 ? kNegInf : -0.5 * x[0] * x[0];
    }
    Vec grad_log_likelihood(const Vec& x) const override {
      Vec g(2);
      g << -x[0], 0.0;
      return g;
    }
  };
  auto model = std::make_shared<HalfSpace>();
  const auto subspace = leading_eigs(Mat::Identity(2, 2), 1);
  const Vec coeffs = Vec::Zero(1);

  SurrogateDensity mean_kind(model, subspace, MarginalKind::Likelihood, 64,
                             BankPolicy::FixedSeedBank, 23);
  CHECK(std::isfinite(mean_kind.log_marginal(coeffs)));  // -inf terms tolerated

  SurrogateDensity log_kind(model, subspace, MarginalKind::LogLikelihood, 64,
                            BankPolicy::FixedSeedBank, 23);
  CHECK_THROWS_AS(log_kind.log_marginal(coeffs), numerical_error);

  // all terms -inf: the mean-kind surrogate reports -inf rather than failing
  struct Nowhere : HalfSpace {
    double log_likelihood(const Vec&) const override { return kNegInf; }
  };
  SurrogateDensity gone(std::make_shared<Nowhere>(), subspace, MarginalKind::Likelihood, 8,
                        BankPolicy::FixedSeedBank, 24);
  CHECK(gone.log_marginal(coeffs) == kNegInf);
}

TEST_CASE("surrogate posterior of a flat likelihood is the reference marginal") {
  auto model = std::make_shared<LinearGaussianModel>(Mat::Zero(2, 5), Vec::Zero(2));
  const auto subspace = leading_eigs(Mat::Identity(5, 5), 3);
  SurrogateDensity surrogate(model, subspace, MarginalKind::Likelihood, 4,
                             BankPolicy::FixedSeedBank, 25);
  CHECK(surrogate.log_surrogate_posterior(Vec::Zero(3)) ==
        doctest::Approx(-1.5 * kLogTwoPi).epsilon(1e-12));
}

TEST_CASE("surrogate value depends on the span, not the basis") {
  auto model = shared_linear(6, 4, 26);
  const auto subspace = subspace_of(*model, 3);
  Rng rng(27);
  const Mat rotation = testing::random_orthonormal(3, 3, rng);
  Subspace rotated = subspace;
  rotated.basis = subspace.basis * rotation;

  for (auto kind :
       {MarginalKind::Likelihood, MarginalKind::SqrtLikelihood, MarginalKind::LogLikelihood}) {
    SurrogateDensity base(model, subspace, kind, 16, BankPolicy::FixedSeedBank, 28);
    SurrogateDensity turned(model, rotated, kind, 16, BankPolicy::FixedSeedBank, 28);
    for (int rep = 0; rep < 5; ++rep) {
      const Vec coeffs = rng.normal_vector(3);
      const Vec turned_coeffs = rotation.transpose() * coeffs;
      CHECK(std::abs(base.log_surrogate_posterior(coeffs) -
                     turned.log_surrogate_posterior(turned_coeffs)) < 1e-9);
    }
  }
}

TEST_CASE("sqrt-kind marginal never exceeds the mean-kind marginal on a shared bank") {
  auto model = shared_linear(5, 3, 29);
  const auto subspace = subspace_of(*model, 2);
  Rng rng(30);
  for (int rep = 0; rep < 10; ++rep) {
    const Vec coeffs = rng.normal_vector(2);
    SurrogateDensity mean_kind(model, subspace, MarginalKind::Likelihood, 10000,
                               BankPolicy::FixedSeedBank, 31);
    SurrogateDensity sqrt_kind(model, subspace, MarginalKind::SqrtLikelihood, 10000,
                               BankPolicy::FixedSeedBank, 31);
    CHECK(sqrt_kind.log_marginal(coeffs) <= mean_kind.log_marginal(coeffs) + 1e-12);
  }
}

TEST_CASE("conditional complement sampler") {
  auto model = shared_linear(5, 3, 32);
  SUBCASE("full-dimensional subspace leaves no complement") {
    const auto subspace = subspace_of(*model, 5);
    ConditionalReferenceSampler sampler(subspace, 33, 4);
    Rng rng(34);
    const Vec coeffs = rng.normal_vector(5);
    const Mat points = sampler.sample_conditional_complement(coeffs, 4);
    for (int i = 0; i < 4; ++i) {
      CHECK((points.row(i).transpose() - subspace.basis * coeffs).norm() < 1e-10);
    }
  }
  SUBCASE("complement moments match the projector") {
    const auto subspace = subspace_of(*model, 2);
    ConditionalReferenceSampler sampler(subspace, 35, 0);
    const int n = 100000;
    Mat projector = Mat::Identity(5, 5) - subspace.basis * subspace.basis.transpose();
    Vec mean = Vec::Zero(5);
    Mat cov = Mat::Zero(5, 5);
    for (int i = 0; i < n; ++i) {
      const Vec c = sampler.complement_block(i);
      mean += c / n;
      cov += c * c.transpose() / n;
    }
    CHECK(mean.cwiseAbs().maxCoeff() < 3.0 / std::sqrt(static_cast<double>(n)) + 0.005);
    CHECK((cov - projector).cwiseAbs().maxCoeff() <
          3.0 * std::sqrt(2.0 / static_cast<double>(n)) + 0.005);
  }
  SUBCASE("seed determinism") {
    const auto subspace = subspace_of(*model, 2);
    ConditionalReferenceSampler a(subspace, 36, 8);
    ConditionalReferenceSampler b(subspace, 36, 8);
    Rng rng(37);
    const Vec coeffs = rng.normal_vector(2);
    CHECK(a.sample_conditional_complement(coeffs, 8) ==
          b.sample_conditional_complement(coeffs, 8));
  }
}

TEST_CASE("fixed bank evaluation is bit-stable; fresh evaluation is unbiased") {
  auto model = shared_linear(4, 3, 38, 0.9);
  const auto subspace = subspace_of(*model, 1);
  Rng rng(39);
  Vec coeffs(1);
  coeffs << 0.4;

  SurrogateDensity fixed(model, subspace, MarginalKind::Likelihood, 4,
                         BankPolicy::FixedSeedBank, 40);
  const double first = fixed.log_marginal(coeffs);
  for (int rep = 0; rep < 5; ++rep) CHECK(fixed.log_marginal(coeffs) == first);

  // hold the subspace, vary the bank: fresh f-bar draws average to the
  // closed-form conditional marginal
  const double oracle =
      std::exp(linear_exact_marginal(*model, subspace, MarginalKind::Likelihood)(coeffs));
  SurrogateDensity fresh(model, subspace, MarginalKind::Likelihood, 4, BankPolicy::Fresh, 41);
  const int reps = 10000;
  std::vector<double> values(reps);
  for (auto& v : values) v = std::exp(fresh.log_marginal(coeffs));
  const auto moment = testing::chain_mean(values);
  CHECK(std::abs(moment.mean - oracle) < 3.0 * moment.std_err);
}
