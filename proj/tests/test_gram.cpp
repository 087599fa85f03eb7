#include <doctest.h>

#include <cmath>

#include "lis/diagnostics.hpp"
#include "lis/gram.hpp"
#include "lis/model.hpp"
#include "lis/rng.hpp"
#include "support.hpp"

using namespace lis;

namespace {

LinearGaussianModel random_linear(int d, int d_y, std::uint64_t seed) {
  Rng rng(seed);
  Mat map(d_y, d);
  for (int i = 0; i < d_y; ++i)
    for (int j = 0; j < d; ++j) map(i, j) = rng.normal();
  return LinearGaussianModel(map, rng.normal_vector(d_y));
}

}  // namespace

TEST_CASE("reference gram: constant likelihood gives the zero matrix") {
  LinearGaussianModel model(Mat::Zero(2, 4), Vec::Ones(2));
  for (int m : {1, 7, 50}) {
    const auto estimate = estimate_reference_gram(model, m, 3);
    CHECK(estimate.matrix.norm() == 0.0);
    CHECK(estimate.sample_count == m);
  }
}

TEST_CASE("reference gram converges to the closed form entrywise") {
  const auto model = random_linear(10, 6, 2024);
  const Mat exact = linear_exact_reference_gram(model);

  // batched estimates give entrywise standard errors
  const int batches = 50;
  const int per_batch = 2000;
  std::vector<Mat> means;
  for (int b = 0; b < batches; ++b) {
    means.push_back(estimate_reference_gram(model, per_batch, Rng::derive_seed(5, b)).matrix);
  }
  Mat pooled = Mat::Zero(10, 10);
  for (const auto& m : means) pooled += m / batches;
  Mat se = Mat::Zero(10, 10);
  for (const auto& m : means) se += (m - pooled).cwiseAbs2();
  se = (se / (batches - 1.0) / batches).cwiseSqrt();
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      CHECK(std::abs(pooled(i, j) - exact(i, j)) < 3.0 * se(i, j) + 1e-9);
    }
  }
}

TEST_CASE("reference gram: three-term sum reproduces the RNG stream") {
  const auto model = random_linear(2, 2, 77);
  const std::uint64_t seed = 4242;
  const auto estimate = estimate_reference_gram(model, 3, seed);

  Rng rng(seed);
  Mat expected = Mat::Zero(2, 2);
  for (int i = 0; i < 3; ++i) {
    const Vec x = rng.normal_vector(2);
    const Vec g = model.grad_log_likelihood(x);
    expected += (g * g.transpose()) / 3.0;
  }
  CHECK((estimate.matrix - expected).norm() < 1e-12 * (1.0 + expected.norm()));
}

TEST_CASE("reference gram: determinism and PSD floor") {
  const auto model = random_linear(5, 3, 9);
  const auto a = estimate_reference_gram(model, 257, 11);
  const auto b = estimate_reference_gram(model, 257, 11);
  CHECK(a.matrix == b.matrix);  // bit identical
  CHECK(a.variance_estimate == b.variance_estimate);
  Eigen::SelfAdjointEigenSolver<Mat> eigs(a.matrix, Eigen::EigenvaluesOnly);
  CHECK(eigs.eigenvalues().minCoeff() >= -1e-8 * eigs.eigenvalues().maxCoeff());
  CHECK((a.matrix - a.matrix.transpose()).norm() < 1e-10);
}

TEST_CASE("weighted gram: equal weights reduce to the plain mean") {
  Rng rng(3);
  std::vector<Vec> gradients;
  std::vector<double> log_weights;
  Mat plain = Mat::Zero(3, 3);
  for (int i = 0; i < 6; ++i) {
    gradients.push_back(rng.normal_vector(3));
    log_weights.push_back(2.5);
    plain += gradients.back() * gradients.back().transpose() / 6.0;
  }
  const auto estimate = estimate_posterior_gram_weighted(gradients, log_weights);
  CHECK((estimate.matrix - plain).norm() < 1e-12 * plain.norm());
  CHECK(estimate.kind == GramKind::WeightedIS);
}

TEST_CASE("weighted gram: a single finite weight dominates") {
  Rng rng(4);
  std::vector<Vec> gradients{rng.normal_vector(3), rng.normal_vector(3), rng.normal_vector(3)};
  std::vector<double> log_weights{kNegInf, -1.25, kNegInf};
  const auto estimate = estimate_posterior_gram_weighted(gradients, log_weights);
  const Mat expected = gradients[1] * gradients[1].transpose();
  CHECK((estimate.matrix - expected).norm() < 1e-12 * expected.norm());
}

TEST_CASE("weighted gram matches a naive exp-space computation") {
  Rng rng(5);
  std::vector<Vec> gradients;
  std::vector<double> log_weights;
  for (int i = 0; i < 5; ++i) {
    gradients.push_back(rng.normal_vector(4));
    log_weights.push_back(rng.normal());
  }
  double total = 0.0;
  Mat expected = Mat::Zero(4, 4);
  for (int i = 0; i < 5; ++i) {
    const double w = std::exp(log_weights[i]);
    expected += w * gradients[i] * gradients[i].transpose();
    total += w;
  }
  expected /= total;
  const auto estimate = estimate_posterior_gram_weighted(gradients, log_weights);
  CHECK((estimate.matrix - expected).norm() < 1e-12 * expected.norm());
}

TEST_CASE("weighted gram: shift invariance and degeneracy error") {
  Rng rng(6);
  std::vector<Vec> gradients;
  std::vector<double> log_weights;
  for (int i = 0; i < 8; ++i) {
    gradients.push_back(rng.normal_vector(3));
    log_weights.push_back(rng.normal());
  }
  const auto base = estimate_posterior_gram_weighted(gradients, log_weights);
  for (double shift : {-3.0, 7.0, 123.4}) {
    auto shifted = log_weights;
    for (double& lw : shifted) lw += shift;
    const auto moved = estimate_posterior_gram_weighted(gradients, shifted);
    CHECK((moved.matrix - base.matrix).norm() < 1e-12 * (1.0 + base.matrix.norm()));
  }
  CHECK_THROWS_AS(
      estimate_posterior_gram_weighted(gradients, std::vector<double>(8, kNegInf)),
      numerical_error);
}

TEST_CASE("chain gram: single state and constant likelihood") {
  const auto model = random_linear(3, 2, 8);
  Rng rng(9);
  const Vec x = rng.normal_vector(3);
  Mat single(1, 3);
  single.row(0) = x.transpose();
  const auto estimate = estimate_posterior_gram_chain(model, single);
  const Vec g = model.grad_log_likelihood(x);
  CHECK((estimate.matrix - g * g.transpose()).norm() < 1e-12);

  LinearGaussianModel flat(Mat::Zero(2, 3), Vec::Ones(2));
  Mat states(4, 3);
  states.setRandom();
  CHECK(estimate_posterior_gram_chain(flat, states).matrix.norm() == 0.0);
}

TEST_CASE("chain gram over exact posterior samples matches the closed form") {
  const auto model = random_linear(10, 6, 31);
  const Mat exact = linear_exact_posterior_gram(model);
  const int batches = 120;
  const int per_batch = 2000;
  Mat pooled = Mat::Zero(10, 10);
  std::vector<Mat> means;
  for (int b = 0; b < batches; ++b) {
    const Mat draws = sample_exact_linear_posterior(model, per_batch, Rng::derive_seed(77, b));
    means.push_back(estimate_posterior_gram_chain(model, draws).matrix);
    pooled += means.back() / batches;
  }
  Mat se = Mat::Zero(10, 10);
  for (const auto& m : means) se += (m - pooled).cwiseAbs2();
  se = (se / (batches - 1.0) / batches).cwiseSqrt();
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      CHECK(std::abs(pooled(i, j) - exact(i, j)) < 3.0 * se(i, j) + 1e-9);
    }
  }
}

TEST_CASE("epoch running mean follows the retained-window formula") {
  const auto scalar_estimate = [](double v) {
    GramEstimate e;
    e.matrix = Mat::Constant(1, 1, v);
    e.sample_count = 1;
    e.kind = GramKind::ChainEpochAverage;
    return e;
  };
  std::vector<GramEstimate> history;
  for (int i = 1; i <= 6; ++i) history.push_back(scalar_estimate(static_cast<double>(i)));

  CHECK(epoch_running_mean(history, 0, 3).matrix(0, 0) == doctest::Approx(1.0));
  SUBCASE("equal matrices give the common matrix") {
    std::vector<GramEstimate> equal(4, scalar_estimate(2.5));
    CHECK(epoch_running_mean(equal, 3, 2).matrix(0, 0) == doctest::Approx(2.5));
  }
  // indices 0..5 hold values 1..6; window min(5,3)..5 keeps {4,5,6}
  CHECK(epoch_running_mean(history, 5, 3).matrix(0, 0) == doctest::Approx(5.0));
  CHECK_THROWS_AS(epoch_running_mean(history, 9, 3), contract_error);
}

TEST_CASE("empirical one-sample variance") {
  SUBCASE("identical terms vanish") {
    std::vector<Mat> terms(5, Mat::Constant(2, 2, 1.5));
    CHECK(empirical_one_sample_variance(terms) == doctest::Approx(0.0));
  }
  SUBCASE("two scalar terms") {
    std::vector<Mat> terms{Mat::Constant(1, 1, 0.0), Mat::Constant(1, 1, 2.0)};
    CHECK(empirical_one_sample_variance(terms) == doctest::Approx(2.0));
  }
  SUBCASE("random terms match a naive double loop") {
    Rng rng(12);
    std::vector<Mat> terms;
    for (int k = 0; k < 10; ++k) {
      Mat t(2, 2);
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) t(i, j) = rng.normal();
      terms.push_back(t);
    }
    double expected = 0.0;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        double mean = 0.0;
        for (const auto& t : terms) mean += t(i, j) / 10.0;
        double ss = 0.0;
        for (const auto& t : terms) ss += (t(i, j) - mean) * (t(i, j) - mean);
        expected += ss / 9.0;
      }
    }
    CHECK(empirical_one_sample_variance(terms) == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("fewer than two terms is an error") {
    CHECK_THROWS_AS(empirical_one_sample_variance({Mat::Identity(2, 2)}), contract_error);
  }
}

TEST_CASE("accumulator merge is exact in sums and counts") {
  Rng rng(13);
  const auto model = random_linear(4, 3, 14);
  GramAccumulator left(4), right(4);
  std::vector<Vec> gradients;
  for (int i = 0; i < 40; ++i) {
    gradients.push_back(model.grad_log_likelihood(rng.normal_vector(4)));
    (i < 17 ? left : right).add(gradients.back());
  }
  GramAccumulator merged(4);
  merged.merge(left);
  merged.merge(right);
  CHECK(merged.count() == 40);
  // merged result equals combining the two partial sums directly
  const auto l = left.finalize(GramKind::ReferenceMC);
  const auto r = right.finalize(GramKind::ReferenceMC);
  const Mat expected = (17.0 * l.matrix + 23.0 * r.matrix) / 40.0;
  const auto whole = merged.finalize(GramKind::ReferenceMC);
  CHECK((whole.matrix - expected).norm() < 1e-12 * (1.0 + expected.norm()));
}

TEST_CASE("variance estimate is dominated by the fourth-moment bound") {
  // with the reference as the sampling density, the one-sample variance is
  // at most E |grad log f|^4
  const auto model = random_linear(6, 4, 15);
  const int batches = 50;
  const int per_batch = 400;
  std::vector<double> variance_batches(batches), fourth_batches(batches);
  for (int b = 0; b < batches; ++b) {
    Rng rng(Rng::derive_seed(1000, b));
    GramAccumulator acc(6);
    double fourth = 0.0;
    for (int i = 0; i < per_batch; ++i) {
      const Vec g = model.grad_log_likelihood(rng.normal_vector(6));
      acc.add(g);
      fourth += std::pow(g.squaredNorm(), 2) / per_batch;
    }
    variance_batches[b] = *acc.finalize(GramKind::ReferenceMC).variance_estimate;
    fourth_batches[b] = fourth;
  }
  const auto v = testing::chain_mean(variance_batches);
  const auto q = testing::chain_mean(fourth_batches);
  CHECK(v.mean <= q.mean + 3.0 * std::hypot(v.std_err, q.std_err));
}
