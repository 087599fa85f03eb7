#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "lis/diagnostics.hpp"
#include "lis/io.hpp"
#include "lis/model.hpp"
#include "lis/rng.hpp"
#include "support.hpp"

using namespace lis;

namespace {

LinearGaussianModel small_linear(int d, int d_y, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Mat map(d_y, d);
  for (int i = 0; i < d_y; ++i)
    for (int j = 0; j < d; ++j) map(i, j) = scale * rng.normal();
  const Vec y = rng.normal_vector(d_y);
  return LinearGaussianModel(map, y);
}

}  // namespace

TEST_CASE("log unnormalized target: zero map reduces to the reference") {
  const int d = 3;
  LinearGaussianModel model(Mat::Zero(2, d), Vec::Zero(2));
  const Vec x = Vec::Zero(d);
  CHECK(log_unnormalized_target(model, x) == doctest::Approx(-0.5 * d * kLogTwoPi).epsilon(1e-14));
}

TEST_CASE("log unnormalized target: scalar quadratic case") {
  Mat map(1, 1);
  map << 1.0;
  LinearGaussianModel model(map, Vec::Zero(1));
  Vec x(1);
  x << 1.0;
  const double expected = -0.5 - 0.5 * kLogTwoPi - 0.5;
  CHECK(log_unnormalized_target(model, x) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("log unnormalized target: log-normal model matches a scalar re-implementation") {
  Rng rng(7);
  const int d = 2, d_y = 2;
  Mat map(d_y, d);
  map << 0.7, -0.3, 0.1, 1.2;
  Vec gamma_sqrt(d);
  gamma_sqrt << 0.9, 0.4;
  Vec y(d_y);
  y << 0.5, -1.0;
  const double sigma = 0.8;
  LogNormalObservationModel model(map, gamma_sqrt, sigma, y);

  for (int rep = 0; rep < 5; ++rep) {
    const Vec x = rng.normal_vector(d);
    // straight-line formula, scalar arithmetic only
    double r0 = y[0], r1 = y[1];
    for (int j = 0; j < d; ++j) {
      const double field = std::exp(gamma_sqrt[j] * x[j]);
      r0 -= map(0, j) * field;
      r1 -= map(1, j) * field;
    }
    const double expected_ll = -(r0 * r0 + r1 * r1) / (2.0 * sigma * sigma);
    const double expected =
        expected_ll - 0.5 * d * kLogTwoPi - 0.5 * (x[0] * x[0] + x[1] * x[1]);
    CHECK(log_unnormalized_target(model, x) == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK_THROWS_AS(log_unnormalized_target(model, Vec::Zero(5)), contract_error);
}

TEST_CASE("exact linear posterior: prior recovered for a zero map") {
  LinearGaussianModel model(Mat::Zero(2, 3), Vec::Ones(2));
  const auto moments = exact_linear_posterior(model);
  CHECK(moments.mean.norm() == doctest::Approx(0.0).epsilon(1e-14));
  CHECK((moments.covariance - Mat::Identity(3, 3)).norm() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("exact linear posterior: scalar case") {
  Mat map(1, 1);
  map << 1.0;
  Vec y(1);
  y << 2.0;
  LinearGaussianModel model(map, y);
  const auto moments = exact_linear_posterior(model);
  CHECK(moments.mean[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(moments.covariance(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("exact linear posterior: importance sampling cross-check") {
  const auto model = small_linear(2, 2, 11);
  const auto moments = exact_linear_posterior(model);
  const int n = 1000000;
  Rng rng(99);
  Vec weighted_mean = Vec::Zero(2);
  double max_log_w = kNegInf;
  std::vector<Vec> draws(n);
  std::vector<double> log_w(n);
  for (int i = 0; i < n; ++i) {
    draws[i] = rng.normal_vector(2);
    log_w[i] = model.log_likelihood(draws[i]);
    max_log_w = std::max(max_log_w, log_w[i]);
  }
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    log_w[i] = std::exp(log_w[i] - max_log_w);
    total += log_w[i];
    weighted_mean += log_w[i] * draws[i];
  }
  weighted_mean /= total;
  // delta-method standard errors with self-normalized weights
  Vec se_mean = Vec::Zero(2);
  Mat weighted_cov = Mat::Zero(2, 2);
  for (int i = 0; i < n; ++i) {
    const Vec centered = draws[i] - weighted_mean;
    const double wn = log_w[i] / total;
    se_mean += (wn * wn) * centered.cwiseAbs2();
    weighted_cov += wn * (centered * centered.transpose());
  }
  se_mean = se_mean.cwiseSqrt();
  for (int j = 0; j < 2; ++j) {
    CHECK(std::abs(weighted_mean[j] - moments.mean[j]) < 3.0 * se_mean[j] + 1e-12);
  }
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      double se_cov = 0.0;
      for (int i = 0; i < n; ++i) {
        const Vec c = draws[i] - weighted_mean;
        const double wn = log_w[i] / total;
        const double z = c[a] * c[b] - weighted_cov(a, b);
        se_cov += wn * wn * z * z;
      }
      se_cov = std::sqrt(se_cov);
      CHECK(std::abs(weighted_cov(a, b) - moments.covariance(a, b)) < 3.0 * se_cov + 1e-12);
    }
  }
}

TEST_CASE("exact linear log normalizer: closed-form edge cases") {
  SUBCASE("zero map") {
    Vec y(2);
    y << 1.0, -2.0;
    LinearGaussianModel model(Mat::Zero(2, 3), y);
    CHECK(exact_linear_log_normalizer(model) ==
          doctest::Approx(-0.5 * y.squaredNorm()).epsilon(1e-14));
  }
  SUBCASE("zero data leaves only the determinant term") {
    const auto base = small_linear(3, 2, 21);
    LinearGaussianModel model(base.observation_map(), Vec::Zero(2));
    Eigen::LLT<Mat> llt(base.gram() + Mat::Identity(3, 3));
    double log_det = 0.0;
    for (int i = 0; i < 3; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
    CHECK(exact_linear_log_normalizer(model) == doctest::Approx(-0.5 * log_det).epsilon(1e-12));
  }
}

TEST_CASE("exact linear log normalizer matches dense grid quadrature") {
  const auto model = small_linear(2, 1, 31, 0.7);
  const double quadrature = grid_log_normalizer(model, 401, 8.0);
  const double exact = exact_linear_log_normalizer(model);
  CHECK(std::abs(quadrature - exact) / std::abs(exact) < 1e-6);
}

TEST_CASE("tempered normalizer endpoints") {
  const auto model = small_linear(3, 2, 41);
  CHECK(exact_linear_log_normalizer(model, 0.0) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(exact_linear_log_normalizer(model, 1.0) ==
        doctest::Approx(exact_linear_log_normalizer(model)).epsilon(1e-14));
}

TEST_CASE("gradient consistency across the built-in models") {
  Rng rng(5150);

  const auto linear = small_linear(6, 4, 1);
  for (int rep = 0; rep < 20; ++rep) {
    const Vec x = rng.normal_vector(6);
    CHECK(gradient_relative_error(linear, x) < 1e-4);
  }

  const auto lognormal_bundle = make_model_from_json(
      R"({"kind":"log_normal","dim":6,"dim_obs":4,"seed":3,"gamma0":2.0,"beta_gamma":2.0,
          "lambda0":3.0,"beta_lambda":1.0,"sigma":0.5})");
  for (int rep = 0; rep < 20; ++rep) {
    const Vec x = rng.normal_vector(6);
    CHECK(gradient_relative_error(*lognormal_bundle.model, x) < 1e-4);
  }

  const auto elliptic_bundle = make_model_from_json(
      R"({"kind":"elliptic1d","n_grid":15,"seed":4,"sigma":0.05,"corr_length":0.5,"n_windows":5})");
  for (int rep = 0; rep < 20; ++rep) {
    const Vec x = rng.normal_vector(16);
    CHECK(gradient_relative_error(*elliptic_bundle.model, x) < 1e-4);
  }
}

TEST_CASE("whitening round trip") {
  Rng rng(88);
  const int d = 7;
  Mat factor = testing::random_psd(d, rng) + 0.5 * Mat::Identity(d, d);
  WhitenedReference reference(d, factor);
  for (int rep = 0; rep < 10; ++rep) {
    const Vec z = rng.normal_vector(d);
    CHECK((reference.unwhiten(reference.whiten(z)) - z).norm() < 1e-12 * (1.0 + z.norm()));
    CHECK((reference.whiten(reference.unwhiten(z)) - z).norm() < 1e-12 * (1.0 + z.norm()));
  }
  CHECK_THROWS_AS(WhitenedReference(d, -Mat::Identity(d, d)), contract_error);
}

TEST_CASE("elliptic model: homogeneous coefficient gives the linear profile") {
  const int n_grid = 19;
  std::vector<std::pair<int, int>> windows{{0, 4}, {5, 9}, {10, 18}};
  Elliptic1DModel model(n_grid, windows, 0.05, Vec::Zero(3), 0.5);
  const Vec zero_field = Vec::Zero(n_grid + 1);
  const Vec u = model.solve(zero_field);
  const double h = 1.0 / (n_grid + 1);
  for (int i = 0; i < n_grid; ++i) {
    CHECK(u[i] == doctest::Approx(1.0 - (i + 1) * h).epsilon(1e-13));
  }
}

TEST_CASE("elliptic model: discrete flux is constant across the grid") {
  Rng rng(123);
  const int n_grid = 24;
  std::vector<std::pair<int, int>> windows{{0, 11}, {12, 23}};
  Elliptic1DModel model(n_grid, windows, 0.05, Vec::Zero(2), 0.3);
  for (int rep = 0; rep < 5; ++rep) {
    const Vec x = rng.normal_vector(n_grid + 1);
    const Vec flux = model.flux(x);
    for (int c = 0; c <= n_grid; ++c) {
      CHECK(std::abs(flux[c] - flux[0]) < 1e-10 * (1.0 + std::abs(flux[0])));
    }
  }
}

TEST_CASE("model JSON factory validates its input") {
  CHECK_THROWS_AS(make_model_from_json("not json"), contract_error);
  CHECK_THROWS_AS(make_model_from_json(R"({"dim": 3})"), contract_error);
  CHECK_THROWS_AS(make_model_from_json(R"({"kind":"martian"})"), contract_error);
  CHECK_THROWS_AS(
      make_model_from_json(R"({"kind":"linear_gaussian","dim":3,"dim_obs":2,"wat":1})"),
      contract_error);
  CHECK_THROWS_AS(
      make_model_from_json(
          R"({"kind":"log_normal","dim":3,"dim_obs":2,"sigma":-1.0})"),
      contract_error);
}

TEST_CASE("model JSON factory is deterministic and writes synthetic data") {
  const std::string config =
      R"({"kind":"linear_gaussian","dim":4,"dim_obs":3,"seed":17,"sv_scale":2.0,"sv_decay":1.0})";
  const auto a = make_model_from_json(config);
  const auto b = make_model_from_json(config);
  CHECK((a.data - b.data).norm() == 0.0);
  REQUIRE(a.truth.has_value());
  CHECK((*a.truth - *b.truth).norm() == 0.0);

  const auto path = std::filesystem::temp_directory_path() / "lis_test_synthetic.csv";
  write_synthetic_data_csv(path, a.data, a.truth);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "index,y,truth");
  std::filesystem::remove(path);
}
