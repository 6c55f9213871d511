#include "adp/diffusion.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace adp;

namespace {

ActionSeq randn(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  ActionSeq a(rows, cols);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n(rng);
  return a;
}

}  // namespace

TEST_SUITE("diffusion") {

TEST_CASE("single-step schedule") {
  const auto s = make_noise_schedule(1, 0.5, 0.5);
  CHECK(s.T == 1);
  CHECK(s.alpha_bar[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s.sigma[0] == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
}

TEST_CASE("two-step schedule by hand") {
  const auto s = schedule_from_betas({0.1, 0.2});
  CHECK(s.alpha_bar[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(s.alpha_bar[1] == doctest::Approx(0.72).epsilon(1e-15));
  CHECK(s.alpha_bar_at(0) == 1.0);
}

TEST_CASE("linear schedule invariants and direct product") {
  const auto s = make_noise_schedule(100, 1e-4, 0.02);
  CHECK(s.beta.front() == doctest::Approx(1e-4).epsilon(1e-14));
  CHECK(s.beta.back() == doctest::Approx(0.02).epsilon(1e-14));
  double prod = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double beta = 1e-4 + (0.02 - 1e-4) * (k - 1) / 99.0;
    CHECK(s.beta_at(k) == doctest::Approx(beta).epsilon(1e-13));
    CHECK(s.alpha_at(k) == 1.0 - s.beta_at(k));
    CHECK(std::abs(s.sigma_at(k) * s.sigma_at(k) - s.beta_at(k)) < 1e-12);
    prod *= 1.0 - beta;
    CHECK(s.alpha_bar_at(k) == doctest::Approx(prod).epsilon(1e-12));
    if (k > 1) CHECK(s.alpha_bar_at(k) < s.alpha_bar_at(k - 1));
  }
  CHECK(s.alpha_bar[0] == s.alpha[0]);
}

TEST_CASE("schedule rejects bad arguments") {
  CHECK_THROWS_AS(make_noise_schedule(0, 1e-4, 0.02), DiffusionError);
  CHECK_THROWS_AS(make_noise_schedule(10, 0.0, 0.02), DiffusionError);
  CHECK_THROWS_AS(make_noise_schedule(10, 0.1, 1.0), DiffusionError);
  CHECK_THROWS_AS(make_noise_schedule(10, 0.2, 0.1), DiffusionError);
  const auto s = make_noise_schedule(10, 1e-4, 0.02);
  CHECK_THROWS_AS(s.index(0), DiffusionError);
  CHECK_THROWS_AS(s.index(11), DiffusionError);
}

TEST_CASE("strided timesteps and schedules") {
  const auto tau = strided_timesteps(100, 8);
  REQUIRE(tau.size() == 8);
  CHECK(tau.front() == 12);
  CHECK(tau.back() == 100);
  CHECK(strided_timesteps(10, 10) == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  CHECK_THROWS_AS(strided_timesteps(10, 11), DiffusionError);

  const auto s = make_noise_schedule(100, 1e-4, 0.02);
  const auto sub = strided_schedule(s, 20);
  const auto t20 = strided_timesteps(100, 20);
  for (int i = 1; i <= 20; ++i) {
    CHECK(sub.alpha_bar_at(i) ==
          doctest::Approx(s.alpha_bar_at(t20[static_cast<std::size_t>(i - 1)])).epsilon(1e-12));
  }
}

TEST_CASE("forward noise limits") {
  std::mt19937_64 rng(1);
  const ActionSeq a0 = randn(16, 2, rng), eps = randn(16, 2, rng);
  const auto clean = schedule_from_betas({1e-15});
  CHECK((forward_noise(clean, a0, 1, eps) - a0).cwiseAbs().maxCoeff() < 1e-7);
  const auto s = make_noise_schedule(100, 1e-4, 0.02);
  const ActionSeq zero = ActionSeq::Zero(16, 2);
  CHECK((forward_noise(s, zero, 50, eps) - std::sqrt(1 - s.alpha_bar_at(50)) * eps)
            .cwiseAbs()
            .maxCoeff() < 1e-15);
  CHECK_THROWS_AS(forward_noise(s, a0, 1, ActionSeq::Zero(8, 2)), DiffusionError);
}

TEST_CASE("forward noise variance at k = T") {
  const auto s = make_noise_schedule(100, 1e-4, 0.02);
  std::mt19937_64 rng(2);
  ActionSeq a0(1, 1);
  a0(0, 0) = 0.7;
  double sum = 0.0, sq = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const double x = forward_noise(s, a0, 100, randn(1, 1, rng))(0, 0);
    sum += x;
    sq += x * x;
  }
  const double var = sq / n - (sum / n) * (sum / n);
  CHECK(var == doctest::Approx(1 - s.alpha_bar_at(100)).epsilon(0.05));
}

TEST_CASE("ddpm step by hand") {
  // Level 2 has beta 0.1 and alpha_bar 0.72.
  const auto h = schedule_from_betas({0.2, 0.1});
  ActionSeq ak = ActionSeq::Ones(1, 1), eps = ActionSeq::Ones(1, 1), z = ActionSeq::Zero(1, 1);
  const double expected = (1 / std::sqrt(0.9)) * (1 - 0.1 / std::sqrt(0.28));
  CHECK(ddpm_reverse_step(h, eps, ak, 2, z)(0, 0) == doctest::Approx(expected).epsilon(1e-14));
  CHECK_THROWS_AS(ddpm_reverse_step(h, eps, ak, 1, ActionSeq::Ones(1, 1)), DiffusionError);
}

TEST_CASE("ddpm step equals the scaled-update form") {
  const auto s = make_noise_schedule(100, 1e-4, 0.02);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> kd(2, 100);
  for (int i = 0; i < 10; ++i) {
    const int k = kd(rng);
    const ActionSeq ak = randn(16, 2, rng), eh = randn(16, 2, rng), z = randn(16, 2, rng);
    const auto c = scaled_update_coefficients(s, k);
    const ActionSeq alt = c.outer * (ak - c.gamma * eh) + c.sigma * z;
    CHECK((ddpm_reverse_step(s, eh, ak, k, z) - alt).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("ddpm round trip with the exact noise") {
  const auto s = make_noise_schedule(100, 1e-4, 0.02);
  std::mt19937_64 rng(4);
  const ActionSeq a0 = randn(16, 2, rng), eps = randn(16, 2, rng);
  ActionSeq a = forward_noise(s, a0, 100, eps);
  const ActionSeq z = ActionSeq::Zero(16, 2);
  for (int k = 100; k >= 1; --k) {
    // The noise consistent with a at level k given a0.
    const ActionSeq e = (a - std::sqrt(s.alpha_bar_at(k)) * a0) / std::sqrt(1 - s.alpha_bar_at(k));
    a = ddpm_reverse_step(s, e, a, k, z);
  }
  CHECK((a - a0).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("ddim inversion, ordering and eta = 1 variance") {
  const auto s = make_noise_schedule(100, 1e-4, 0.02);
  std::mt19937_64 rng(5);
  const ActionSeq a0 = randn(16, 2, rng), eps = randn(16, 2, rng);
  const ActionSeq ak = forward_noise(s, a0, 60, eps);
  CHECK((predict_clean(s, eps, ak, 60) - a0).cwiseAbs().maxCoeff() < 1e-12);
  const ActionSeq z = ActionSeq::Zero(16, 2);
  CHECK((ddim_reverse_step(s, eps, ak, 60, 0, 0.0, z) - a0).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(ddim_reverse_step(s, eps, ak, 60, 60, 0.0, z), DiffusionError);
  for (int k : {2, 30, 100}) {
    CHECK(ddim_sigma(s, k, k - 1, 1.0) ==
          doctest::Approx(std::sqrt((1 - s.alpha_bar_at(k - 1)) / (1 - s.alpha_bar_at(k)) *
                                    s.beta_at(k)))
              .epsilon(1e-12));
  }
  // Adjacent eta = 1 step has the ancestral posterior mean.
  const ActionSeq eh = randn(16, 2, rng);
  const ActionSeq x = ddim_reverse_step(s, eh, ak, 60, 59, 1.0, z);
  const auto c = scaled_update_coefficients(s, 60);
  CHECK((x - c.outer * (ak - c.gamma * eh)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("mse loss") {
  std::mt19937_64 rng(6);
  const ActionSeq a = randn(16, 2, rng), b = randn(16, 2, rng);
  CHECK(mse_loss(a, a) == 0.0);
  CHECK(mse_loss(a + ActionSeq::Ones(16, 2), a) == doctest::Approx(1.0).epsilon(1e-14));
  double sum = 0.0;
  for (int i = 0; i < 16; ++i) {
    for (int j = 0; j < 2; ++j) sum += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
  }
  CHECK(mse_loss(a, b) == doctest::Approx(sum / 32).epsilon(1e-14));
  CHECK_THROWS_AS(mse_loss(a, ActionSeq::Zero(8, 2)), DiffusionError);
}

TEST_CASE("theoretical weights") {
  CHECK(theoretical_weights(make_noise_schedule(1, 0.3, 0.3)).q == std::vector<double>{1.0});
  const auto tw = theoretical_weights(schedule_from_betas({0.1, 0.2}));
  const double w1 = 0.01 / (2 * 0.9 * 0.1), w2 = 0.04 / (2 * 0.8 * 0.28);
  CHECK(tw.w[0] == doctest::Approx(w1).epsilon(1e-14));
  CHECK(tw.w[1] == doctest::Approx(w2).epsilon(1e-14));
  CHECK(tw.q[0] == doctest::Approx(w1 / (w1 + w2)).epsilon(1e-14));

  const auto s = make_noise_schedule(100, 1e-4, 0.02);
  const auto full = theoretical_weights(s);
  // Streaming recomputation with a running product.
  double ab = 1.0, total = 0.0;
  std::vector<double> w;
  for (int k = 1; k <= 100; ++k) {
    const double beta = s.beta_at(k);
    ab *= 1 - beta;
    w.push_back(beta * beta / (2 * (1 - beta) * (1 - ab)));
    total += w.back();
  }
  double qsum = 0.0;
  for (int k = 0; k < 100; ++k) {
    CHECK(std::abs(full.q[static_cast<std::size_t>(k)] - w[static_cast<std::size_t>(k)] / total) < 1e-12);
    CHECK(full.q[static_cast<std::size_t>(k)] > 0.0);
    qsum += full.q[static_cast<std::size_t>(k)];
  }
  CHECK(std::abs(qsum - 1.0) < 1e-12);
}

TEST_CASE("weighted loss") {
  const auto s = schedule_from_betas({0.1, 0.2});
  std::mt19937_64 rng(7);
  const ActionSeq a = randn(4, 2, rng), b = randn(4, 2, rng);
  const auto tw = theoretical_weights(s);
  CHECK(weighted_loss(s, a, b, 2) == doctest::Approx(tw.w[1] * mse_loss(a, b)).epsilon(1e-14));
  CHECK_THROWS_AS(weighted_loss(s, a, b, 3), DiffusionError);
}

}  // TEST_SUITE
