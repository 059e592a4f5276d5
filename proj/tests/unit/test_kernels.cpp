#include "dualgp/error.hpp"
#include "dualgp/kernels.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace dualgp;

namespace {

MatrixXd random_points(std::mt19937_64& rng, Eigen::Index p, Eigen::Index d, double spread = 2.0) {
  std::uniform_real_distribution<double> u(-spread, spread);
  MatrixXd A(p, d);
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < d; ++j) A(i, j) = u(rng);
  return A;
}

}  // namespace

TEST_CASE("zero distance gives the variance") {
  for (auto fam : {KernelFamily::SquaredExponential, KernelFamily::Matern52}) {
    const KernelSpec k = KernelSpec::make(fam, 0.7, 2.3);
    MatrixXd a(1, 2);
    a << 0.3, -1.1;
    CHECK(eval_matrix(k, a, a)(0, 0) == doctest::Approx(2.3).epsilon(1e-14));
    CHECK(eval_diag(k, a)(0) == doctest::Approx(2.3).epsilon(1e-14));
  }
}

TEST_CASE("squared exponential at unit distance") {
  const KernelSpec k = KernelSpec::make(KernelFamily::SquaredExponential, 1.0, 1.0);
  MatrixXd a(1, 1), b(1, 1);
  a << 0.0;
  b << 1.0;
  CHECK(eval_matrix(k, a, b)(0, 0) == doctest::Approx(0.606531).epsilon(1e-6));
  CHECK(eval_grad(k, a, b, KernelParam::LogLengthscale)(0, 0) == doctest::Approx(0.606531).epsilon(1e-6));
}

TEST_CASE("matern decays to zero") {
  const KernelSpec k = KernelSpec::make(KernelFamily::Matern52, 1.0, 1.0);
  CHECK(eval_distance(k, 1e3) < 1e-300);
  CHECK(eval_distance(k, 1.0) == doctest::Approx(oracle::matern52_kernel(1.0, 1.0, 1.0)));
}

TEST_CASE("kernel matrices agree with a direct evaluation") {
  std::mt19937_64 rng(1);
  const MatrixXd A = random_points(rng, 7, 3), B = random_points(rng, 5, 3);
  for (bool matern : {false, true}) {
    const KernelSpec k =
        KernelSpec::make(matern ? KernelFamily::Matern52 : KernelFamily::SquaredExponential, 0.8, 1.7);
    CHECK(oracle::max_abs(eval_matrix(k, A, B) - oracle::gram(A, B, 0.8, 1.7, matern)) < 1e-13);
  }
}

TEST_CASE("log-variance gradient equals the kernel") {
  std::mt19937_64 rng(2);
  const MatrixXd A = random_points(rng, 6, 2);
  const KernelSpec k = KernelSpec::make(KernelFamily::Matern52, 1.3, 0.6);
  CHECK(oracle::max_abs(eval_grad(k, A, A, KernelParam::LogVariance) - eval_matrix(k, A, A)) < 1e-15);
}

TEST_CASE("analytic gradients match central differences") {
  std::mt19937_64 rng(4);
  const double h = 1e-5;
  for (int trial = 0; trial < 10; ++trial) {
    const MatrixXd A = random_points(rng, 6, 2), B = random_points(rng, 4, 2);
    for (auto fam : {KernelFamily::SquaredExponential, KernelFamily::Matern52}) {
      const KernelSpec k = KernelSpec::make(fam, 0.5 + 0.2 * trial, 1.5);
      for (auto param : {KernelParam::LogLengthscale, KernelParam::LogVariance}) {
        KernelSpec kp = k, km = k;
        if (param == KernelParam::LogLengthscale) {
          kp.log_lengthscale += h;
          km.log_lengthscale -= h;
        } else {
          kp.log_variance += h;
          km.log_variance -= h;
        }
        const MatrixXd fd = (eval_matrix(kp, A, B) - eval_matrix(km, A, B)) / (2.0 * h);
        const MatrixXd an = eval_grad(k, A, B, param);
        CHECK(oracle::max_abs(fd - an) / std::max(1e-3, oracle::max_abs(an)) < 1e-6);
      }
    }
  }
}

TEST_CASE("gram matrices are symmetric and PSD") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index p = 2 + trial;
    const MatrixXd A = random_points(rng, p, 1 + trial % 3);
    for (auto fam : {KernelFamily::SquaredExponential, KernelFamily::Matern52}) {
      const KernelSpec k = KernelSpec::make(fam, 0.3 + 0.1 * trial, 2.0);
      const MatrixXd K = eval_matrix(k, A, A);
      CHECK(oracle::max_abs(K - K.transpose()) == 0.0);
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(K);
      CHECK(es.eigenvalues().minCoeff() >= -1e-10 * 2.0);
    }
  }
}

TEST_CASE("kernel argument errors") {
  const KernelSpec k;
  CHECK_THROWS_AS(eval_matrix(k, MatrixXd::Zero(2, 2), MatrixXd::Zero(2, 3)), DimensionMismatch);
  CHECK_THROWS_AS(parse_kernel_param("log-period"), InvalidArgument);
  CHECK_THROWS_AS(parse_kernel_family("rbf-ish"), InvalidArgument);
  CHECK(parse_kernel_family("se") == KernelFamily::SquaredExponential);
  CHECK(parse_kernel_family("matern52") == KernelFamily::Matern52);
}

TEST_CASE("inducing inputs") {
  SUBCASE("duplicates are rejected") {
    MatrixXd Z(3, 1);
    Z << 0.0, 1.0, 0.0;
    CHECK_THROWS_AS(InducingInputs{Z}, InvalidArgument);
  }
  SUBCASE("grid spans the interval") {
    const InducingInputs g = grid_inducing(-1.0, 2.0, 4);
    CHECK(g.size() == 4);
    CHECK(g.Z()(0, 0) == -1.0);
    CHECK(g.Z()(3, 0) == doctest::Approx(2.0));
    CHECK(g.Z()(1, 0) == doctest::Approx(0.0));
  }
  SUBCASE("k-means is deterministic per seed") {
    std::mt19937_64 rng(8);
    const MatrixXd X = random_points(rng, 200, 2);
    const InducingInputs a = kmeans_inducing(X, 12, 5), b = kmeans_inducing(X, 12, 5);
    CHECK(a.size() == 12);
    CHECK(oracle::max_abs(a.Z() - b.Z()) == 0.0);
  }
}
