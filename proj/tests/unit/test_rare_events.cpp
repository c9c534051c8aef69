#include <doctest.h>

#include <stdexcept>
#include <cmath>
#include <cstdio>

#include "resinv/rare_events.hpp"

using namespace resinv;

namespace {

ModelContext rare_context(int nx = 12, int n_modes = 6, int n_obs = 8) {
  const GridSpec grid = build_grid(nx, nx, 200.0, 200.0);
  KLBasis basis = build_kl_basis(grid, CovarianceSpec{1.0, 60.0}, n_modes, 0.0);
  const ObservationSet obs = sample_observation_nodes(grid, n_obs, 3);
  return ModelContext(grid, BoundaryConditions{10.0, 0.0, 0.5, 0.0},
                      std::move(basis), obs);
}

// Standard normal tail probability (upper).
double normal_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("qoi basics") {
  const ModelContext ctx = rare_context();
  const int center = ctx.grid.idx(6, 6);

  SUBCASE("homogeneous field stays inside the boundary range") {
    const double value = qoi(Eigen::VectorXd::Zero(ctx.n_modes()), ctx, center);
    CHECK(value > 0.0);
    CHECK(value < 10.0);
    // Equals the homogeneous solve at that node.
    PermeabilityField field;
    field.log_k = Eigen::VectorXd::Zero(ctx.grid.n_nodes());
    field.k = Eigen::VectorXd::Ones(ctx.grid.n_nodes());
    const DarcySolve solve(ctx.grid, field, ctx.dirichlet);
    CHECK(value == doctest::Approx(solve.pressure()[center]).epsilon(1e-12));
  }

  SUBCASE("constant boundary pressure pins the QoI") {
    ModelContext flat = rare_context();
    flat.bc = BoundaryConditions{3.0, 3.0, 3.0, 3.0};
    flat.dirichlet = boundary_mask(flat.grid, flat.bc);
    Rng rng(7);
    const double value =
        qoi(sample_coefficients(flat.n_modes(), rng), flat, center);
    CHECK(value == doctest::Approx(3.0).epsilon(1e-10));
  }

  SUBCASE("qoi gradient matches finite differences") {
    Rng rng(13);
    const Eigen::VectorXd coeffs = sample_coefficients(ctx.n_modes(), rng);
    const Eigen::VectorXd grad = qoi_gradient(coeffs, ctx, center);
    const double eps = 1e-5;
    for (int m = 0; m < ctx.n_modes(); ++m) {
      Eigen::VectorXd above = coeffs, below = coeffs;
      above[m] += eps;
      below[m] -= eps;
      const double fd =
          (qoi(above, ctx, center) - qoi(below, ctx, center)) / (2 * eps);
      CHECK(std::fabs(grad[m] - fd) <= 1e-5 * std::max(std::fabs(fd), 1e-10));
    }
  }
}

TEST_CASE("brute_force_tail yields exactly the top quantile") {
  const ModelContext ctx = rare_context(10, 5, 6);
  const int node = ctx.grid.idx(5, 5);
  const BruteForceTail result = brute_force_tail(2000, 0.01, ctx, node, 77, 2);
  CHECK(result.qoi_values.size() == 2000);
  CHECK(result.tail.size() == 20);  // 1% of 2000, distinct values
  for (const auto& sample : result.tail) {
    CHECK(sample.qoi >= result.threshold);
    CHECK(sample.weight == 1.0);
    // Tail samples re-verify on re-simulation.
    CHECK(qoi(sample.coeffs, ctx, node) == doctest::Approx(sample.qoi));
  }
  // Deterministic under the same seed.
  const BruteForceTail again = brute_force_tail(2000, 0.01, ctx, node, 77);
  CHECK(again.threshold == result.threshold);
}

TEST_CASE("find_shift on a linear toy matches the closed form") {
  const int n = 5;
  Eigen::VectorXd g(n);
  g << 1.0, -0.5, 2.0, 0.25, -1.0;
  const QoiFn value = [&](const CoeffVector& k) { return g.dot(k); };
  const QoiGradFn grad = [&](const CoeffVector&) { return g; };

  const double z = 2.5;
  FindShiftSettings settings;
  settings.median_hint = 0.0;
  const CoeffVector shift = find_shift(z, n, value, grad, settings);

  const CoeffVector expected = z * g / g.squaredNorm();
  CHECK((shift - expected).norm() <= 0.01 * expected.norm());
  CHECK(value(shift) >= z - 1e-3);

  SUBCASE("threshold at the median is rejected") {
    CHECK_THROWS_AS(find_shift(0.0, n, value, grad, settings),
                    std::invalid_argument);
  }
}

TEST_CASE("find_shift on the simulator QoI") {
  const ModelContext ctx = rare_context(10, 5, 6);
  const int node = ctx.grid.idx(5, 5);
  const BruteForceTail brute = brute_force_tail(1500, 0.05, ctx, node, 7, 2);

  FindShiftSettings settings;
  settings.median_hint = quantile_interpolated(brute.qoi_values, 0.5);
  const TailSample* best = nullptr;
  for (const auto& s : brute.tail)
    if (!best || s.coeffs.squaredNorm() < best->coeffs.squaredNorm()) best = &s;
  REQUIRE(best != nullptr);
  settings.warm_start = best->coeffs;

  const CoeffVector shift = find_shift(brute.threshold, ctx, node, settings);
  CHECK(qoi(shift, ctx, node) >= brute.threshold - 1e-3);
  // Improves on the best brute-force tail sample in 0.5 ||k||^2.
  CHECK(0.5 * shift.squaredNorm() <= 0.5 * best->coeffs.squaredNorm() + 1e-12);
}

TEST_CASE("importance sampling on a linear toy (exact tail oracle)") {
  // qoi(k) = g . k with ||g|| = 2: P(qoi >= z) = Phi_bar(z / 2), exactly.
  const int n = 4;
  Eigen::VectorXd g(n);
  g << 1.2, -0.8, 1.2, 0.4;
  const double gnorm = g.norm();
  const QoiFn value = [&](const CoeffVector& k) { return g.dot(k); };

  const double z = 2.0 * gnorm;  // a 2-sigma event
  const CoeffVector shift = z * g / g.squaredNorm();

  const ImportanceSamples is =
      importance_sample_tail_fn(shift, 20000, z, value, 99);
  CHECK(is.acceptance_rate > 0.3);  // centered on the boundary: about half
  const double estimate = tail_probability_estimate(is);
  const double exact = normal_tail(2.0);
  CHECK(estimate == doctest::Approx(exact).epsilon(0.10));

  SUBCASE("weight algebra") {
    // At k = shift the likelihood ratio collapses to exp(-||shift||^2 / 2).
    const double w = std::exp(-shift.dot(shift) + 0.5 * shift.squaredNorm());
    CHECK(w == doctest::Approx(std::exp(-0.5 * shift.squaredNorm())));
  }

  SUBCASE("zero shift reduces to brute force with unit weights") {
    const ImportanceSamples plain = importance_sample_tail_fn(
        Eigen::VectorXd::Zero(n), 5000, 0.0, value, 123);
    for (const auto& sample : plain.samples)
      CHECK(sample.weight == doctest::Approx(1.0));
    CHECK(plain.acceptance_rate == doctest::Approx(0.5).epsilon(0.05));
  }
}

TEST_CASE("importance sampling agrees with brute force on the simulator") {
  // Factor-of-two consistency at the 95th percentile on a small context.
  const ModelContext ctx = rare_context(10, 5, 6);
  const int node = ctx.grid.idx(5, 5);

  const BruteForceTail brute = brute_force_tail(20000, 0.05, ctx, node, 31, 2);
  const double z = brute.threshold;
  const double brute_estimate =
      static_cast<double>(brute.tail.size()) / 20000.0;

  FindShiftSettings settings;
  settings.median_hint = quantile_interpolated(brute.qoi_values, 0.5);
  const CoeffVector shift = find_shift(z, ctx, node, settings);
  const ImportanceSamples is =
      importance_sample_tail(shift, 4000, z, ctx, node, 32, 2);
  const double is_estimate = tail_probability_estimate(is);

  CHECK(is_estimate <= 2.0 * brute_estimate);
  CHECK(is_estimate >= 0.5 * brute_estimate);
}

TEST_CASE("tail dataset file round trip") {
  const ModelContext ctx = rare_context(10, 5, 6);
  const int node = ctx.grid.idx(5, 5);
  const BruteForceTail brute = brute_force_tail(400, 0.05, ctx, node, 51);
  REQUIRE(brute.tail.size() >= 3);

  std::vector<CoeffVector> coeffs;
  std::vector<double> weights;
  for (const auto& s : brute.tail) {
    coeffs.push_back(s.coeffs);
    weights.push_back(s.weight);
  }
  TailDataset tail;
  tail.dataset =
      generate_dataset_from_coeffs(coeffs, ctx, 0.1, 52, DatasetRole::kTrain);
  tail.weights = weights;
  tail.threshold = brute.threshold;
  tail.shift = Eigen::VectorXd::Zero(ctx.n_modes());
  tail.acceptance_rate = 0.05;

  const std::string path = "test_tail.tail";
  save_tail_dataset(tail, path);
  const TailDataset loaded = load_tail_dataset(path);
  std::remove(path.c_str());

  CHECK(loaded.threshold == tail.threshold);
  CHECK(loaded.acceptance_rate == 0.05);
  CHECK(loaded.dataset.size() == tail.dataset.size());
  CHECK(loaded.weights == tail.weights);
  for (int j = 0; j < tail.dataset.size(); ++j) {
    CHECK((loaded.dataset.records[j].coeffs - tail.dataset.records[j].coeffs)
              .cwiseAbs()
              .maxCoeff() == 0.0);
    // Every stored tail sample still exceeds the threshold when re-simulated.
    CHECK(qoi(loaded.dataset.records[j].coeffs, ctx, node) >=
          loaded.threshold - 1e-12);
  }
  // Rare records carry the bulk noise convention.
  bool any_noise = false;
  for (const auto& rec : loaded.dataset.records)
    if ((rec.noisy - rec.clean).cwiseAbs().maxCoeff() > 0.0) any_noise = true;
  CHECK(any_noise);
}

TEST_CASE("rare case names") {
  CHECK(to_string(RareCase::kTrainBulkEvalBulk) == "tBeB");
  CHECK(to_string(RareCase::kTrainBulkEvalRare) == "tBeR");
  CHECK(to_string(RareCase::kTrainBulkRareEvalRare) == "tBnReR");
  CHECK(to_string(RareCase::kTrainRareEvalRare) == "tReR");
}
