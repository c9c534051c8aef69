#include <doctest.h>

#include <stdexcept>
#include <cmath>
#include <cstdio>

#include "resinv/mlp.hpp"

using namespace resinv;

TEST_CASE("mlp_init shapes and determinism") {
  const MlpParams base = mlp_init(200, 200, 0);
  CHECK(base.weights[0].rows() == 64);
  CHECK(base.weights[0].cols() == 200);
  CHECK(base.weights[1].rows() == 64);
  CHECK(base.weights[1].cols() == 64);
  CHECK(base.weights[2].rows() == 200);
  CHECK(base.weights[2].cols() == 64);
  CHECK(base.biases[2].cwiseAbs().maxCoeff() == 0.0);

  const MlpParams small_obs = mlp_init(50, 200, 0);
  CHECK(small_obs.weights[0].cols() == 50);

  const MlpParams again = mlp_init(200, 200, 0);
  for (int l = 0; l < 3; ++l)
    CHECK((base.weights[l] - again.weights[l]).cwiseAbs().maxCoeff() == 0.0);
  const MlpParams other = mlp_init(200, 200, 1);
  CHECK((base.weights[0] - other.weights[0]).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("forward pass basics") {
  SUBCASE("zero parameters map everything to zero") {
    MlpParams params = mlp_init(4, 3, 7);
    for (auto& w : params.weights) w.setZero();
    const Eigen::MatrixXd out =
        mlp_forward(params, Eigen::MatrixXd::Random(5, 4), nullptr);
    CHECK(out.cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("relu gates a negative pre-activation") {
    MlpParams params = mlp_init(1, 1, 0, 1);
    params.weights[0].setOnes();
    params.weights[1].setOnes();
    params.weights[2].setOnes();
    for (auto& b : params.biases) b.setZero();
    Eigen::MatrixXd input(1, 1);
    input << -5.0;
    CHECK(mlp_forward(params, input, nullptr)(0, 0) == 0.0);
    input << 2.0;
    CHECK(mlp_forward(params, input, nullptr)(0, 0) == 2.0);
  }

  SUBCASE("batch output shape") {
    const MlpParams params = mlp_init(200, 150, 3);
    const Eigen::MatrixXd out =
        mlp_forward(params, Eigen::MatrixXd::Random(5, 200), nullptr);
    CHECK(out.rows() == 5);
    CHECK(out.cols() == 150);
  }

  SUBCASE("width mismatch is rejected") {
    const MlpParams params = mlp_init(4, 3, 7);
    CHECK_THROWS_AS(mlp_forward(params, Eigen::MatrixXd::Random(2, 5), nullptr),
                    std::invalid_argument);
  }
}

TEST_CASE("batch equivariance") {
  const MlpParams params = mlp_init(6, 4, 21);
  const Eigen::MatrixXd batch = Eigen::MatrixXd::Random(7, 6);
  const Eigen::MatrixXd full = mlp_forward(params, batch, nullptr);
  for (int r = 0; r < batch.rows(); ++r) {
    const Eigen::MatrixXd single = mlp_forward(params, batch.row(r), nullptr);
    CHECK((single - full.row(r)).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("backward pass: trivial cases") {
  const MlpParams params = mlp_init(5, 3, 13);
  const Eigen::MatrixXd inputs = Eigen::MatrixXd::Random(4, 5);
  ForwardCache cache;
  mlp_forward(params, inputs, &cache);

  SUBCASE("zero output gradient zeroes every parameter gradient") {
    const MlpGradients grads =
        mlp_backward(params, cache, Eigen::MatrixXd::Zero(4, 3));
    for (int l = 0; l < 3; ++l) {
      CHECK(grads.weights[l].cwiseAbs().maxCoeff() == 0.0);
      CHECK(grads.biases[l].cwiseAbs().maxCoeff() == 0.0);
    }
  }

  SUBCASE("stale cache is rejected") {
    CHECK_THROWS_AS(mlp_backward(params, cache, Eigen::MatrixXd::Zero(3, 3)),
                    std::invalid_argument);
  }
}

TEST_CASE("single linear layer gradient is the input sum") {
  // Positive weights/biases keep every ReLU active, making layers 1 and 2 an
  // identity-like linear path for positive inputs; with loss = sum of
  // outputs, dW3 reduces to summed hidden activations.
  MlpParams params = mlp_init(1, 1, 0, 1);
  params.weights[0] << 1.0;
  params.weights[1] << 1.0;
  params.weights[2] << 1.0;
  Eigen::MatrixXd inputs(3, 1);
  inputs << 1.0, 2.0, 3.0;
  ForwardCache cache;
  mlp_forward(params, inputs, &cache);
  const MlpGradients grads =
      mlp_backward(params, cache, Eigen::MatrixXd::Ones(3, 1));
  CHECK(grads.weights[2](0, 0) == doctest::Approx(6.0));  // sum of inputs
  CHECK(grads.biases[2][0] == doctest::Approx(3.0));      // batch size
  CHECK(grads.weights[0](0, 0) == doctest::Approx(6.0));
}

TEST_CASE("backprop matches central finite differences (width-8 oracle)") {
  const int n_in = 8, n_out = 8, n_hidden = 8, batch = 3;
  const MlpParams base = mlp_init(n_in, n_out, 99, n_hidden);
  Rng rng(17);
  Eigen::MatrixXd inputs(batch, n_in);
  for (int r = 0; r < batch; ++r)
    for (int c = 0; c < n_in; ++c) inputs(r, c) = rng.normal();
  Eigen::MatrixXd grad_out(batch, n_out);
  for (int r = 0; r < batch; ++r)
    for (int c = 0; c < n_out; ++c) grad_out(r, c) = rng.normal();

  const auto loss = [&](const MlpParams& p) {
    return (mlp_forward(p, inputs, nullptr).array() * grad_out.array()).sum();
  };

  ForwardCache cache;
  mlp_forward(base, inputs, &cache);
  Eigen::MatrixXd grad_inputs;
  const MlpGradients grads = mlp_backward(base, cache, grad_out, &grad_inputs);

  const double eps = 1e-6;
  const auto check = [&](double analytic, double fd) {
    CHECK(std::fabs(analytic - fd) <= 1e-6 * std::max(std::fabs(fd), 1e-6));
  };

  for (int l = 0; l < 3; ++l) {
    for (Eigen::Index r = 0; r < base.weights[l].rows(); ++r)
      for (Eigen::Index c = 0; c < base.weights[l].cols(); ++c) {
        MlpParams above = base, below = base;
        above.weights[l](r, c) += eps;
        below.weights[l](r, c) -= eps;
        check(grads.weights[l](r, c), (loss(above) - loss(below)) / (2 * eps));
      }
    for (Eigen::Index i = 0; i < base.biases[l].size(); ++i) {
      MlpParams above = base, below = base;
      above.biases[l][i] += eps;
      below.biases[l][i] -= eps;
      check(grads.biases[l][i], (loss(above) - loss(below)) / (2 * eps));
    }
  }

  // Input gradients through the same oracle.
  for (int r = 0; r < batch; ++r)
    for (int c = 0; c < n_in; ++c) {
      Eigen::MatrixXd above = inputs, below = inputs;
      above(r, c) += eps;
      below(r, c) -= eps;
      const double fd =
          ((mlp_forward(base, above, nullptr).array() * grad_out.array()).sum() -
           (mlp_forward(base, below, nullptr).array() * grad_out.array()).sum()) /
          (2 * eps);
      check(grad_inputs(r, c), fd);
    }
}

TEST_CASE("adam_step behavior") {
  SUBCASE("zero gradients leave parameters unchanged") {
    MlpParams params = mlp_init(3, 2, 1);
    const MlpParams before = params;
    AdamState state = make_adam_state(params, 1e-3);
    MlpGradients grads;
    for (int l = 0; l < 3; ++l) {
      grads.weights[l] = Eigen::MatrixXd::Zero(params.weights[l].rows(),
                                               params.weights[l].cols());
      grads.biases[l] = Eigen::VectorXd::Zero(params.biases[l].size());
    }
    adam_step(params, grads, state);
    CHECK(state.t == 1);
    for (int l = 0; l < 3; ++l)
      CHECK((params.weights[l] - before.weights[l]).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("first step moves by about -lr for a unit gradient") {
    MlpParams params = mlp_init(1, 1, 2, 1);
    params.weights[2](0, 0) = 0.0;
    AdamState state = make_adam_state(params, 0.05);
    MlpGradients grads;
    for (int l = 0; l < 3; ++l) {
      grads.weights[l] = Eigen::MatrixXd::Zero(1, 1);
      grads.biases[l] = Eigen::VectorXd::Zero(1);
    }
    grads.weights[2](0, 0) = 1.0;
    adam_step(params, grads, state);
    // Bias correction makes m_hat / sqrt(v_hat) = 1 on the first step.
    CHECK(params.weights[2](0, 0) == doctest::Approx(-0.05).epsilon(1e-6));
  }

  SUBCASE("quadratic bowl converges (self oracle)") {
    // f(theta) = theta^2 optimized through the W3 scalar.
    MlpParams params = mlp_init(1, 1, 3, 1);
    params.weights[2](0, 0) = 1.0;
    AdamState state = make_adam_state(params, 0.05);
    MlpGradients grads;
    for (int l = 0; l < 3; ++l) {
      grads.weights[l] = Eigen::MatrixXd::Zero(1, 1);
      grads.biases[l] = Eigen::VectorXd::Zero(1);
    }
    std::vector<double> losses;
    for (int step = 0; step < 500; ++step) {
      const double theta = params.weights[2](0, 0);
      losses.push_back(theta * theta);
      grads.weights[2](0, 0) = 2.0 * theta;
      adam_step(params, grads, state);
    }
    CHECK(std::fabs(params.weights[2](0, 0)) < 1e-2);
    // Monotone decrease over 100-step windows.
    for (int w = 0; w + 200 <= 500; w += 100) {
      double early = 0.0, late = 0.0;
      for (int i = 0; i < 100; ++i) {
        early += losses[w + i];
        late += losses[w + 100 + i];
      }
      CHECK(late <= early);
    }
  }
}

TEST_CASE("checkpoint round trip") {
  MlpParams params = mlp_init(6, 4, 77);
  AdamState state = make_adam_state(params, 3e-4);
  state.t = 42;
  state.m_w[1].setConstant(0.125);
  const std::string path = "test_ckpt.mlp";
  save_checkpoint(params, state, path);

  MlpParams loaded_params;
  AdamState loaded_state;
  load_checkpoint(path, loaded_params, loaded_state);
  std::remove(path.c_str());

  CHECK(loaded_params.n_in == 6);
  CHECK(loaded_params.n_out == 4);
  CHECK(loaded_params.n_hidden == 64);
  for (int l = 0; l < 3; ++l) {
    CHECK((loaded_params.weights[l] - params.weights[l]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((loaded_state.m_w[l] - state.m_w[l]).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(loaded_state.t == 42);
  CHECK(loaded_state.learning_rate == 3e-4);
}
