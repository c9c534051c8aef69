#pragma once

#include <array>
#include <cstdint>
#include <string>

#include <Eigen/Core>

#include "resinv/rng.hpp"

namespace resinv {

inline constexpr int kDefaultHiddenWidth = 64;

// Fully connected net [n_in, h, h, n_out] with ReLU hiddens and a linear
// output layer (coefficients are signed); h = 64 throughout the experiments.
// Batches are row-per-sample matrices.
struct MlpParams {
  int n_in = 0;
  int n_hidden = kDefaultHiddenWidth;
  int n_out = 0;
  std::array<Eigen::MatrixXd, 3> weights;  // W1: h x n_in, W2: h x h, W3: n_out x h
  std::array<Eigen::VectorXd, 3> biases;

  std::size_t n_params() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
    for (const auto& b : biases) n += static_cast<std::size_t>(b.size());
    return n;
  }
};

// Moment accumulators for Adam, shaped like MlpParams.
struct AdamState {
  std::array<Eigen::MatrixXd, 3> m_w, v_w;
  std::array<Eigen::VectorXd, 3> m_b, v_b;
  std::int64_t t = 0;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState make_adam_state(const MlpParams& params, double learning_rate);

// Pre-activations and activations of one forward pass, consumed by backward.
struct ForwardCache {
  Eigen::MatrixXd input;       // batch x n_in
  Eigen::MatrixXd z1, a1;      // batch x 64
  Eigen::MatrixXd z2, a2;      // batch x 64
};

struct MlpGradients {
  std::array<Eigen::MatrixXd, 3> weights;
  std::array<Eigen::VectorXd, 3> biases;
};

// He initialization, biases zero, deterministic per seed.
MlpParams mlp_init(int n_in, int n_out, std::uint64_t seed,
                   int n_hidden = kDefaultHiddenWidth);

// out = W3 relu(W2 relu(W1 x + b1) + b2) + b3 per row of `inputs`.
Eigen::MatrixXd mlp_forward(const MlpParams& params,
                            const Eigen::MatrixXd& inputs, ForwardCache* cache);

// Exact reverse-mode gradients; ReLU subgradient at 0 is 0. Also returns
// dL/d(inputs) through `grad_inputs` when non-null.
MlpGradients mlp_backward(const MlpParams& params, const ForwardCache& cache,
                          const Eigen::MatrixXd& grad_outputs,
                          Eigen::MatrixXd* grad_inputs = nullptr);

// Bias-corrected Adam update in place; increments state.t.
void adam_step(MlpParams& params, const MlpGradients& grads, AdamState& state);

// MLP1 checkpoint: layer sizes, weights/biases, then the optimizer state.
void save_checkpoint(const MlpParams& params, const AdamState& state,
                     const std::string& path);
void load_checkpoint(const std::string& path, MlpParams& params,
                     AdamState& state);

}  // namespace resinv
