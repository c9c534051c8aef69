#include "resinv/mlp.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "resinv/errors.hpp"
#include "resinv/io_util.hpp"

namespace resinv {

namespace {

void check_shapes(const MlpParams& params) {
  const int h = params.n_hidden;
  if (h < 1 || params.weights[0].rows() != h || params.weights[0].cols() != params.n_in ||
      params.weights[1].rows() != h || params.weights[1].cols() != h ||
      params.weights[2].rows() != params.n_out || params.weights[2].cols() != h ||
      params.biases[0].size() != h || params.biases[1].size() != h ||
      params.biases[2].size() != params.n_out)
    throw std::invalid_argument("MLP parameter shapes are inconsistent");
}

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

// Derivative mask with the subgradient at exactly 0 taken as 0.
Eigen::ArrayXXd relu_mask(const Eigen::MatrixXd& z) {
  return (z.array() > 0.0).cast<double>();
}

}  // namespace

MlpParams mlp_init(int n_in, int n_out, std::uint64_t seed, int n_hidden) {
  if (n_in < 1 || n_out < 1 || n_hidden < 1)
    throw std::invalid_argument("MLP needs n_in, n_hidden, n_out >= 1");
  const int h = n_hidden;
  MlpParams params;
  params.n_in = n_in;
  params.n_hidden = n_hidden;
  params.n_out = n_out;
  params.weights[0].resize(h, n_in);
  params.weights[1].resize(h, h);
  params.weights[2].resize(n_out, h);
  params.biases[0] = Eigen::VectorXd::Zero(h);
  params.biases[1] = Eigen::VectorXd::Zero(h);
  params.biases[2] = Eigen::VectorXd::Zero(n_out);

  Rng rng(seed);
  for (auto& w : params.weights) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(w.cols()));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = stddev * rng.normal();
  }
  return params;
}

Eigen::MatrixXd mlp_forward(const MlpParams& params,
                            const Eigen::MatrixXd& inputs, ForwardCache* cache) {
  check_shapes(params);
  if (inputs.cols() != params.n_in)
    throw std::invalid_argument("input width " + std::to_string(inputs.cols()) +
                                " does not match n_in " +
                                std::to_string(params.n_in));

  Eigen::MatrixXd z1 =
      (inputs * params.weights[0].transpose()).rowwise() + params.biases[0].transpose();
  Eigen::MatrixXd a1 = relu(z1);
  Eigen::MatrixXd z2 =
      (a1 * params.weights[1].transpose()).rowwise() + params.biases[1].transpose();
  Eigen::MatrixXd a2 = relu(z2);
  Eigen::MatrixXd out =
      (a2 * params.weights[2].transpose()).rowwise() + params.biases[2].transpose();

  if (cache) {
    cache->input = inputs;
    cache->z1 = std::move(z1);
    cache->a1 = std::move(a1);
    cache->z2 = std::move(z2);
    cache->a2 = std::move(a2);
  }
  return out;
}

MlpGradients mlp_backward(const MlpParams& params, const ForwardCache& cache,
                          const Eigen::MatrixXd& grad_outputs,
                          Eigen::MatrixXd* grad_inputs) {
  check_shapes(params);
  const Eigen::Index batch = cache.input.rows();
  if (cache.z1.rows() != batch || cache.z2.rows() != batch ||
      grad_outputs.rows() != batch || grad_outputs.cols() != params.n_out ||
      cache.input.cols() != params.n_in)
    throw std::invalid_argument("stale forward cache: shapes disagree with batch");

  MlpGradients grads;
  // Layer 3 (linear output).
  grads.weights[2] = grad_outputs.transpose() * cache.a2;
  grads.biases[2] = grad_outputs.colwise().sum().transpose();
  Eigen::MatrixXd delta2 =
      (grad_outputs * params.weights[2]).array() * relu_mask(cache.z2);

  grads.weights[1] = delta2.transpose() * cache.a1;
  grads.biases[1] = delta2.colwise().sum().transpose();
  Eigen::MatrixXd delta1 =
      (delta2 * params.weights[1]).array() * relu_mask(cache.z1);

  grads.weights[0] = delta1.transpose() * cache.input;
  grads.biases[0] = delta1.colwise().sum().transpose();

  if (grad_inputs) *grad_inputs = delta1 * params.weights[0];
  return grads;
}

AdamState make_adam_state(const MlpParams& params, double learning_rate) {
  AdamState state;
  state.learning_rate = learning_rate;
  for (int l = 0; l < 3; ++l) {
    state.m_w[l] = Eigen::MatrixXd::Zero(params.weights[l].rows(),
                                         params.weights[l].cols());
    state.v_w[l] = state.m_w[l];
    state.m_b[l] = Eigen::VectorXd::Zero(params.biases[l].size());
    state.v_b[l] = state.m_b[l];
  }
  return state;
}

namespace {

template <typename T>
void adam_update(T& param, const T& grad, T& m, T& v, const AdamState& s,
                 double bc1, double bc2) {
  m = s.beta1 * m + (1.0 - s.beta1) * grad;
  v = (s.beta2 * v).array() + (1.0 - s.beta2) * grad.array().square();
  param.array() -=
      s.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + s.eps);
}

}  // namespace

void adam_step(MlpParams& params, const MlpGradients& grads, AdamState& state) {
  for (int l = 0; l < 3; ++l) {
    if (grads.weights[l].rows() != params.weights[l].rows() ||
        grads.weights[l].cols() != params.weights[l].cols() ||
        grads.biases[l].size() != params.biases[l].size())
      throw std::invalid_argument("gradient shapes disagree with parameters");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (int l = 0; l < 3; ++l) {
    adam_update(params.weights[l], grads.weights[l], state.m_w[l], state.v_w[l],
                state, bc1, bc2);
    adam_update(params.biases[l], grads.biases[l], state.m_b[l], state.v_b[l],
                state, bc1, bc2);
  }
}

void save_checkpoint(const MlpParams& params, const AdamState& state,
                     const std::string& path) {
  auto out = io::open_out(path);
  io::write_magic(out, "MLP1");
  io::write_u64(out, 4);  // layer count including input
  io::write_u64(out, static_cast<std::uint64_t>(params.n_in));
  io::write_u64(out, static_cast<std::uint64_t>(params.n_hidden));
  io::write_u64(out, static_cast<std::uint64_t>(params.n_hidden));
  io::write_u64(out, static_cast<std::uint64_t>(params.n_out));
  auto write_mat = [&](const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) io::write_f64(out, m(r, c));
  };
  for (int l = 0; l < 3; ++l) {
    write_mat(params.weights[l]);
    io::write_vec(out, params.biases[l]);
  }
  io::write_u64(out, static_cast<std::uint64_t>(state.t));
  io::write_f64(out, state.learning_rate);
  io::write_f64(out, state.beta1);
  io::write_f64(out, state.beta2);
  io::write_f64(out, state.eps);
  for (int l = 0; l < 3; ++l) {
    write_mat(state.m_w[l]);
    io::write_vec(out, state.m_b[l]);
    write_mat(state.v_w[l]);
    io::write_vec(out, state.v_b[l]);
  }
  if (!out) throw IoError("failed writing checkpoint to " + path);
}

void load_checkpoint(const std::string& path, MlpParams& params,
                     AdamState& state) {
  auto in = io::open_in(path);
  io::expect_magic(in, "MLP1", "checkpoint");
  const auto n_layers = io::read_u64(in);
  if (n_layers != 4) throw IoError("unsupported layer count in " + path);
  const int n_in = static_cast<int>(io::read_u64(in));
  const int h1 = static_cast<int>(io::read_u64(in));
  const int h2 = static_cast<int>(io::read_u64(in));
  const int n_out = static_cast<int>(io::read_u64(in));
  if (h1 != h2 || h1 < 1 || n_in < 1 || n_out < 1)
    throw IoError("unsupported layer sizes in " + path);

  params = mlp_init(n_in, n_out, 0, h1);
  auto read_mat = [&](Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = io::read_f64(in);
  };
  for (int l = 0; l < 3; ++l) {
    read_mat(params.weights[l]);
    params.biases[l] = io::read_vec(in, params.biases[l].size());
  }
  state = make_adam_state(params, 1e-4);
  state.t = static_cast<std::int64_t>(io::read_u64(in));
  state.learning_rate = io::read_f64(in);
  state.beta1 = io::read_f64(in);
  state.beta2 = io::read_f64(in);
  state.eps = io::read_f64(in);
  for (int l = 0; l < 3; ++l) {
    read_mat(state.m_w[l]);
    state.m_b[l] = io::read_vec(in, state.m_b[l].size());
    read_mat(state.v_w[l]);
    state.v_b[l] = io::read_vec(in, state.v_b[l].size());
  }
}

}  // namespace resinv
