#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "semex/errors.hpp"
#include "semex/rng.hpp"

namespace semex::nn {

enum class Activation { Relu, Tanh, Identity };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
  }
  return "?";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  if (s == "identity") return Activation::Identity;
  throw ConfigError("unknown activation: " + s);
}

/// Fully connected network: rectifier hidden layers, configurable output.
/// Layer l maps dims[l] -> dims[l+1] with weights of shape dims[l+1] x dims[l].
class Mlp {
 public:
  Mlp() = default;

  Mlp(std::vector<int> layer_dims, Activation output_activation)
      : dims_(std::move(layer_dims)), output_activation_(output_activation) {
    if (dims_.size() < 2) throw std::invalid_argument("an MLP needs at least input and output dims");
    for (int d : dims_)
      if (d < 1) throw std::invalid_argument("layer dims must be positive");
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      weights_.push_back(Eigen::MatrixXd::Zero(dims_[l + 1], dims_[l]));
      biases_.push_back(Eigen::VectorXd::Zero(dims_[l + 1]));
    }
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init; the last layer is
  /// additionally scaled by final_scale.
  static Mlp initialized(std::vector<int> layer_dims, Activation output_activation, Rng& rng,
                         double final_scale = 1.0) {
    Mlp net(std::move(layer_dims), output_activation);
    for (std::size_t l = 0; l < net.weights_.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(net.dims_[l]));
      const double scale = l + 1 == net.weights_.size() ? final_scale : 1.0;
      auto& w = net.weights_[l];
      for (Eigen::Index c = 0; c < w.cols(); ++c)
        for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = scale * uniform_real(rng, -bound, bound);
      for (Eigen::Index r = 0; r < net.biases_[l].size(); ++r)
        net.biases_[l](r) = scale * uniform_real(rng, -bound, bound);
    }
    return net;
  }

  const std::vector<int>& layer_dims() const { return dims_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  std::size_t num_layers() const { return weights_.size(); }
  Activation output_activation() const { return output_activation_; }

  std::vector<Eigen::MatrixXd>& weights() { return weights_; }
  const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
  std::vector<Eigen::VectorXd>& biases() { return biases_; }
  const std::vector<Eigen::VectorXd>& biases() const { return biases_; }

  bool all_finite() const {
    for (const auto& w : weights_)
      if (!w.allFinite()) return false;
    for (const auto& b : biases_)
      if (!b.allFinite()) return false;
    return true;
  }

  friend bool operator==(const Mlp& a, const Mlp& b) {
    if (a.dims_ != b.dims_ || a.output_activation_ != b.output_activation_) return false;
    for (std::size_t l = 0; l < a.weights_.size(); ++l)
      if (a.weights_[l] != b.weights_[l] || a.biases_[l] != b.biases_[l]) return false;
    return true;
  }

 private:
  std::vector<int> dims_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
  Activation output_activation_ = Activation::Identity;
};

/// Post-activation outputs of every layer; activations[0] is the input.
/// Columns are samples.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;
  const Eigen::MatrixXd& output() const { return activations.back(); }
};

namespace detail {

inline void apply(Activation a, Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::Relu: z = z.cwiseMax(0.0); break;
    case Activation::Tanh: z = z.array().tanh().matrix(); break;
    case Activation::Identity: break;
  }
}

// Derivative expressed through the post-activation value.
inline void scale_by_derivative(Activation a, const Eigen::MatrixXd& post, Eigen::MatrixXd& grad) {
  switch (a) {
    case Activation::Relu: grad = (post.array() > 0.0).select(grad, 0.0); break;
    case Activation::Tanh: grad = grad.cwiseProduct((1.0 - post.array().square()).matrix()); break;
    case Activation::Identity: break;
  }
}

}  // namespace detail

inline ForwardCache forward_cached(const Mlp& net, const Eigen::MatrixXd& inputs) {
  if (inputs.rows() != net.input_dim())
    throw std::invalid_argument("input dimension " + std::to_string(inputs.rows()) + " != network input " +
                                std::to_string(net.input_dim()));
  ForwardCache cache;
  cache.activations.reserve(net.num_layers() + 1);
  cache.activations.push_back(inputs);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    Eigen::MatrixXd z = net.weights()[l] * cache.activations.back();
    z.colwise() += net.biases()[l];
    detail::apply(l + 1 == net.num_layers() ? net.output_activation() : Activation::Relu, z);
    cache.activations.push_back(std::move(z));
  }
  return cache;
}

/// Output-layer values before the output activation.
inline Eigen::MatrixXd output_pre_activation(const Mlp& net, const ForwardCache& cache) {
  const std::size_t last = net.num_layers() - 1;
  Eigen::MatrixXd z = net.weights()[last] * cache.activations[last];
  z.colwise() += net.biases()[last];
  return z;
}

inline Eigen::MatrixXd forward(const Mlp& net, const Eigen::MatrixXd& inputs) {
  return forward_cached(net, inputs).output();
}

inline Eigen::VectorXd forward(const Mlp& net, const Eigen::VectorXd& input) {
  return forward_cached(net, Eigen::MatrixXd(input)).output().col(0);
}

/// Gradients of the scalar sum(upstream .* output) summed over the batch.
struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Eigen::MatrixXd input;

  double squared_norm() const {
    double s = 0.0;
    for (const auto& w : weights) s += w.squaredNorm();
    for (const auto& b : biases) s += b.squaredNorm();
    return s;
  }
  bool all_finite() const {
    for (const auto& w : weights)
      if (!w.allFinite()) return false;
    for (const auto& b : biases)
      if (!b.allFinite()) return false;
    return true;
  }
};

/// `pre_activation_upstream`, when given, is added to the gradient at the
/// output layer's pre-activation (after the output derivative is applied).
inline Gradients backward(const Mlp& net, const ForwardCache& cache, const Eigen::MatrixXd& upstream,
                          const Eigen::MatrixXd* pre_activation_upstream = nullptr) {
  const std::size_t layers = net.num_layers();
  if (cache.activations.size() != layers + 1) throw std::invalid_argument("forward cache does not match network");
  const auto& out = cache.output();
  if (upstream.rows() != out.rows() || upstream.cols() != out.cols())
    throw std::invalid_argument("upstream gradient shape does not match network output");

  Gradients g;
  g.weights.resize(layers);
  g.biases.resize(layers);
  Eigen::MatrixXd delta = upstream;
  for (std::size_t l = layers; l-- > 0;) {
    detail::scale_by_derivative(l + 1 == layers ? net.output_activation() : Activation::Relu,
                                cache.activations[l + 1], delta);
    if (l + 1 == layers && pre_activation_upstream) {
      if (pre_activation_upstream->rows() != delta.rows() || pre_activation_upstream->cols() != delta.cols())
        throw std::invalid_argument("pre-activation gradient shape does not match network output");
      delta += *pre_activation_upstream;
    }
    g.weights[l] = delta * cache.activations[l].transpose();
    g.biases[l] = delta.rowwise().sum();
    delta = net.weights()[l].transpose() * delta;
  }
  g.input = std::move(delta);
  return g;
}

/// params -= lr * grad, after rescaling the whole gradient to clip_norm if
/// its global norm exceeds it.
inline void sgd_step(Mlp& net, const Gradients& grads, double learning_rate,
                     std::optional<double> clip_norm = std::nullopt) {
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  if (!grads.all_finite()) throw DivergenceError("non-finite gradient");
  if (grads.weights.size() != net.num_layers()) throw std::invalid_argument("gradient does not match network");
  double scale = learning_rate;
  if (clip_norm) {
    const double norm = std::sqrt(grads.squared_norm());
    if (norm > *clip_norm) scale *= *clip_norm / norm;
  }
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    net.weights()[l] -= scale * grads.weights[l];
    net.biases()[l] -= scale * grads.biases[l];
  }
  if (!net.all_finite()) throw DivergenceError("non-finite parameters after update");
}

/// First and second moment estimates for Adam, shaped like the network.
struct AdamState {
  std::vector<Eigen::MatrixXd> m_weights, v_weights;
  std::vector<Eigen::VectorXd> m_biases, v_biases;
  std::int64_t step = 0;

  AdamState() = default;
  explicit AdamState(const Mlp& net) {
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      m_weights.push_back(Eigen::MatrixXd::Zero(net.weights()[l].rows(), net.weights()[l].cols()));
      m_biases.push_back(Eigen::VectorXd::Zero(net.biases()[l].size()));
    }
    v_weights = m_weights;
    v_biases = m_biases;
  }
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam update, with the same clipping and finiteness rules
/// as sgd_step.
inline void adam_step(Mlp& net, const Gradients& grads, AdamState& state, double learning_rate,
                      std::optional<double> clip_norm = std::nullopt, const AdamParams& p = {}) {
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  if (!grads.all_finite()) throw DivergenceError("non-finite gradient");
  if (grads.weights.size() != net.num_layers() || state.m_weights.size() != net.num_layers())
    throw std::invalid_argument("gradient or optimizer state does not match network");
  double g_scale = 1.0;
  if (clip_norm) {
    const double norm = std::sqrt(grads.squared_norm());
    if (norm > *clip_norm) g_scale = *clip_norm / norm;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(p.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(p.beta2, static_cast<double>(state.step));
  auto update = [&](auto& param, auto& m, auto& v, const auto& g_raw) {
    const auto g = (g_scale * g_raw).eval();
    m = p.beta1 * m + (1.0 - p.beta1) * g;
    v = p.beta2 * v + (1.0 - p.beta2) * g.cwiseProduct(g);
    param.array() -= learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + p.epsilon);
  };
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    update(net.weights()[l], state.m_weights[l], state.v_weights[l], grads.weights[l]);
    update(net.biases()[l], state.m_biases[l], state.v_biases[l], grads.biases[l]);
  }
  if (!net.all_finite()) throw DivergenceError("non-finite parameters after update");
}

inline constexpr int kCheckpointFormatVersion = 1;

inline nlohmann::json to_json(const Mlp& net) {
  nlohmann::json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["layer_dims"] = net.layer_dims();
  j["output_activation"] = to_string(net.output_activation());
  auto& ws = j["weights"] = nlohmann::json::array();
  auto& bs = j["biases"] = nlohmann::json::array();
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto& w = net.weights()[l];
    std::vector<double> row_major;
    row_major.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) row_major.push_back(w(r, c));
    ws.push_back(row_major);
    bs.push_back(std::vector<double>(net.biases()[l].data(), net.biases()[l].data() + net.biases()[l].size()));
  }
  return j;
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != kCheckpointFormatVersion)
      throw ConfigError("unsupported network format_version");
    Mlp net(j.at("layer_dims").get<std::vector<int>>(), parse_activation(j.at("output_activation").get<std::string>()));
    const auto& ws = j.at("weights");
    const auto& bs = j.at("biases");
    if (ws.size() != net.num_layers() || bs.size() != net.num_layers())
      throw ConfigError("network layer count does not match layer_dims");
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      const auto w = ws[l].get<std::vector<double>>();
      const auto b = bs[l].get<std::vector<double>>();
      auto& W = net.weights()[l];
      auto& B = net.biases()[l];
      if (w.size() != static_cast<std::size_t>(W.size()) || b.size() != static_cast<std::size_t>(B.size()))
        throw ConfigError("network parameter shape mismatch in layer " + std::to_string(l));
      for (Eigen::Index r = 0; r < W.rows(); ++r)
        for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = w[static_cast<std::size_t>(r * W.cols() + c)];
      for (Eigen::Index r = 0; r < B.size(); ++r) B(r) = b[static_cast<std::size_t>(r)];
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed network checkpoint: ") + e.what());
  }
}

namespace detail {

inline nlohmann::json matrices_to_json(const std::vector<Eigen::MatrixXd>& ms) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& m : ms) {
    std::vector<double> row_major;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) row_major.push_back(m(r, c));
    out.push_back(row_major);
  }
  return out;
}

inline void matrices_from_json(const nlohmann::json& j, std::vector<Eigen::MatrixXd>& ms) {
  if (j.size() != ms.size()) throw ConfigError("optimizer state layer count mismatch");
  for (std::size_t l = 0; l < ms.size(); ++l) {
    const auto v = j[l].get<std::vector<double>>();
    auto& m = ms[l];
    if (v.size() != static_cast<std::size_t>(m.size())) throw ConfigError("optimizer state shape mismatch");
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = v[static_cast<std::size_t>(r * m.cols() + c)];
  }
}

inline std::vector<Eigen::MatrixXd> as_matrices(const std::vector<Eigen::VectorXd>& vs) {
  std::vector<Eigen::MatrixXd> out;
  for (const auto& v : vs) out.emplace_back(v);
  return out;
}

}  // namespace detail

inline nlohmann::json to_json(const AdamState& s) {
  return {{"step", s.step},
          {"m_weights", detail::matrices_to_json(s.m_weights)},
          {"v_weights", detail::matrices_to_json(s.v_weights)},
          {"m_biases", detail::matrices_to_json(detail::as_matrices(s.m_biases))},
          {"v_biases", detail::matrices_to_json(detail::as_matrices(s.v_biases))}};
}

/// Restores moments for `net`'s shape.
inline AdamState adam_state_from_json(const nlohmann::json& j, const Mlp& net) {
  AdamState s(net);
  s.step = j.at("step").get<std::int64_t>();
  detail::matrices_from_json(j.at("m_weights"), s.m_weights);
  detail::matrices_from_json(j.at("v_weights"), s.v_weights);
  auto mb = detail::as_matrices(s.m_biases);
  auto vb = detail::as_matrices(s.v_biases);
  detail::matrices_from_json(j.at("m_biases"), mb);
  detail::matrices_from_json(j.at("v_biases"), vb);
  for (std::size_t l = 0; l < mb.size(); ++l) {
    s.m_biases[l] = mb[l].col(0);
    s.v_biases[l] = vb[l].col(0);
  }
  return s;
}

}  // namespace semex::nn
