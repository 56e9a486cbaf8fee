#pragma once

// Fixed-topology fully-connected networks: ReLU hidden layers, a selectable
// output nonlinearity, reverse-mode gradients and Adam. Batches are row-major
// matrices with one sample per row.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "dualcap/errors.hpp"
#include "dualcap/rng.hpp"

namespace dualcap {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

enum class OutputActivation : std::uint8_t {
  linear = 0,
  tanh = 1,            // scale * tanh(a)
  sigmoid_scaled = 2,  // scale * sigmoid(a)
};

inline std::string_view to_string(OutputActivation a) {
  switch (a) {
    case OutputActivation::linear: return "linear";
    case OutputActivation::tanh: return "tanh";
    case OutputActivation::sigmoid_scaled: return "sigmoid_scaled";
  }
  return "?";
}

struct MlpParams {
  std::vector<int> layer_sizes;
  std::vector<Matrix> weights;  // layer k: layer_sizes[k+1] x layer_sizes[k]
  std::vector<RowVector> biases;
  OutputActivation output_activation = OutputActivation::linear;
  double output_scale = 1.0;

  [[nodiscard]] std::size_t layer_count() const { return weights.size(); }
  [[nodiscard]] int input_width() const { return layer_sizes.front(); }
  [[nodiscard]] int output_width() const { return layer_sizes.back(); }

  [[nodiscard]] std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) n += weights[k].size() + biases[k].size();
    return n;
  }

  void validate() const {
    detail::require(layer_sizes.size() >= 2, "mlp: need at least an input and an output layer");
    for (int s : layer_sizes) detail::require(s >= 1, "mlp: layer sizes must be positive");
    detail::require(weights.size() == layer_sizes.size() - 1 && biases.size() == weights.size(),
                    "mlp: layer count mismatch");
    for (std::size_t k = 0; k < weights.size(); ++k) {
      detail::require(weights[k].rows() == layer_sizes[k + 1] && weights[k].cols() == layer_sizes[k],
                      "mlp: weight shape mismatch at layer " + std::to_string(k));
      detail::require(biases[k].size() == layer_sizes[k + 1],
                      "mlp: bias shape mismatch at layer " + std::to_string(k));
      detail::require(weights[k].allFinite() && biases[k].allFinite(), "mlp: non-finite parameters");
    }
    detail::require(output_scale > 0.0 && std::isfinite(output_scale), "mlp: output scale must be positive");
  }

  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    if (a.layer_sizes != b.layer_sizes || a.output_activation != b.output_activation ||
        a.output_scale != b.output_scale || a.weights.size() != b.weights.size())
      return false;
    for (std::size_t k = 0; k < a.weights.size(); ++k)
      if (a.weights[k] != b.weights[k] || a.biases[k] != b.biases[k]) return false;
    return true;
  }
};

/// Parameter-shaped container for gradients and optimizer moments.
struct MlpGradients {
  std::vector<Matrix> weights;
  std::vector<RowVector> biases;

  static MlpGradients zeros_like(const MlpParams& p) {
    MlpGradients g;
    for (std::size_t k = 0; k < p.weights.size(); ++k) {
      g.weights.push_back(Matrix::Zero(p.weights[k].rows(), p.weights[k].cols()));
      g.biases.push_back(RowVector::Zero(p.biases[k].size()));
    }
    return g;
  }

  [[nodiscard]] bool all_finite() const {
    for (std::size_t k = 0; k < weights.size(); ++k)
      if (!weights[k].allFinite() || !biases[k].allFinite()) return false;
    return true;
  }

  MlpGradients& operator+=(const MlpGradients& o) {
    for (std::size_t k = 0; k < weights.size(); ++k) {
      weights[k] += o.weights[k];
      biases[k] += o.biases[k];
    }
    return *this;
  }

  [[nodiscard]] bool same_shape(const MlpParams& p) const {
    if (weights.size() != p.weights.size() || biases.size() != p.biases.size()) return false;
    for (std::size_t k = 0; k < weights.size(); ++k)
      if (weights[k].rows() != p.weights[k].rows() || weights[k].cols() != p.weights[k].cols() ||
          biases[k].size() != p.biases[k].size())
        return false;
    return true;
  }
};

/// Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases.
inline MlpParams init_mlp(const std::vector<int>& layer_sizes, OutputActivation output,
                          std::uint64_t seed, double output_scale = 1.0) {
  detail::require(!layer_sizes.empty(), "init_mlp: empty layer list");
  detail::require(layer_sizes.size() >= 2, "init_mlp: need at least two layers");
  for (int s : layer_sizes) detail::require(s >= 1, "init_mlp: zero-sized layer");

  MlpParams p;
  p.layer_sizes = layer_sizes;
  p.output_activation = output;
  p.output_scale = output_scale;
  for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k) {
    const int fan_in = layer_sizes[k];
    const int fan_out = layer_sizes[k + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    CounterRng rng(seed, {0x1417ULL, k});
    Matrix w(fan_out, fan_in);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.next_uniform(-bound, bound);
    p.weights.push_back(std::move(w));
    p.biases.push_back(RowVector::Zero(fan_out));
  }
  p.validate();
  return p;
}

/// Arithmetic for activations. Parameters, gradients and optimizer state are
/// double either way.
enum class Precision : std::uint8_t { f64, f32 };

inline std::string_view to_string(Precision p) { return p == Precision::f64 ? "f64" : "f32"; }

/// Matrices in the arithmetic used for activations. Parameters, gradients and
/// optimizer state are always double; a float forward/backward pass casts the
/// weights on entry and the gradients on exit.
template <class S>
using MatrixOf = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
struct BasicForwardTape {
  std::vector<int> layer_sizes;
  MatrixOf<S> input;
  std::vector<MatrixOf<S>> post;  // post-activations per layer; post.back() is the output

  [[nodiscard]] const MatrixOf<S>& output() const { return post.back(); }
  [[nodiscard]] Eigen::Index rows() const { return input.rows(); }
};

using ForwardTape = BasicForwardTape<double>;

template <class S>
struct BasicForwardPass {
  Matrix output;
  BasicForwardTape<S> tape;
};

using ForwardPass = BasicForwardPass<double>;

namespace detail {

template <class S>
void apply_output_activation(MatrixOf<S>& a, OutputActivation kind, double scale_d) {
  const S scale = static_cast<S>(scale_d);
  switch (kind) {
    case OutputActivation::linear:
      return;
    case OutputActivation::tanh: {
      // Saturated values are pulled back inside the open interval.
      const S edge = std::nextafter(scale, S(0));
      a = a.unaryExpr([scale, edge](S v) { return std::clamp(scale * std::tanh(v), -edge, edge); });
      return;
    }
    case OutputActivation::sigmoid_scaled: {
      const S edge = std::nextafter(scale, S(0));
      const S floor = std::numeric_limits<S>::denorm_min();
      // Split by sign so large |a| never overflows exp().
      a = a.unaryExpr([scale, edge, floor](S v) {
        S s;
        if (v >= S(0)) {
          s = scale / (S(1) + std::exp(-v));
        } else {
          const S e = std::exp(v);
          s = scale * e / (S(1) + e);
        }
        return std::clamp(s, floor, edge);
      });
      return;
    }
  }
}

// d(out)/d(pre), expressed through the recorded output.
template <class S>
void scale_by_output_derivative(MatrixOf<S>& delta, const MatrixOf<S>& out, OutputActivation kind, double scale_d) {
  const S scale = static_cast<S>(scale_d);
  switch (kind) {
    case OutputActivation::linear:
      return;
    case OutputActivation::tanh:
      delta.array() *= scale * (S(1) - (out.array() / scale).square());
      return;
    case OutputActivation::sigmoid_scaled:
      delta.array() *= out.array() * (S(1) - out.array() / scale);
      return;
  }
}

// Zeroes delta wherever the recorded ReLU output is zero; relu(z) > 0 exactly
// where z > 0. A plain loop vectorizes far better than a bool-to-float cast.
template <class S>
void relu_mask(MatrixOf<S>& delta, const MatrixOf<S>& post) {
  S* d = delta.data();
  const S* p = post.data();
  for (Eigen::Index i = 0; i < delta.size(); ++i) d[i] = p[i] > S(0) ? d[i] : S(0);
}

inline void check_input(const MlpParams& params, Eigen::Index cols) {
  if (cols != params.input_width())
    throw std::invalid_argument("mlp: input has " + std::to_string(cols) + " columns, network expects " +
                                std::to_string(params.input_width()));
}

template <class S>
MatrixOf<S> cast_input(Matrix&& input) {
  if constexpr (std::is_same_v<S, double>)
    return std::move(input);
  else
    return input.cast<S>();
}

template <class S>
MatrixOf<S> dense_layer(const MlpParams& params, std::size_t k, const MatrixOf<S>& a) {
  // Accumulating onto the broadcast bias skips the zero fill of a plain product.
  MatrixOf<S> z(a.rows(), params.weights[k].rows());
  if constexpr (std::is_same_v<S, double>) {
    z.rowwise() = params.biases[k];
    z.noalias() += a * params.weights[k].transpose();
  } else {
    const MatrixOf<S> w = params.weights[k].cast<S>();
    z.rowwise() = params.biases[k].cast<S>();
    z.noalias() += a * w.transpose();
  }
  if (k + 1 < params.layer_count())
    z.array() = z.array().max(S(0));
  else
    apply_output_activation<S>(z, params.output_activation, params.output_scale);
  return z;
}

}  // namespace detail

// Large batches are pushed through the network in row blocks so the hidden
// activations of a block stay in cache. Rows never interact, so the result
// does not depend on the block size.
inline constexpr Eigen::Index kRowBlock = 1024;

namespace detail {

template <class S, class Derived>
MatrixOf<S> eval_block(const MlpParams& params, const Eigen::MatrixBase<Derived>& input) {
  const std::size_t n = params.layer_count();
  MatrixOf<S> a = dense_layer<S>(params, 0, MatrixOf<S>(input.template cast<S>()));
  for (std::size_t k = 1; k < n; ++k) a = dense_layer<S>(params, k, a);
  return a;
}

}  // namespace detail

/// Forward pass without recording; used for evaluation-only paths.
template <class S = double>
Matrix mlp_eval(const MlpParams& params, const Matrix& input) {
  detail::check_input(params, input.cols());
  Matrix out(input.rows(), params.output_width());
  for (Eigen::Index r = 0; r < input.rows(); r += kRowBlock) {
    const Eigen::Index len = std::min(kRowBlock, input.rows() - r);
    out.middleRows(r, len) = detail::eval_block<S>(params, input.middleRows(r, len)).template cast<double>();
  }
  return out;
}

template <class S = double>
BasicForwardPass<S> mlp_forward(const MlpParams& params, Matrix input) {
  detail::check_input(params, input.cols());
  BasicForwardPass<S> fp;
  BasicForwardTape<S>& tape = fp.tape;
  tape.layer_sizes = params.layer_sizes;
  tape.input = detail::cast_input<S>(std::move(input));
  const std::size_t n = params.layer_count();
  tape.post.reserve(n);
  for (std::size_t k = 0; k < n; ++k)
    tape.post.push_back(detail::dense_layer<S>(params, k, k == 0 ? tape.input : tape.post.back()));
  fp.output = tape.post.back().template cast<double>();
  return fp;
}

enum class BackwardTargets : std::uint8_t { parameters, input, both };

struct BackwardPass {
  MlpGradients gradients;  // empty when only the input gradient was requested
  Matrix input_gradient;   // empty when only parameter gradients were requested
};

/// Reverse pass through a recorded forward pass. Gradients are summed over rows;
/// the ReLU derivative at exactly zero is taken as zero.
template <class S>
BackwardPass mlp_backward(const MlpParams& params, const BasicForwardTape<S>& tape, const Matrix& output_gradient,
                          BackwardTargets targets = BackwardTargets::both) {
  const std::size_t n = params.layer_count();
  if (tape.layer_sizes != params.layer_sizes || tape.post.size() != n)
    throw TapeMismatch("mlp_backward: tape was recorded for a different network");
  if (output_gradient.rows() != tape.rows() || output_gradient.cols() != params.output_width())
    throw TapeMismatch("mlp_backward: output gradient shape does not match the recorded output");

  const bool want_params = targets != BackwardTargets::input;
  const bool want_input = targets != BackwardTargets::parameters;

  BackwardPass bp;
  if (want_params) {
    bp.gradients.weights.resize(n);
    bp.gradients.biases.resize(n);
  }

  MatrixOf<S> delta = output_gradient.cast<S>();
  detail::scale_by_output_derivative<S>(delta, tape.post.back(), params.output_activation, params.output_scale);
  for (std::size_t k = n; k-- > 0;) {
    const MatrixOf<S>& a_in = k == 0 ? tape.input : tape.post[k - 1];
    if (want_params) {
      MatrixOf<S> gw;
      gw.noalias() = delta.transpose() * a_in;
      bp.gradients.weights[k] = gw.template cast<double>();
      // colwise().sum() walks a row-major matrix with a stride; a GEMV does not.
      const Eigen::Matrix<S, Eigen::Dynamic, 1> ones = Eigen::Matrix<S, Eigen::Dynamic, 1>::Ones(delta.rows());
      bp.gradients.biases[k] = (delta.transpose() * ones).transpose().template cast<double>();
    }
    if (k == 0 && !want_input) break;
    MatrixOf<S> next;
    if constexpr (std::is_same_v<S, double>) {
      next.noalias() = delta * params.weights[k];
    } else {
      const MatrixOf<S> w = params.weights[k].cast<S>();
      next.noalias() = delta * w;
    }
    if (k == 0) {
      bp.input_gradient = next.template cast<double>();
    } else {
      detail::relu_mask(next, tape.post[k - 1]);
      delta = std::move(next);
    }
  }
  return bp;
}

/// Forward and reverse pass in row blocks without keeping a whole-batch tape.
/// Parameter gradients are summed over all rows (in double across blocks).
/// `outputs`, when given, receives the forward outputs.
template <class S = double>
BackwardPass mlp_gradient(const MlpParams& params, const Matrix& input, const Matrix& output_gradient,
                          BackwardTargets targets = BackwardTargets::both, Matrix* outputs = nullptr) {
  detail::check_input(params, input.cols());
  if (output_gradient.rows() != input.rows() || output_gradient.cols() != params.output_width())
    throw TapeMismatch("mlp_gradient: output gradient shape does not match the input batch");
  BackwardPass total;
  const bool want_params = targets != BackwardTargets::input;
  const bool want_input = targets != BackwardTargets::parameters;
  if (want_params) total.gradients = MlpGradients::zeros_like(params);
  if (want_input) total.input_gradient.resize(input.rows(), input.cols());
  if (outputs != nullptr) outputs->resize(input.rows(), params.output_width());
  for (Eigen::Index r = 0; r < input.rows(); r += kRowBlock) {
    const Eigen::Index len = std::min(kRowBlock, input.rows() - r);
    const BasicForwardPass<S> fp = mlp_forward<S>(params, input.middleRows(r, len));
    if (outputs != nullptr) outputs->middleRows(r, len) = fp.output;
    BackwardPass part = mlp_backward(params, fp.tape, output_gradient.middleRows(r, len), targets);
    if (want_params) total.gradients += part.gradients;
    if (want_input) total.input_gradient.middleRows(r, len) = part.input_gradient;
  }
  return total;
}

inline Matrix mlp_eval(const MlpParams& params, const Matrix& input, Precision precision) {
  return precision == Precision::f64 ? mlp_eval<double>(params, input) : mlp_eval<float>(params, input);
}

inline BackwardPass mlp_gradient(const MlpParams& params, const Matrix& input, const Matrix& output_gradient,
                                 BackwardTargets targets, Precision precision, Matrix* outputs = nullptr) {
  return precision == Precision::f64 ? mlp_gradient<double>(params, input, output_gradient, targets, outputs)
                                     : mlp_gradient<float>(params, input, output_gradient, targets, outputs);
}

struct AdamState {
  MlpGradients first_moment;
  MlpGradients second_moment;
  std::int64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(const MlpParams& p) {
    AdamState s;
    s.first_moment = MlpGradients::zeros_like(p);
    s.second_moment = MlpGradients::zeros_like(p);
    return s;
  }
};

/// One bias-corrected Adam descent step. Non-finite gradients leave both
/// parameters and state untouched and raise DivergenceError.
inline void adam_step(MlpParams& params, const MlpGradients& gradients, AdamState& state,
                      double learning_rate) {
  detail::require(learning_rate > 0.0, "adam_step: learning rate must be positive");
  if (!gradients.same_shape(params) || !state.first_moment.same_shape(params) ||
      !state.second_moment.same_shape(params))
    throw std::invalid_argument("adam_step: gradient or state shape mismatch");
  if (!gradients.all_finite()) throw DivergenceError("adam_step: non-finite gradient entries");

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double eps = state.epsilon;

  auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
    m.array() = b1 * m.array() + (1.0 - b1) * g.array();
    v.array() = b2 * v.array() + (1.0 - b2) * g.array().square();
    p.array() -= learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t k = 0; k < params.layer_count(); ++k) {
    update(params.weights[k], state.first_moment.weights[k], state.second_moment.weights[k],
           gradients.weights[k]);
    update(params.biases[k], state.first_moment.biases[k], state.second_moment.biases[k],
           gradients.biases[k]);
  }
}

// Binary parameter dump: magic, layer sizes, activation tags, then per layer the
// row-major weight block followed by the bias vector (little-endian IEEE-754).

namespace detail {

inline constexpr char kMlpMagic[8] = {'D', 'C', 'M', 'L', 'P', '0', '0', '1'};
inline constexpr std::uint8_t kHiddenRelu = 0;

static_assert(std::endian::native == std::endian::little, "parameter dumps assume little-endian");

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("load_mlp: truncated parameter dump");
  return v;
}

}  // namespace detail

inline void save_mlp(const MlpParams& p, std::ostream& os) {
  p.validate();
  os.write(detail::kMlpMagic, sizeof(detail::kMlpMagic));
  detail::write_pod(os, static_cast<std::uint32_t>(p.layer_sizes.size()));
  for (int s : p.layer_sizes) detail::write_pod(os, static_cast<std::int32_t>(s));
  detail::write_pod(os, detail::kHiddenRelu);
  detail::write_pod(os, static_cast<std::uint8_t>(p.output_activation));
  detail::write_pod(os, p.output_scale);
  for (std::size_t k = 0; k < p.layer_count(); ++k) {
    os.write(reinterpret_cast<const char*>(p.weights[k].data()),
             static_cast<std::streamsize>(p.weights[k].size() * sizeof(double)));
    os.write(reinterpret_cast<const char*>(p.biases[k].data()),
             static_cast<std::streamsize>(p.biases[k].size() * sizeof(double)));
  }
}

inline MlpParams load_mlp(std::istream& is) {
  char magic[sizeof(detail::kMlpMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, detail::kMlpMagic, sizeof(magic)) != 0)
    throw std::runtime_error("load_mlp: not a parameter dump");
  const auto count = detail::read_pod<std::uint32_t>(is);
  if (count < 2 || count > 1024) throw std::runtime_error("load_mlp: bad layer count");
  MlpParams p;
  for (std::uint32_t i = 0; i < count; ++i) p.layer_sizes.push_back(detail::read_pod<std::int32_t>(is));
  if (detail::read_pod<std::uint8_t>(is) != detail::kHiddenRelu)
    throw std::runtime_error("load_mlp: unsupported hidden activation");
  const auto out = detail::read_pod<std::uint8_t>(is);
  if (out > 2) throw std::runtime_error("load_mlp: unknown output activation");
  p.output_activation = static_cast<OutputActivation>(out);
  p.output_scale = detail::read_pod<double>(is);
  for (std::size_t k = 0; k + 1 < p.layer_sizes.size(); ++k) {
    if (p.layer_sizes[k] < 1 || p.layer_sizes[k + 1] < 1)
      throw std::runtime_error("load_mlp: bad layer size");
    Matrix w(p.layer_sizes[k + 1], p.layer_sizes[k]);
    RowVector b(p.layer_sizes[k + 1]);
    is.read(reinterpret_cast<char*>(w.data()), static_cast<std::streamsize>(w.size() * sizeof(double)));
    is.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(b.size() * sizeof(double)));
    if (!is) throw std::runtime_error("load_mlp: truncated parameter dump");
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  p.validate();
  return p;
}

inline std::string dump_mlp(const MlpParams& p) {
  std::ostringstream os(std::ios::binary);
  save_mlp(p, os);
  return std::move(os).str();
}

inline MlpParams parse_mlp(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  return load_mlp(is);
}

inline void save_mlp_file(const MlpParams& p, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_mlp: cannot open " + path);
  save_mlp(p, os);
}

inline MlpParams load_mlp_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_mlp: cannot open " + path);
  return load_mlp(is);
}

}  // namespace dualcap
