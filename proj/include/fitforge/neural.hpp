#pragma once

// Dense, LSTM and Bi-LSTM layers with hand-written reverse mode.
// Batches are matrices whose columns are samples. Everything is double.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fitforge/workout.hpp"

namespace fitforge::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Flat views over every parameter array of a model, in a fixed order.
using ParamViews = std::vector<std::span<double>>;
using ConstParamViews = std::vector<std::span<const double>>;

ConstParamViews as_const(const ParamViews& views);
void fill_zero(const ParamViews& views);
// dst += src, elementwise; shapes must match.
void accumulate(const ParamViews& dst, const ConstParamViews& src);

enum class Activation { identity, relu, sigmoid, tanh, selu };
enum class Mode { train, eval };

inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;

double activate(Activation kind, double x);
// Derivative at pre-activation x.
double activate_grad(Activation kind, double x);
Matrix activate(Activation kind, const Matrix& z);
Matrix activate_grad(Activation kind, const Matrix& z);

// Inverted dropout. `mask`, when given, receives the multiplier applied to
// each entry (0 or 1/(1-p); all ones in eval mode). Throws ValidationError for p outside [0, 1).
Matrix dropout(const Matrix& x, double p, Rng& rng, Mode mode, Matrix* mask = nullptr);

// Weights uniform in +-1/sqrt(fan_in), zero bias.
Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng);

struct DenseLayer {
  Matrix w;  // out x in
  Vector b;  // out

  static DenseLayer init(Eigen::Index out, Eigen::Index in, Rng& rng);
  Eigen::Index in() const { return w.cols(); }
  Eigen::Index out() const { return w.rows(); }
  Matrix affine(const Matrix& x) const;  // W x + b, DimensionError on width mismatch
  ParamViews params();
  DenseLayer zeros_like() const;
};

// ---------------------------------------------------------------------------
// MLP: hidden layers use `hidden`, the last layer uses `output`.

struct Mlp {
  std::vector<DenseLayer> layers;
  Activation hidden = Activation::relu;
  Activation output = Activation::sigmoid;

  // sizes = {in, h1, ..., out}
  static Mlp init(const std::vector<Eigen::Index>& sizes, Rng& rng);
  Eigen::Index in() const { return layers.front().in(); }
  Eigen::Index out() const { return layers.back().out(); }
  // Mutable views; any call marks earlier forward caches as stale.
  ParamViews params();
  Mlp zeros_like() const;
  std::uint64_t version() const { return version_; }

 private:
  std::uint64_t version_ = 0;
};

struct MlpCache {
  const Mlp* owner = nullptr;
  std::uint64_t version = 0;
  std::vector<Matrix> inputs;  // input to each layer (after dropout)
  std::vector<Matrix> pre;     // pre-activations
  std::vector<Matrix> masks;   // dropout multipliers on hidden outputs
  Matrix output;
};

Matrix mlp_forward(const Mlp& mlp, const Matrix& x, double dropout_p, Mode mode, Rng& rng, MlpCache* cache = nullptr);

struct MlpGrads {
  Mlp params;
  Matrix input;
};
// Throws StaleCacheError if the cache came from another model or the
// parameters were handed out since the forward pass.
MlpGrads mlp_backward(const Mlp& mlp, const MlpCache& cache, const Matrix& upstream);

// ---------------------------------------------------------------------------
// LSTM

// Gate blocks are stacked in the order f, i, C~, o: rows [0,H) hold W_f,
// [H,2H) W_i, [2H,3H) W_C, [3H,4H) W_o. Each block is H x (H + input) and
// multiplies [h_prev; x_t].
struct LstmCell {
  Matrix w;  // 4H x (H + input)
  Vector b;  // 4H

  static LstmCell init(Eigen::Index hidden, Eigen::Index input, Rng& rng);
  static LstmCell zeros(Eigen::Index hidden, Eigen::Index input);
  Eigen::Index hidden() const { return w.rows() / 4; }
  Eigen::Index input() const { return w.cols() - hidden(); }
  auto gate_w(int gate) { return w.middleRows(gate * hidden(), hidden()); }
  auto gate_w(int gate) const { return w.middleRows(gate * hidden(), hidden()); }
  auto gate_b(int gate) { return b.segment(gate * hidden(), hidden()); }
  auto gate_b(int gate) const { return b.segment(gate * hidden(), hidden()); }
  ParamViews params();
  LstmCell zeros_like() const;
};

enum Gate : int { forget_gate = 0, input_gate = 1, candidate_gate = 2, output_gate = 3 };

struct LstmStepCache {
  Matrix z;       // [h_prev; x]
  Matrix f, i, g, o;
  Matrix c_prev, c, tanh_c;
};

struct LstmStep {
  Matrix h;
  Matrix c;
  LstmStepCache cache;
};

// f, i, o = sigmoid, C~ = tanh, c = f*c_prev + i*C~, h = o * tanh(c).
LstmStep lstm_cell_step(const LstmCell& cell, const Matrix& x, const Matrix& h_prev, const Matrix& c_prev);

struct LstmStepGrads {
  Matrix x, h_prev, c_prev;
};
// Adds parameter gradients into `grads`.
LstmStepGrads lstm_cell_backward(const LstmCell& cell, const LstmStepCache& cache, const Matrix& dh, const Matrix& dc,
                                 LstmCell& grads);

struct BiLstm {
  LstmCell fwd;
  LstmCell bwd;

  static BiLstm init(Eigen::Index hidden, Eigen::Index input, Rng& rng);
  Eigen::Index hidden() const { return fwd.hidden(); }
  Eigen::Index input() const { return fwd.input(); }
  Eigen::Index output() const { return 2 * hidden(); }
  ParamViews params();
  BiLstm zeros_like() const;
};

struct BiLstmCache {
  std::vector<LstmStepCache> fwd;  // fwd[t] is the step that read x_t
  std::vector<LstmStepCache> bwd;  // bwd[t] is the step that read x_t
};

// Per step output [h_fwd; h_bwd]. Throws InsufficientDataError for an empty sequence.
std::vector<Matrix> bilstm_forward(const BiLstm& layer, const std::vector<Matrix>& xs, BiLstmCache* cache = nullptr);
// Backpropagation through time over both directions. Adds parameter
// gradients into `grads` and returns per-step input gradients.
std::vector<Matrix> bilstm_backward(const BiLstm& layer, const BiLstmCache& cache, const std::vector<Matrix>& dys,
                                    BiLstm& grads);

// ---------------------------------------------------------------------------
// Stacked Bi-LSTM with two per-step heads: the heart-rate head reads layer 1,
// layer 1 (after dropout) feeds layer 2, the speed head reads layer 2.

struct SequenceNet {
  BiLstm layer1;
  BiLstm layer2;
  DenseLayer hr_head;     // 1 x 2*H1
  DenseLayer speed_head;  // 1 x 2*H2
  Activation head_activation = Activation::selu;

  static SequenceNet init(Eigen::Index input, Eigen::Index hidden1, Eigen::Index hidden2, Rng& rng);
  Eigen::Index input() const { return layer1.input(); }
  ParamViews params();
  SequenceNet zeros_like() const;
  std::uint64_t version() const { return version_; }

 private:
  std::uint64_t version_ = 0;
};

struct SequenceOutput {
  std::vector<Matrix> speed;  // per step, 1 x batch
  std::vector<Matrix> hr;
};

struct SequenceCache {
  const SequenceNet* owner = nullptr;
  std::uint64_t version = 0;
  BiLstmCache l1, l2;
  std::vector<Matrix> masks;
  std::vector<Matrix> h1, h2;
  std::vector<Matrix> hr_pre, speed_pre;
};

SequenceOutput sequence_forward(const SequenceNet& net, const std::vector<Matrix>& xs, double dropout_p, Mode mode,
                                Rng& rng, SequenceCache* cache = nullptr);

struct SequenceGrads {
  SequenceNet params;
  std::vector<Matrix> inputs;
};
SequenceGrads sequence_backward(const SequenceNet& net, const SequenceCache& cache,
                                const std::vector<Matrix>& d_speed, const std::vector<Matrix>& d_hr);

// ---------------------------------------------------------------------------
// Losses

// mean over all entries of (pred - target)^2; `grad` receives d loss / d pred.
double mse(const Matrix& pred, const Matrix& target, Matrix* grad = nullptr);

// ---------------------------------------------------------------------------
// Optimizers

enum class OptimizerKind { adam, adagrad };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;  // decoupled: theta -= lr * wd * theta
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;  // Adam; Adagrad uses adagrad_epsilon
  double adagrad_epsilon = 1e-10;

  static OptimizerConfig adam(double lr, double weight_decay = 0.0);
  static OptimizerConfig adagrad(double lr);
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(config) {}

  // Throws DimensionError when the views disagree with each other or with
  // the shapes seen on the first step.
  void step(const ParamViews& params, const ConstParamViews& grads);

  const OptimizerConfig& config() const { return config_; }
  std::uint64_t steps() const { return steps_; }
  // Adam first/second moments, or the Adagrad accumulator in `second`.
  const std::vector<std::vector<double>>& first_moment() const { return m_; }
  const std::vector<std::vector<double>>& second_moment() const { return v_; }

 private:
  OptimizerConfig config_;
  std::uint64_t steps_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct GradCheckReport {
  std::vector<double> max_relative_error;  // one per parameter view
  double max_error = 0.0;
  double threshold = 0.0;
  std::size_t checked = 0;
  bool pass = false;
};

// Central differences (L(theta+h) - L(theta-h)) / 2h on every scalar of
// `params`, compared with `analytic` using |a-n| / max(|a|, |n|, 1e-8).
// Parameters are restored afterwards. Throws NumericError on a non-finite loss.
GradCheckReport grad_check(const ParamViews& params, const ConstParamViews& analytic,
                           const std::function<double()>& loss, double h = 1e-5, double threshold = 1e-4);

}  // namespace fitforge::nn
