#include "fitforge/neural.hpp"

#include <algorithm>
#include <cmath>

#include "fitforge/errors.hpp"

namespace fitforge::nn {

namespace {

std::span<double> view(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> view(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

void append(ParamViews& out, ParamViews more) { out.insert(out.end(), more.begin(), more.end()); }

double sigmoid(double x) {
  // Split form keeps exp from overflowing for large |x|.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

ConstParamViews as_const(const ParamViews& views) {
  ConstParamViews out;
  out.reserve(views.size());
  for (auto v : views) out.emplace_back(v.data(), v.size());
  return out;
}

void fill_zero(const ParamViews& views) {
  for (auto v : views) std::fill(v.begin(), v.end(), 0.0);
}

void accumulate(const ParamViews& dst, const ConstParamViews& src) {
  if (dst.size() != src.size()) throw DimensionError("parameter view counts differ");
  for (std::size_t p = 0; p < dst.size(); ++p) {
    if (dst[p].size() != src[p].size()) throw DimensionError("parameter view sizes differ");
    for (std::size_t i = 0; i < dst[p].size(); ++i) dst[p][i] += src[p][i];
  }
}

double activate(Activation kind, double x) {
  switch (kind) {
    case Activation::identity: return x;
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::sigmoid: return sigmoid(x);
    case Activation::tanh: return std::tanh(x);
    case Activation::selu: return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * std::expm1(x);
  }
  return x;
}

double activate_grad(Activation kind, double x) {
  switch (kind) {
    case Activation::identity: return 1.0;
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
    case Activation::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::selu: return x > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(x);
  }
  return 1.0;
}

Matrix activate(Activation kind, const Matrix& z) {
  return z.unaryExpr([kind](double v) { return activate(kind, v); });
}

Matrix activate_grad(Activation kind, const Matrix& z) {
  return z.unaryExpr([kind](double v) { return activate_grad(kind, v); });
}

Matrix dropout(const Matrix& x, double p, Rng& rng, Mode mode, Matrix* mask) {
  if (!(p >= 0.0 && p < 1.0)) throw ValidationError("dropout", "rate must be in [0, 1)");
  if (mode == Mode::eval || p == 0.0) {
    if (mask) *mask = Matrix::Ones(x.rows(), x.cols());
    return x;
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep = 1.0 / (1.0 - p);
  Matrix m(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng) < p ? 0.0 : keep;
  Matrix out = x.cwiseProduct(m);
  if (mask) *mask = std::move(m);
  return out;
}

Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

// ---------------------------------------------------------------------------

DenseLayer DenseLayer::init(Eigen::Index out, Eigen::Index in, Rng& rng) {
  if (out <= 0 || in <= 0) throw DimensionError("dense layer sizes must be positive");
  return DenseLayer{uniform_init(out, in, 1.0 / std::sqrt(static_cast<double>(in)), rng), Vector::Zero(out)};
}

Matrix DenseLayer::affine(const Matrix& x) const {
  if (x.rows() != w.cols()) {
    throw DimensionError("dense layer expects width " + std::to_string(w.cols()) + ", got " + std::to_string(x.rows()));
  }
  Matrix z = w * x;
  z.colwise() += b;
  return z;
}

ParamViews DenseLayer::params() { return {view(w), view(b)}; }

DenseLayer DenseLayer::zeros_like() const { return DenseLayer{Matrix::Zero(w.rows(), w.cols()), Vector::Zero(b.size())}; }

// ---------------------------------------------------------------------------

Mlp Mlp::init(const std::vector<Eigen::Index>& sizes, Rng& rng) {
  if (sizes.size() < 2) throw DimensionError("an MLP needs at least input and output sizes");
  Mlp m;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) m.layers.push_back(DenseLayer::init(sizes[l + 1], sizes[l], rng));
  return m;
}

ParamViews Mlp::params() {
  ++version_;
  ParamViews out;
  for (auto& l : layers) append(out, l.params());
  return out;
}

Mlp Mlp::zeros_like() const {
  Mlp m;
  m.hidden = hidden;
  m.output = output;
  for (const auto& l : layers) m.layers.push_back(l.zeros_like());
  return m;
}

Matrix mlp_forward(const Mlp& mlp, const Matrix& x, double dropout_p, Mode mode, Rng& rng, MlpCache* cache) {
  if (mlp.layers.empty()) throw DimensionError("empty MLP");
  for (std::size_t l = 1; l < mlp.layers.size(); ++l) {
    if (mlp.layers[l].in() != mlp.layers[l - 1].out()) throw DimensionError("MLP layer sizes do not chain");
  }
  if (cache) {
    *cache = MlpCache{};
    cache->owner = &mlp;
    cache->version = mlp.version();
  }
  Matrix a = x;
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const bool last = l + 1 == mlp.layers.size();
    Matrix z = mlp.layers[l].affine(a);
    if (cache) {
      cache->inputs.push_back(a);
      cache->pre.push_back(z);
    }
    a = activate(last ? mlp.output : mlp.hidden, z);
    if (!last) {
      Matrix mask;
      a = dropout(a, dropout_p, rng, mode, &mask);
      if (cache) cache->masks.push_back(std::move(mask));
    }
  }
  if (cache) cache->output = a;
  return a;
}

MlpGrads mlp_backward(const Mlp& mlp, const MlpCache& cache, const Matrix& upstream) {
  if (cache.owner != &mlp || cache.version != mlp.version() || cache.pre.size() != mlp.layers.size()) {
    throw StaleCacheError("MLP cache does not belong to the current parameters");
  }
  if (upstream.rows() != cache.output.rows() || upstream.cols() != cache.output.cols()) {
    throw DimensionError("upstream gradient shape does not match the MLP output");
  }
  MlpGrads g{mlp.zeros_like(), Matrix{}};
  Matrix delta = upstream;
  for (std::size_t l = mlp.layers.size(); l-- > 0;) {
    const bool last = l + 1 == mlp.layers.size();
    if (!last) delta = delta.cwiseProduct(cache.masks[l]);
    delta = delta.cwiseProduct(activate_grad(last ? mlp.output : mlp.hidden, cache.pre[l]));
    g.params.layers[l].w = delta * cache.inputs[l].transpose();
    g.params.layers[l].b = delta.rowwise().sum();
    delta = mlp.layers[l].w.transpose() * delta;
  }
  g.input = std::move(delta);
  return g;
}

// ---------------------------------------------------------------------------

LstmCell LstmCell::init(Eigen::Index hidden, Eigen::Index input, Rng& rng) {
  if (hidden <= 0 || input <= 0) throw DimensionError("LSTM sizes must be positive");
  const Eigen::Index fan_in = hidden + input;
  LstmCell c;
  c.w = uniform_init(4 * hidden, fan_in, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
  c.b = Vector::Zero(4 * hidden);
  c.gate_b(forget_gate).setOnes();
  return c;
}

LstmCell LstmCell::zeros(Eigen::Index hidden, Eigen::Index input) {
  return LstmCell{Matrix::Zero(4 * hidden, hidden + input), Vector::Zero(4 * hidden)};
}

ParamViews LstmCell::params() { return {view(w), view(b)}; }

LstmCell LstmCell::zeros_like() const { return LstmCell{Matrix::Zero(w.rows(), w.cols()), Vector::Zero(b.size())}; }

LstmStep lstm_cell_step(const LstmCell& cell, const Matrix& x, const Matrix& h_prev, const Matrix& c_prev) {
  const Eigen::Index H = cell.hidden();
  if (x.rows() != cell.input() || h_prev.rows() != H || c_prev.rows() != H || h_prev.cols() != x.cols() ||
      c_prev.cols() != x.cols()) {
    throw DimensionError("LSTM step dimensions do not match the cell");
  }
  LstmStep s;
  auto& k = s.cache;
  k.z.resize(H + x.rows(), x.cols());
  k.z.topRows(H) = h_prev;
  k.z.bottomRows(x.rows()) = x;
  Matrix a = cell.w * k.z;
  a.colwise() += cell.b;
  k.f = activate(Activation::sigmoid, a.middleRows(0, H));
  k.i = activate(Activation::sigmoid, a.middleRows(H, H));
  k.g = a.middleRows(2 * H, H).array().tanh().matrix();
  k.o = activate(Activation::sigmoid, a.middleRows(3 * H, H));
  k.c_prev = c_prev;
  k.c = k.f.cwiseProduct(c_prev) + k.i.cwiseProduct(k.g);
  k.tanh_c = k.c.array().tanh().matrix();
  s.c = k.c;
  s.h = k.o.cwiseProduct(k.tanh_c);
  return s;
}

LstmStepGrads lstm_cell_backward(const LstmCell& cell, const LstmStepCache& k, const Matrix& dh, const Matrix& dc,
                                 LstmCell& grads) {
  const Eigen::Index H = cell.hidden();
  if (dh.rows() != H || dc.rows() != H || dh.cols() != k.c.cols() || dc.cols() != k.c.cols()) {
    throw DimensionError("LSTM step gradient shape mismatch");
  }
  const auto one = [](const Matrix& m) { return Matrix::Ones(m.rows(), m.cols()); };
  const Matrix dct = dc + dh.cwiseProduct(k.o).cwiseProduct(one(k.tanh_c) - k.tanh_c.cwiseProduct(k.tanh_c));
  Matrix da(4 * H, k.c.cols());
  da.middleRows(0, H) = dct.cwiseProduct(k.c_prev).cwiseProduct(k.f).cwiseProduct(one(k.f) - k.f);
  da.middleRows(H, H) = dct.cwiseProduct(k.g).cwiseProduct(k.i).cwiseProduct(one(k.i) - k.i);
  da.middleRows(2 * H, H) = dct.cwiseProduct(k.i).cwiseProduct(one(k.g) - k.g.cwiseProduct(k.g));
  da.middleRows(3 * H, H) = dh.cwiseProduct(k.tanh_c).cwiseProduct(k.o).cwiseProduct(one(k.o) - k.o);

  grads.w.noalias() += da * k.z.transpose();
  grads.b += da.rowwise().sum();
  const Matrix dz = cell.w.transpose() * da;
  return LstmStepGrads{dz.bottomRows(dz.rows() - H), dz.topRows(H), dct.cwiseProduct(k.f)};
}

BiLstm BiLstm::init(Eigen::Index hidden, Eigen::Index input, Rng& rng) {
  BiLstm l;
  l.fwd = LstmCell::init(hidden, input, rng);
  l.bwd = LstmCell::init(hidden, input, rng);
  return l;
}

ParamViews BiLstm::params() {
  ParamViews out = fwd.params();
  append(out, bwd.params());
  return out;
}

BiLstm BiLstm::zeros_like() const { return BiLstm{fwd.zeros_like(), bwd.zeros_like()}; }

std::vector<Matrix> bilstm_forward(const BiLstm& layer, const std::vector<Matrix>& xs, BiLstmCache* cache) {
  if (xs.empty()) throw InsufficientDataError("Bi-LSTM needs at least one step");
  if (layer.fwd.hidden() != layer.bwd.hidden() || layer.fwd.input() != layer.bwd.input()) {
    throw DimensionError("Bi-LSTM directions differ in shape");
  }
  const std::size_t L = xs.size();
  const Eigen::Index H = layer.hidden(), B = xs.front().cols();
  for (const auto& x : xs) {
    if (x.rows() != layer.input() || x.cols() != B) throw DimensionError("Bi-LSTM steps differ in shape");
  }
  std::vector<Matrix> out(L, Matrix(2 * H, B));
  if (cache) {
    cache->fwd.assign(L, {});
    cache->bwd.assign(L, {});
  }
  Matrix h = Matrix::Zero(H, B), c = Matrix::Zero(H, B);
  for (std::size_t t = 0; t < L; ++t) {
    LstmStep s = lstm_cell_step(layer.fwd, xs[t], h, c);
    out[t].topRows(H) = s.h;
    h = std::move(s.h);
    c = std::move(s.c);
    if (cache) cache->fwd[t] = std::move(s.cache);
  }
  h.setZero();
  c.setZero();
  for (std::size_t t = L; t-- > 0;) {
    LstmStep s = lstm_cell_step(layer.bwd, xs[t], h, c);
    out[t].bottomRows(H) = s.h;
    h = std::move(s.h);
    c = std::move(s.c);
    if (cache) cache->bwd[t] = std::move(s.cache);
  }
  return out;
}

std::vector<Matrix> bilstm_backward(const BiLstm& layer, const BiLstmCache& cache, const std::vector<Matrix>& dys,
                                    BiLstm& grads) {
  const std::size_t L = dys.size();
  if (L == 0 || cache.fwd.size() != L || cache.bwd.size() != L) {
    throw DimensionError("Bi-LSTM cache length does not match the upstream gradients");
  }
  const Eigen::Index H = layer.hidden(), B = dys.front().cols();
  std::vector<Matrix> dxs(L);
  Matrix dh = Matrix::Zero(H, B), dc = Matrix::Zero(H, B);
  for (std::size_t t = L; t-- > 0;) {
    if (dys[t].rows() != 2 * H || dys[t].cols() != B) throw DimensionError("Bi-LSTM upstream gradient shape");
    LstmStepGrads g = lstm_cell_backward(layer.fwd, cache.fwd[t], dys[t].topRows(H) + dh, dc, grads.fwd);
    dxs[t] = std::move(g.x);
    dh = std::move(g.h_prev);
    dc = std::move(g.c_prev);
  }
  dh.setZero();
  dc.setZero();
  for (std::size_t t = 0; t < L; ++t) {
    LstmStepGrads g = lstm_cell_backward(layer.bwd, cache.bwd[t], dys[t].bottomRows(H) + dh, dc, grads.bwd);
    dxs[t] += g.x;
    dh = std::move(g.h_prev);
    dc = std::move(g.c_prev);
  }
  return dxs;
}

// ---------------------------------------------------------------------------

SequenceNet SequenceNet::init(Eigen::Index input, Eigen::Index hidden1, Eigen::Index hidden2, Rng& rng) {
  SequenceNet n;
  n.layer1 = BiLstm::init(hidden1, input, rng);
  n.layer2 = BiLstm::init(hidden2, 2 * hidden1, rng);
  n.hr_head = DenseLayer::init(1, 2 * hidden1, rng);
  n.speed_head = DenseLayer::init(1, 2 * hidden2, rng);
  return n;
}

ParamViews SequenceNet::params() {
  ++version_;
  ParamViews out = layer1.params();
  append(out, layer2.params());
  append(out, hr_head.params());
  append(out, speed_head.params());
  return out;
}

SequenceNet SequenceNet::zeros_like() const {
  SequenceNet n;
  n.layer1 = layer1.zeros_like();
  n.layer2 = layer2.zeros_like();
  n.hr_head = hr_head.zeros_like();
  n.speed_head = speed_head.zeros_like();
  n.head_activation = head_activation;
  return n;
}

SequenceOutput sequence_forward(const SequenceNet& net, const std::vector<Matrix>& xs, double dropout_p, Mode mode,
                                Rng& rng, SequenceCache* cache) {
  if (net.layer2.input() != net.layer1.output()) throw DimensionError("Bi-LSTM layers do not chain");
  SequenceCache local;
  SequenceCache& k = cache ? *cache : local;
  k = SequenceCache{};
  k.owner = &net;
  k.version = net.version();

  k.h1 = bilstm_forward(net.layer1, xs, cache ? &k.l1 : nullptr);
  const std::size_t L = xs.size();
  SequenceOutput out;
  out.hr.resize(L);
  out.speed.resize(L);
  std::vector<Matrix> dropped(L);
  k.masks.resize(L);
  k.hr_pre.resize(L);
  for (std::size_t t = 0; t < L; ++t) {
    k.hr_pre[t] = net.hr_head.affine(k.h1[t]);
    out.hr[t] = activate(net.head_activation, k.hr_pre[t]);
    dropped[t] = dropout(k.h1[t], dropout_p, rng, mode, &k.masks[t]);
  }
  k.h2 = bilstm_forward(net.layer2, dropped, cache ? &k.l2 : nullptr);
  k.speed_pre.resize(L);
  for (std::size_t t = 0; t < L; ++t) {
    k.speed_pre[t] = net.speed_head.affine(k.h2[t]);
    out.speed[t] = activate(net.head_activation, k.speed_pre[t]);
  }
  return out;
}

SequenceGrads sequence_backward(const SequenceNet& net, const SequenceCache& k, const std::vector<Matrix>& d_speed,
                                const std::vector<Matrix>& d_hr) {
  if (k.owner != &net || k.version != net.version() || k.l1.fwd.empty()) {
    throw StaleCacheError("sequence cache does not belong to the current parameters");
  }
  const std::size_t L = k.h1.size();
  if (d_speed.size() != L || d_hr.size() != L) throw DimensionError("upstream gradients must cover every step");

  SequenceGrads g{net.zeros_like(), {}};
  std::vector<Matrix> dh2(L), dh1(L);
  for (std::size_t t = 0; t < L; ++t) {
    const Matrix ds = d_speed[t].cwiseProduct(activate_grad(net.head_activation, k.speed_pre[t]));
    g.params.speed_head.w.noalias() += ds * k.h2[t].transpose();
    g.params.speed_head.b += ds.rowwise().sum();
    dh2[t] = net.speed_head.w.transpose() * ds;
  }
  std::vector<Matrix> dd = bilstm_backward(net.layer2, k.l2, dh2, g.params.layer2);
  for (std::size_t t = 0; t < L; ++t) {
    const Matrix dr = d_hr[t].cwiseProduct(activate_grad(net.head_activation, k.hr_pre[t]));
    g.params.hr_head.w.noalias() += dr * k.h1[t].transpose();
    g.params.hr_head.b += dr.rowwise().sum();
    dh1[t] = dd[t].cwiseProduct(k.masks[t]) + net.hr_head.w.transpose() * dr;
  }
  g.inputs = bilstm_backward(net.layer1, k.l1, dh1, g.params.layer1);
  return g;
}

// ---------------------------------------------------------------------------

double mse(const Matrix& pred, const Matrix& target, Matrix* grad) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw DimensionError("mse shape mismatch");
  if (pred.size() == 0) throw InsufficientDataError("mse of an empty batch");
  const Matrix diff = pred - target;
  const double n = static_cast<double>(pred.size());
  if (grad) *grad = (2.0 / n) * diff;
  return diff.squaredNorm() / n;
}

// ---------------------------------------------------------------------------

OptimizerConfig OptimizerConfig::adam(double lr, double weight_decay) {
  OptimizerConfig c;
  c.kind = OptimizerKind::adam;
  c.learning_rate = lr;
  c.weight_decay = weight_decay;
  return c;
}

OptimizerConfig OptimizerConfig::adagrad(double lr) {
  OptimizerConfig c;
  c.kind = OptimizerKind::adagrad;
  c.learning_rate = lr;
  return c;
}

void Optimizer::step(const ParamViews& params, const ConstParamViews& grads) {
  if (params.size() != grads.size()) throw DimensionError("optimizer: parameter and gradient counts differ");
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params[p].size() != grads[p].size()) throw DimensionError("optimizer: gradient shape mismatch");
  }
  if (steps_ == 0) {
    m_.clear();
    v_.clear();
    for (auto p : params) {
      if (config_.kind == OptimizerKind::adam) m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  } else {
    if (v_.size() != params.size()) throw DimensionError("optimizer: parameter count changed");
    for (std::size_t p = 0; p < params.size(); ++p) {
      if (v_[p].size() != params[p].size()) throw DimensionError("optimizer: parameter shape changed");
    }
  }
  ++steps_;
  const double lr = config_.learning_rate;
  if (config_.kind == OptimizerKind::adam) {
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto& m = m_[p];
      auto& v = v_[p];
      for (std::size_t i = 0; i < params[p].size(); ++i) {
        const double g = grads[p][i];
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
        const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.epsilon);
        double& theta = params[p][i];
        theta -= lr * (update + config_.weight_decay * theta);
      }
    }
  } else {
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto& acc = v_[p];
      for (std::size_t i = 0; i < params[p].size(); ++i) {
        const double g = grads[p][i];
        acc[i] += g * g;
        double& theta = params[p][i];
        theta -= lr * (g / (std::sqrt(acc[i]) + config_.adagrad_epsilon) + config_.weight_decay * theta);
      }
    }
  }
}

// ---------------------------------------------------------------------------

GradCheckReport grad_check(const ParamViews& params, const ConstParamViews& analytic,
                           const std::function<double()>& loss, double h, double threshold) {
  if (!(h > 0.0)) throw ValidationError("h", "step must be positive");
  if (params.size() != analytic.size()) throw DimensionError("grad_check: view counts differ");
  GradCheckReport report;
  report.threshold = threshold;
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params[p].size() != analytic[p].size()) throw DimensionError("grad_check: view sizes differ");
    double worst = 0.0;
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      double& theta = params[p][i];
      const double saved = theta;
      theta = saved + h;
      const double up = loss();
      theta = saved - h;
      const double down = loss();
      theta = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) throw NumericError("grad_check: non-finite loss");
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[p][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, rel);
      ++report.checked;
    }
    report.max_relative_error.push_back(worst);
    report.max_error = std::max(report.max_error, worst);
  }
  report.pass = report.max_error < threshold;
  return report;
}

}  // namespace fitforge::nn
