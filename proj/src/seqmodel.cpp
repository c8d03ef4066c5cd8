#include "metaview/seqmodel.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "metaview/error.hpp"

namespace metaview {

namespace {

using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;

// Scalar activations: unaryExpr with a lambda is never packet-vectorized, so
// each entry is computed the same way wherever it sits in the batch.
template <typename Derived>
Matrix sigmoid(const Eigen::MatrixBase<Derived>& m) {
  return m.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

template <typename Derived>
Matrix tanh_of(const Eigen::MatrixBase<Derived>& m) {
  return m.unaryExpr([](double x) { return std::tanh(x); });
}

// Column-at-a-time product through a contiguous scratch vector, so every
// column is computed identically no matter how many windows share the batch.
Matrix columnwise_product(const ConstRowMap& lhs, const Matrix& rhs) {
  Matrix out(lhs.rows(), rhs.cols());
  Eigen::VectorXd column(rhs.rows());
  Eigen::VectorXd result(lhs.rows());
  for (Eigen::Index b = 0; b < rhs.cols(); ++b) {
    column = rhs.col(b);
    result.noalias() = lhs * column;
    out.col(b) = result;
  }
  return out;
}

struct LstmShape {
  Eigen::Index in, hidden, out, steps;
  Eigen::Index z_rows() const { return in + hidden + 1; }
  Eigen::Index gate_rows() const { return 4 * hidden; }
  Eigen::Index gate_size() const { return gate_rows() * z_rows(); }
};

LstmShape lstm_shape(const ArchSpec& a) {
  return {static_cast<Eigen::Index>(a.input_dim), static_cast<Eigen::Index>(a.hidden_dim),
          static_cast<Eigen::Index>(a.output_dim), static_cast<Eigen::Index>(a.sequence_length)};
}

void check_params(const SequenceModelParams& p) {
  p.arch.validate();
  if (p.values.size() != p.arch.param_count()) {
    throw ShapeMismatch("parameter vector has " + std::to_string(p.values.size()) +
                        " values, architecture needs " + std::to_string(p.arch.param_count()));
  }
}

void check_window(const ArchSpec& arch, std::span<const double> window) {
  if (window.size() != arch.window_size()) {
    throw ShapeMismatch("window has " + std::to_string(window.size()) + " values, expected " +
                        std::to_string(arch.window_size()));
  }
}

// Forward pass over B windows, keeping what the backward pass needs.
struct LstmTape {
  std::vector<Matrix> z;      // [x_t; h_{t-1}; 1], per step
  std::vector<Matrix> gates;  // activated i, f, g, o stacked, per step
  std::vector<Matrix> cell;   // c_t, per step
  Matrix readout_in;          // [h_S; 1]
  Matrix output;
};

LstmTape lstm_forward(const SequenceModelParams& p, std::span<const std::span<const double>> windows,
                      bool keep_tape) {
  const LstmShape s = lstm_shape(p.arch);
  const Eigen::Index batch = static_cast<Eigen::Index>(windows.size());
  const ConstRowMap w(p.values.data(), s.gate_rows(), s.z_rows());
  const ConstRowMap v(p.values.data() + s.gate_size(), s.out, s.hidden + 1);

  LstmTape tape;
  if (keep_tape) {
    tape.z.reserve(static_cast<std::size_t>(s.steps));
    tape.gates.reserve(static_cast<std::size_t>(s.steps));
    tape.cell.reserve(static_cast<std::size_t>(s.steps));
  }
  Matrix h = Matrix::Zero(s.hidden, batch);
  Matrix c = Matrix::Zero(s.hidden, batch);
  Matrix z(s.z_rows(), batch);
  z.bottomRows(1).setOnes();
  for (Eigen::Index t = 0; t < s.steps; ++t) {
    for (Eigen::Index b = 0; b < batch; ++b) {
      const double* x = windows[static_cast<std::size_t>(b)].data() + t * s.in;
      for (Eigen::Index j = 0; j < s.in; ++j) z(j, b) = x[j];
    }
    z.middleRows(s.in, s.hidden) = h;
    const Matrix pre = columnwise_product(w, z);
    Matrix act(s.gate_rows(), batch);
    act.topRows(2 * s.hidden) = sigmoid(pre.topRows(2 * s.hidden));
    act.middleRows(2 * s.hidden, s.hidden) = tanh_of(pre.middleRows(2 * s.hidden, s.hidden));
    act.bottomRows(s.hidden) = sigmoid(pre.bottomRows(s.hidden));

    c = (act.middleRows(s.hidden, s.hidden).array() * c.array() +
         act.topRows(s.hidden).array() * act.middleRows(2 * s.hidden, s.hidden).array())
            .matrix();
    h = (act.bottomRows(s.hidden).array() * tanh_of(c).array()).matrix();
    if (keep_tape) {
      tape.z.push_back(z);
      tape.gates.push_back(std::move(act));
      tape.cell.push_back(c);
    }
  }
  tape.readout_in.resize(s.hidden + 1, batch);
  tape.readout_in.topRows(s.hidden) = h;
  tape.readout_in.bottomRows(1).setOnes();
  tape.output = columnwise_product(v, tape.readout_in);
  return tape;
}

Matrix linear_forward(const SequenceModelParams& p, std::span<const std::span<const double>> windows,
                      Matrix* design_out) {
  const auto n_in = static_cast<Eigen::Index>(p.arch.window_size());
  const auto out = static_cast<Eigen::Index>(p.arch.output_dim);
  const Eigen::Index batch = static_cast<Eigen::Index>(windows.size());
  const ConstRowMap a(p.values.data(), out, n_in + 1);
  Matrix design(n_in + 1, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const auto& win = windows[static_cast<std::size_t>(b)];
    for (Eigen::Index j = 0; j < n_in; ++j) design(j, b) = win[static_cast<std::size_t>(j)];
    design(n_in, b) = 1.0;
  }
  Matrix y = columnwise_product(a, design);
  if (design_out) *design_out = std::move(design);
  return y;
}

}  // namespace

std::string to_string(ModelKind kind) { return kind == ModelKind::lstm ? "lstm" : "linear"; }

ModelKind parse_model_kind(const std::string& name) {
  if (name == "lstm") return ModelKind::lstm;
  if (name == "linear") return ModelKind::linear;
  throw ConfigError("unknown model kind '" + name + "'");
}

std::size_t ArchSpec::param_count() const {
  if (kind == ModelKind::linear) return (sequence_length * input_dim + 1) * output_dim;
  return 4 * (input_dim + hidden_dim + 1) * hidden_dim + (hidden_dim + 1) * output_dim;
}

void ArchSpec::validate() const {
  if (input_dim == 0 || hidden_dim == 0 || output_dim == 0 || sequence_length == 0) {
    throw ShapeMismatch("architecture dimensions must all be >= 1");
  }
}

SequenceModelParams init_params(const ArchSpec& arch, std::uint64_t seed) {
  arch.validate();
  SequenceModelParams p{arch, std::vector<double>(arch.param_count(), 0.0)};
  Rng rng(seed);
  if (arch.kind == ModelKind::linear) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(arch.window_size()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const std::size_t cols = arch.window_size() + 1;
    for (std::size_t r = 0; r < arch.output_dim; ++r) {
      for (std::size_t c = 0; c + 1 < cols; ++c) p.values[r * cols + c] = dist(rng);
    }
    return p;
  }

  const double bound = 1.0 / std::sqrt(static_cast<double>(arch.hidden_dim));
  std::uniform_real_distribution<double> dist(-bound, bound);
  const std::size_t h = arch.hidden_dim;
  const std::size_t cols = arch.input_dim + h + 1;
  for (std::size_t r = 0; r < 4 * h; ++r) {
    for (std::size_t c = 0; c + 1 < cols; ++c) p.values[r * cols + c] = dist(rng);
    const bool forget_gate = r >= h && r < 2 * h;
    p.values[r * cols + cols - 1] = forget_gate ? 1.0 : 0.0;
  }
  const std::size_t offset = 4 * h * cols;
  for (std::size_t r = 0; r < arch.output_dim; ++r) {
    for (std::size_t c = 0; c < h; ++c) p.values[offset + r * (h + 1) + c] = dist(rng);
  }
  return p;
}

std::vector<double> forward_batch(const SequenceModelParams& params,
                                  std::span<const std::span<const double>> windows) {
  check_params(params);
  for (const auto& w : windows) check_window(params.arch, w);
  if (windows.empty()) return {};
  const Matrix y = params.arch.kind == ModelKind::lstm ? lstm_forward(params, windows, false).output
                                                       : linear_forward(params, windows, nullptr);
  return std::vector<double>(y.data(), y.data() + y.size());
}

std::vector<double> forward(const SequenceModelParams& params, std::span<const double> inputs) {
  const std::span<const double> one[] = {inputs};
  return forward_batch(params, one);
}

LossGrad loss_and_grad(const SequenceModelParams& params, std::span<const TrainingExample> batch) {
  check_params(params);
  if (batch.empty()) throw EmptyInput("training batch");
  const ArchSpec& arch = params.arch;
  std::vector<std::span<const double>> windows;
  windows.reserve(batch.size());
  for (const TrainingExample& ex : batch) {
    check_window(arch, ex.inputs);
    if (ex.label.size() != arch.output_dim) {
      throw ShapeMismatch("label has " + std::to_string(ex.label.size()) + " values, expected " +
                          std::to_string(arch.output_dim));
    }
    windows.emplace_back(ex.inputs);
  }

  const auto out = static_cast<Eigen::Index>(arch.output_dim);
  const auto n = static_cast<Eigen::Index>(batch.size());
  Matrix labels(out, n);
  for (Eigen::Index b = 0; b < n; ++b) {
    for (Eigen::Index o = 0; o < out; ++o) labels(o, b) = batch[static_cast<std::size_t>(b)].label[static_cast<std::size_t>(o)];
  }

  LossGrad result;
  result.grad.assign(params.values.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(out * n);

  if (arch.kind == ModelKind::linear) {
    Matrix design;
    const Matrix y = linear_forward(params, windows, &design);
    const Matrix residual = y - labels;
    result.loss = residual.squaredNorm() * scale;
    const Matrix dy = 2.0 * scale * residual;
    RowMap(result.grad.data(), out, design.rows()) = dy * design.transpose();
    return result;
  }

  const LstmShape s = lstm_shape(arch);
  const LstmTape tape = lstm_forward(params, windows, true);
  const ConstRowMap w(params.values.data(), s.gate_rows(), s.z_rows());
  const ConstRowMap v(params.values.data() + s.gate_size(), s.out, s.hidden + 1);
  RowMap dw(result.grad.data(), s.gate_rows(), s.z_rows());
  RowMap dv(result.grad.data() + s.gate_size(), s.out, s.hidden + 1);

  const Matrix residual = tape.output - labels;
  result.loss = residual.squaredNorm() * scale;
  const Matrix dy = 2.0 * scale * residual;
  dv = dy * tape.readout_in.transpose();

  const Eigen::Index hd = s.hidden;
  Matrix dh = v.leftCols(hd).transpose() * dy;
  Matrix dc = Matrix::Zero(hd, n);
  Matrix dpre(s.gate_rows(), n);
  for (Eigen::Index t = s.steps - 1; t >= 0; --t) {
    const auto ti = static_cast<std::size_t>(t);
    const Matrix& act = tape.gates[ti];
    const auto i = act.topRows(hd).array();
    const auto f = act.middleRows(hd, hd).array();
    const auto g = act.middleRows(2 * hd, hd).array();
    const auto o = act.bottomRows(hd).array();
    const Eigen::ArrayXXd tanh_c = tanh_of(tape.cell[ti]).array();
    const Eigen::ArrayXXd c_prev =
        t > 0 ? Eigen::ArrayXXd(tape.cell[ti - 1].array()) : Eigen::ArrayXXd::Zero(hd, n);

    dc.array() += dh.array() * o * (1.0 - tanh_c.square());
    dpre.topRows(hd) = (dc.array() * g * i * (1.0 - i)).matrix();
    dpre.middleRows(hd, hd) = (dc.array() * c_prev * f * (1.0 - f)).matrix();
    dpre.middleRows(2 * hd, hd) = (dc.array() * i * (1.0 - g.square())).matrix();
    dpre.bottomRows(hd) = (dh.array() * tanh_c * o * (1.0 - o)).matrix();

    dw.noalias() += dpre * tape.z[ti].transpose();
    if (t > 0) {
      dh.noalias() = w.middleCols(s.in, hd).transpose() * dpre;
      dc = (dc.array() * f).matrix();
    }
  }
  return result;
}

void sgd_update(std::span<double> values, std::span<const double> grad, double lr) {
  if (values.size() != grad.size()) {
    throw ShapeMismatch("gradient has " + std::to_string(grad.size()) + " values, parameters " +
                        std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < values.size(); ++i) values[i] -= lr * grad[i];
}

SequenceModelParams sgd_step(const SequenceModelParams& params, std::span<const double> grad,
                             double lr) {
  SequenceModelParams next = params;
  sgd_update(next.values, grad, lr);
  return next;
}

InnerLoopResult sgd_k_steps(std::vector<double> start, const StochasticObjective& objective,
                            std::size_t k, double lr, Rng& rng) {
  if (k == 0) throw ConfigError("local step count k must be >= 1");
  InnerLoopResult result{std::move(start), {}, 0.0};
  result.grad_sum.assign(result.params.size(), 0.0);
  for (std::size_t step = 0; step < k; ++step) {
    const LossGrad lg = objective(result.params, rng);
    if (step == 0) result.first_loss = lg.loss;
    sgd_update(result.params, lg.grad, lr);
    for (std::size_t i = 0; i < lg.grad.size(); ++i) result.grad_sum[i] += lg.grad[i];
  }
  return result;
}

StochasticObjective make_objective(const ArchSpec& arch, BatchSampler sampler) {
  return [arch, sampler = std::move(sampler)](std::span<const double> values, Rng& rng) {
    const SequenceModelParams at{arch, std::vector<double>(values.begin(), values.end())};
    const std::vector<TrainingExample> batch = sampler(rng);
    return loss_and_grad(at, batch);
  };
}

SequenceModelParams sgd_k_steps(const SequenceModelParams& params, const BatchSampler& sampler,
                                std::size_t k, double lr, Rng& rng) {
  check_params(params);
  InnerLoopResult r = sgd_k_steps(params.values, make_objective(params.arch, sampler), k, lr, rng);
  return {params.arch, std::move(r.params)};
}

void require_finite(std::span<const double> values, const std::string& what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite value in " + what);
  }
}

}  // namespace metaview
