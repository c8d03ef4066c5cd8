#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace metaview {

using Rng = std::mt19937_64;

enum class ModelKind { lstm, linear };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

/// Shape of a sequence regressor. For the linear kind the hidden dimension is
/// unused and the model is a direct map from the flattened window.
struct ArchSpec {
  ModelKind kind = ModelKind::lstm;
  std::size_t input_dim = 3;
  std::size_t hidden_dim = 128;
  std::size_t output_dim = 3;
  std::size_t sequence_length = 100;

  /// LSTM: 4 (I + H + 1) H + (H + 1) O.  Linear: (S I + 1) O.
  std::size_t param_count() const;
  std::size_t window_size() const { return sequence_length * input_dim; }
  /// Throws ShapeMismatch when any dimension is zero.
  void validate() const;

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

/// Flat parameter vector. LSTM layout: gate block [4H x (I+H+1)] row-major,
/// gates ordered input, forget, cell, output, with the bias as the last
/// column; then the readout [O x (H+1)] row-major, bias last.
struct SequenceModelParams {
  ArchSpec arch;
  std::vector<double> values;

  friend bool operator==(const SequenceModelParams&, const SequenceModelParams&) = default;
};

/// `inputs` holds sequence_length input vectors back to back (time-major).
struct TrainingExample {
  std::vector<double> inputs;
  std::vector<double> label;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Uniform weights in [-1/sqrt(H), 1/sqrt(H)], forget-gate bias 1, other
/// biases 0. Linear models use 1/sqrt(S I) as the bound. Deterministic in seed.
SequenceModelParams init_params(const ArchSpec& arch, std::uint64_t seed);

/// Output for one window; states start at zero, readout from the last step.
std::vector<double> forward(const SequenceModelParams& params, std::span<const double> inputs);

/// Outputs for several windows, concatenated (output_dim values per window).
std::vector<double> forward_batch(const SequenceModelParams& params,
                                  std::span<const std::span<const double>> windows);

/// Mean over the batch of the per-example mean squared error, and its exact
/// gradient by backpropagation through time.
LossGrad loss_and_grad(const SequenceModelParams& params, std::span<const TrainingExample> batch);

SequenceModelParams sgd_step(const SequenceModelParams& params, std::span<const double> grad,
                             double lr);
/// values <- values - lr * grad, in place.
void sgd_update(std::span<double> values, std::span<const double> grad, double lr);

/// Loss and gradient at the given point, drawing any randomness from rng.
using StochasticObjective = std::function<LossGrad(std::span<const double>, Rng&)>;

/// Draws one training batch per call.
using BatchSampler = std::function<std::vector<TrainingExample>(Rng&)>;

struct InnerLoopResult {
  std::vector<double> params;
  /// Sum of the k gradients taken; params = start - lr * (sum) up to rounding.
  std::vector<double> grad_sum;
  double first_loss = 0.0;
};

/// k plain SGD steps on a stochastic objective.
InnerLoopResult sgd_k_steps(std::vector<double> start, const StochasticObjective& objective,
                            std::size_t k, double lr, Rng& rng);

/// k SGD steps on a sequence model, drawing a fresh batch each step.
SequenceModelParams sgd_k_steps(const SequenceModelParams& params, const BatchSampler& sampler,
                                std::size_t k, double lr, Rng& rng);

StochasticObjective make_objective(const ArchSpec& arch, BatchSampler sampler);

/// Throws NumericError if any value is NaN or infinite.
void require_finite(std::span<const double> values, const std::string& what);

}  // namespace metaview
