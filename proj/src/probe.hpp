#pragma once

// Linear probe gate: sigma(w . h + b) over one layer's final-token hidden
// state, trained with Adam on mean binary cross-entropy. Learning rate is
// chosen at a reference layer first, then the layer is chosen at that rate,
// both by validation average precision.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hidden_dump.hpp"

namespace thinkstop {

struct ProbeMeta {
  double learning_rate = 0.0;
  int epochs = 0;
  std::uint64_t seed = 0;
  double validation_ap = 0.0;
};

struct ProbeModel {
  std::vector<double> w;
  double b = 0.0;
  std::uint32_t layer = 0;
  ProbeMeta meta;

  std::size_t dim() const { return w.size(); }
};

// Logistic of w . h + b, in (0, 1) up to floating-point saturation.
double score(const ProbeModel& probe, std::span<const double> h);
double score(const ProbeModel& probe, std::span<const float> h);

enum class LabelSource { Raw, Denoised };

struct ProbeTrainConfig {
  int steps_per_trace = 8;
  std::vector<double> lr_grid{1e-4, 5e-4, 1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1};
  int epochs = 20;
  int batch_size = 256;
  std::uint64_t seed = 0;
  LabelSource label_source = LabelSource::Raw;
  bool exclude_step0 = false;
  std::optional<std::uint32_t> reference_layer;  // default: layers / 2
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

// Per-trace input for sampling: the trace's step count n and its t*.
struct TraceLabelInfo {
  std::string trace_id;
  std::size_t steps = 0;  // n; valid step indices are 0..n
  std::int64_t t_star = -1;
};

using DumpProvider = std::function<std::shared_ptr<const HiddenStateDump>(const std::string& trace_id)>;

struct LabeledStep {
  std::shared_ptr<const HiddenStateDump> dump;
  std::uint32_t step = 0;
  int label = 0;  // 1: reasoning could stop here (step > t*)
};

struct ProbeDataset {
  std::vector<LabeledStep> items;
  std::uint32_t layers = 0;
  std::uint32_t dim = 0;

  std::size_t positives() const;
};

// Samples up to S steps per trace without replacement (all steps when
// n + 1 <= S), labels them i > t*, then, when `balance` is set, oversamples
// the minority class with replacement until the classes are equal. Throws
// DataError naming (trace, step) when a sampled step has no hidden state.
ProbeDataset build_training_set(std::span<const TraceLabelInfo> traces, const DumpProvider& dumps,
                                const ProbeTrainConfig& cfg, bool balance);

// Area under the precision-recall step curve by descending-score sweep; tied
// scores form one block. Throws ContractError without positives.
double average_precision(std::span<const double> scores, std::span<const int> labels);

// Mean binary cross-entropy of sigma(X w + b) against y, X row-major n x d.
double bce_loss(std::span<const double> w, double b, std::span<const double> x, std::span<const int> y);

// Gradient of bce_loss; grad_w has the size of w.
void bce_gradient(std::span<const double> w, double b, std::span<const double> x, std::span<const int> y,
                  std::span<double> grad_w, double& grad_b);

struct GridCell {
  double learning_rate = 0.0;
  std::uint32_t layer = 0;
  bool diverged = false;
  double validation_ap = 0.0;
};

struct TrainResult {
  ProbeModel probe;
  std::vector<GridCell> lr_stage;     // reference layer, one cell per rate
  std::vector<GridCell> layer_stage;  // best rate, one cell per layer
};

// Feature matrix (row-major) of one layer for every item.
std::vector<double> layer_features(const ProbeDataset& data, std::uint32_t layer);

// Trains one probe with Adam from zero weights. Returns nullopt when the loss
// becomes non-finite.
std::optional<ProbeModel> train_cell(const ProbeDataset& train, std::uint32_t layer, double learning_rate,
                                     const ProbeTrainConfig& cfg);

// Full two-stage selection. Throws DataError when training data holds a
// single class or validation data has no positives.
TrainResult train(const ProbeDataset& train, const ProbeDataset& validation, const ProbeTrainConfig& cfg);

// Scores every item of `data` at the probe's layer.
std::vector<double> score_dataset(const ProbeModel& probe, const ProbeDataset& data);
std::vector<int> dataset_labels(const ProbeDataset& data);

}  // namespace thinkstop
