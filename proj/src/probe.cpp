#include "probe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "errors.hpp"
#include "rng.hpp"

namespace thinkstop {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

template <class T>
double affine(std::span<const double> w, double b, std::span<const T> h) {
  double z = b;
  for (std::size_t i = 0; i < w.size(); ++i) z += w[i] * static_cast<double>(h[i]);
  return z;
}

}  // namespace

double score(const ProbeModel& probe, std::span<const double> h) {
  if (h.size() != probe.w.size()) {
    throw ContractError("hidden state has dimension " + std::to_string(h.size()) + ", probe expects " +
                        std::to_string(probe.w.size()));
  }
  return sigmoid(affine<double>(probe.w, probe.b, h));
}

double score(const ProbeModel& probe, std::span<const float> h) {
  if (h.size() != probe.w.size()) {
    throw ContractError("hidden state has dimension " + std::to_string(h.size()) + ", probe expects " +
                        std::to_string(probe.w.size()));
  }
  return sigmoid(affine<float>(probe.w, probe.b, h));
}

void ProbeTrainConfig::validate() const {
  if (steps_per_trace < 1) throw ConfigError("steps_per_trace must be >= 1");
  if (lr_grid.empty()) throw ConfigError("lr_grid is empty");
  for (double lr : lr_grid) {
    if (!(lr > 0.0)) throw ConfigError("learning rates must be positive");
  }
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

std::size_t ProbeDataset::positives() const {
  return static_cast<std::size_t>(
      std::count_if(items.begin(), items.end(), [](const LabeledStep& s) { return s.label == 1; }));
}

ProbeDataset build_training_set(std::span<const TraceLabelInfo> traces, const DumpProvider& dumps,
                                const ProbeTrainConfig& cfg, bool balance) {
  cfg.validate();
  ProbeDataset out;
  for (const auto& t : traces) {
    std::vector<std::uint32_t> steps;
    for (std::size_t i = cfg.exclude_step0 ? 1 : 0; i <= t.steps; ++i) steps.push_back(static_cast<std::uint32_t>(i));
    const auto S = static_cast<std::size_t>(cfg.steps_per_trace);
    if (steps.size() > S) {
      rng::Engine eng(rng::derive(cfg.seed, "probe-sample/" + t.trace_id));
      for (std::size_t i = 0; i < S; ++i) {
        const auto j = i + rng::below(eng, steps.size() - i);
        std::swap(steps[i], steps[j]);
      }
      steps.resize(S);
      std::sort(steps.begin(), steps.end());
    }
    if (steps.empty()) continue;

    std::shared_ptr<const HiddenStateDump> dump = dumps(t.trace_id);
    for (auto step : steps) {
      if (!dump || step >= dump->steps) {
        throw DataError("no hidden state for trace '" + t.trace_id + "' step " + std::to_string(step));
      }
    }
    if (out.layers == 0 && out.dim == 0) {
      out.layers = dump->layers;
      out.dim = dump->dim;
    } else if (dump->layers != out.layers || dump->dim != out.dim) {
      throw DataError("dump for trace '" + t.trace_id + "' has shape " + std::to_string(dump->layers) + "x" +
                      std::to_string(dump->dim) + ", expected " + std::to_string(out.layers) + "x" +
                      std::to_string(out.dim));
    }
    for (auto step : steps) {
      out.items.push_back({dump, step, static_cast<std::int64_t>(step) > t.t_star ? 1 : 0});
    }
  }

  if (balance) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < out.items.size(); ++i) (out.items[i].label ? pos : neg).push_back(i);
    const auto& minority = pos.size() < neg.size() ? pos : neg;
    const std::size_t target = std::max(pos.size(), neg.size());
    if (!minority.empty()) {
      rng::Engine eng(rng::derive(cfg.seed, "probe-oversample"));
      const std::vector<std::size_t> pool = minority;
      for (std::size_t have = pool.size(); have < target; ++have) {
        out.items.push_back(out.items[pool[rng::below(eng, pool.size())]]);
      }
    }
  }
  return out;
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ContractError("scores and labels differ in length");
  const auto total_pos = std::count(labels.begin(), labels.end(), 1);
  if (total_pos == 0) throw ContractError("average precision needs at least one positive");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double ap = 0.0;
  std::size_t seen = 0, tp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i, block_tp = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      block_tp += labels[order[j]] == 1;
      ++j;
    }
    seen += j - i;
    tp += block_tp;
    ap += static_cast<double>(block_tp) / static_cast<double>(total_pos) *
          (static_cast<double>(tp) / static_cast<double>(seen));
    i = j;
  }
  return ap;
}

double bce_loss(std::span<const double> w, double b, std::span<const double> x, std::span<const int> y) {
  const std::size_t d = w.size();
  if (y.empty() || x.size() != y.size() * d) throw ContractError("bce_loss: shape mismatch");
  double loss = 0.0;
  for (std::size_t r = 0; r < y.size(); ++r) {
    const double z = affine<double>(w, b, x.subspan(r * d, d));
    loss += softplus(z) - static_cast<double>(y[r]) * z;
  }
  return loss / static_cast<double>(y.size());
}

void bce_gradient(std::span<const double> w, double b, std::span<const double> x, std::span<const int> y,
                  std::span<double> grad_w, double& grad_b) {
  const std::size_t d = w.size();
  if (y.empty() || x.size() != y.size() * d || grad_w.size() != d) {
    throw ContractError("bce_gradient: shape mismatch");
  }
  std::fill(grad_w.begin(), grad_w.end(), 0.0);
  grad_b = 0.0;
  for (std::size_t r = 0; r < y.size(); ++r) {
    const auto row = x.subspan(r * d, d);
    const double err = sigmoid(affine<double>(w, b, row)) - static_cast<double>(y[r]);
    for (std::size_t i = 0; i < d; ++i) grad_w[i] += err * row[i];
    grad_b += err;
  }
  const double inv = 1.0 / static_cast<double>(y.size());
  for (double& g : grad_w) g *= inv;
  grad_b *= inv;
}

std::vector<double> layer_features(const ProbeDataset& data, std::uint32_t layer) {
  if (layer >= data.layers) throw ContractError("layer " + std::to_string(layer) + " out of range");
  std::vector<double> x;
  x.reserve(data.items.size() * data.dim);
  for (const auto& item : data.items) {
    for (float v : item.dump->at(item.step, layer)) x.push_back(static_cast<double>(v));
  }
  return x;
}

std::vector<int> dataset_labels(const ProbeDataset& data) {
  std::vector<int> y;
  y.reserve(data.items.size());
  for (const auto& item : data.items) y.push_back(item.label);
  return y;
}

std::optional<ProbeModel> train_cell(const ProbeDataset& train, std::uint32_t layer, double learning_rate,
                                     const ProbeTrainConfig& cfg) {
  const std::size_t d = train.dim;
  const std::size_t m = train.items.size();
  if (m == 0) throw DataError("empty training set");
  const std::vector<double> x = layer_features(train, layer);
  const std::vector<int> y = dataset_labels(train);

  ProbeModel p;
  p.w.assign(d, 0.0);
  p.layer = layer;
  std::vector<double> m_w(d, 0.0), v_w(d, 0.0), g_w(d, 0.0);
  double m_b = 0.0, v_b = 0.0;
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  std::int64_t t = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng::Engine eng(rng::derive(cfg.seed, "probe-epoch", static_cast<std::uint64_t>(epoch)));
    rng::shuffle(order.begin(), order.end(), eng);
    for (std::size_t start = 0; start < m; start += batch) {
      const std::size_t end = std::min(m, start + batch);
      std::fill(g_w.begin(), g_w.end(), 0.0);
      double g_b = 0.0, loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t r = order[k];
        const auto row = std::span<const double>(x).subspan(r * d, d);
        const double z = affine<double>(p.w, p.b, row);
        loss += softplus(z) - static_cast<double>(y[r]) * z;
        const double err = sigmoid(z) - static_cast<double>(y[r]);
        for (std::size_t i = 0; i < d; ++i) g_w[i] += err * row[i];
        g_b += err;
      }
      if (!std::isfinite(loss)) return std::nullopt;
      const double inv = 1.0 / static_cast<double>(end - start);

      ++t;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
      for (std::size_t i = 0; i < d; ++i) {
        const double g = g_w[i] * inv;
        m_w[i] = cfg.beta1 * m_w[i] + (1.0 - cfg.beta1) * g;
        v_w[i] = cfg.beta2 * v_w[i] + (1.0 - cfg.beta2) * g * g;
        p.w[i] -= learning_rate * (m_w[i] / c1) / (std::sqrt(v_w[i] / c2) + cfg.epsilon);
      }
      const double gb = g_b * inv;
      m_b = cfg.beta1 * m_b + (1.0 - cfg.beta1) * gb;
      v_b = cfg.beta2 * v_b + (1.0 - cfg.beta2) * gb * gb;
      p.b -= learning_rate * (m_b / c1) / (std::sqrt(v_b / c2) + cfg.epsilon);
    }
  }
  for (double v : p.w) {
    if (!std::isfinite(v)) return std::nullopt;
  }
  if (!std::isfinite(p.b)) return std::nullopt;
  p.meta = {learning_rate, cfg.epochs, cfg.seed, 0.0};
  return p;
}

std::vector<double> score_dataset(const ProbeModel& probe, const ProbeDataset& data) {
  std::vector<double> s;
  s.reserve(data.items.size());
  for (const auto& item : data.items) s.push_back(score(probe, item.dump->at(item.step, probe.layer)));
  return s;
}

TrainResult train(const ProbeDataset& train_set, const ProbeDataset& validation, const ProbeTrainConfig& cfg) {
  cfg.validate();
  const std::size_t pos = train_set.positives();
  if (pos == 0 || pos == train_set.items.size()) {
    throw DataError("training data holds a single class (" + std::to_string(pos) + " positives of " +
                    std::to_string(train_set.items.size()) + ")");
  }
  if (validation.positives() == 0) throw DataError("validation data has no positive examples");
  if (validation.layers != train_set.layers || validation.dim != train_set.dim) {
    throw DataError("training and validation dumps differ in shape");
  }
  const std::uint32_t ref = cfg.reference_layer.value_or(train_set.layers / 2);
  if (ref >= train_set.layers) throw ConfigError("reference layer " + std::to_string(ref) + " out of range");

  const std::vector<int> val_labels = dataset_labels(validation);
  auto evaluate = [&](const ProbeModel& p) { return average_precision(score_dataset(p, validation), val_labels); };

  TrainResult result;
  std::optional<std::size_t> best_lr;
  for (double lr : cfg.lr_grid) {
    GridCell cell{lr, ref, false, 0.0};
    if (auto p = train_cell(train_set, ref, lr, cfg)) {
      cell.validation_ap = evaluate(*p);
    } else {
      cell.diverged = true;
    }
    result.lr_stage.push_back(cell);
    if (!cell.diverged && (!best_lr || cell.validation_ap > result.lr_stage[*best_lr].validation_ap)) {
      best_lr = result.lr_stage.size() - 1;
    }
  }
  if (!best_lr) throw DataError("training diverged at every learning rate");
  const double lr = result.lr_stage[*best_lr].learning_rate;

  std::optional<ProbeModel> best;
  for (std::uint32_t layer = 0; layer < train_set.layers; ++layer) {
    GridCell cell{lr, layer, false, 0.0};
    auto p = train_cell(train_set, layer, lr, cfg);
    if (p) {
      cell.validation_ap = evaluate(*p);
      p->meta.validation_ap = cell.validation_ap;
      if (!best || cell.validation_ap > best->meta.validation_ap) best = std::move(p);
    } else {
      cell.diverged = true;
    }
    result.layer_stage.push_back(cell);
  }
  if (!best) throw DataError("training diverged at every layer");
  result.probe = std::move(*best);
  return result;
}

}  // namespace thinkstop
