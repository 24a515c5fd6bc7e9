#include "flowgnn/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "flowgnn/dataio/encoder.hpp"
#include "flowgnn/diffcore/ops.hpp"
#include "flowgnn/errors.hpp"
#include "flowgnn/models/forward.hpp"
#include "flowgnn/rng.hpp"
#include "flowgnn/trainer/optim.hpp"

namespace flowgnn::trainer {

using diffcore::Tensor;

const char* task_name(Task t) {
  return t == Task::kBinary ? "binary" : "multi";
}

Task task_from_name(const std::string& name) {
  if (name == "binary") return Task::kBinary;
  if (name == "multi" || name == "multiclass") return Task::kMulticlass;
  throw ConfigError("unknown task '" + name + "' (expected binary or multi)");
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw ConfigError("learning rate must be finite and non-negative");
  }
  if (sample_sizes.empty()) {
    throw ConfigError("at least one neighbor sample size is required");
  }
  for (std::size_t s : sample_sizes) {
    if (s == 0) throw ConfigError("neighbor sample sizes must be positive");
  }
  if (!std::isfinite(clip_norm)) throw ConfigError("clip norm must be finite");
}

namespace {

const std::vector<int>& labels_for(const GraphDataset& data, Task task) {
  return task == Task::kBinary ? data.graph.binary_labels : data.graph.labels;
}

void check_ids(const std::vector<std::uint32_t>& ids, std::size_t n,
               const char* split) {
  for (std::uint32_t id : ids) {
    if (id >= n) {
      throw UsageError(std::string(split) + " split references node " +
                       std::to_string(id) + " of a " + std::to_string(n) +
                       "-node graph");
    }
  }
}

// Per-run constants: the resolved sampling plan plus the graph views and
// feature tensors each architecture's forward pass reads.
struct ForwardContext {
  const GraphDataset* data = nullptr;
  const models::ModelState* state = nullptr;
  const std::vector<int>* labels = nullptr;
  sampler::SampleConfig sample_cfg;
  Tensor features;                    // [n x f], grad-free
  sampler::SampleGraph line_graph;    // node-model adjacency
  models::LineGraphContext line_ctx;  // fused-model constants
};

ForwardContext make_context(const models::ModelState& state,
                            const GraphDataset& data, const TrainConfig& cfg) {
  state.hyper.validate(state.arch);
  const std::size_t n = data.graph.node_count();
  if (n == 0) throw UsageError("dataset holds no flows");
  if (data.graph.flow_index.size() != n) {
    throw UsageError("line graph is missing its flow index");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (data.graph.flow_index[i] != i) {
      throw UsageError("line-graph nodes are not in flow order; id spaces "
                       "for edges and flows would disagree");
    }
  }
  if (data.graph.feature_dim != state.hyper.feature_dim) {
    throw ConfigError("model expects feature width " +
                      std::to_string(state.hyper.feature_dim) +
                      ", dataset provides " +
                      std::to_string(data.graph.feature_dim));
  }
  const std::vector<int>& labels = labels_for(data, cfg.task);
  if (labels.size() != n) {
    throw UsageError(std::string("dataset lacks ") +
                     (cfg.task == Task::kBinary ? "binary" : "attack-class") +
                     " labels for every flow");
  }
  if (cfg.task == Task::kBinary && state.hyper.num_classes != 2) {
    throw ConfigError("binary task needs a two-class head, model has " +
                      std::to_string(state.hyper.num_classes));
  }

  ForwardContext fc;
  fc.data = &data;
  fc.state = &state;
  fc.labels = &labels;
  const std::size_t hops = state.arch == models::Arch::kEGraphSageM
                               ? state.hyper.sage_layers
                               : state.hyper.layers;
  fc.sample_cfg.hops = hops;
  fc.sample_cfg.sizes = cfg.sample_sizes;
  if (fc.sample_cfg.sizes.size() == 1) {
    fc.sample_cfg.sizes.assign(hops, cfg.sample_sizes[0]);
  }
  if (fc.sample_cfg.sizes.size() != hops) {
    throw ConfigError("got " + std::to_string(cfg.sample_sizes.size()) +
                      " sample sizes for " + std::to_string(hops) + " hops");
  }
  fc.sample_cfg.seed = rng::derive(cfg.seed, "sample");
  fc.sample_cfg.validate();

  if (state.arch == models::Arch::kEGraphSageM) {
    if (data.flow_graph.edge_endpoints.size() != n) {
      throw UsageError("bipartite view has " +
                       std::to_string(data.flow_graph.edge_endpoints.size()) +
                       " edges for " + std::to_string(n) + " flows");
    }
  }
  if (data.graph.features.size() != n * data.graph.feature_dim) {
    throw UsageError("feature matrix size does not match flow count");
  }
  fc.features = Tensor::from_data({n, data.graph.feature_dim},
                                  data.graph.features);
  if (state.arch != models::Arch::kEGraphSageM) {
    fc.line_graph = sampler::SampleGraph::from_line_graph(data.graph);
  }
  if (state.arch == models::Arch::kGtcnG) {
    if (state.hyper.num_nodes != n) {
      throw ConfigError("fused model was sized for " +
                        std::to_string(state.hyper.num_nodes) +
                        " flows, dataset has " + std::to_string(n));
    }
    fc.line_ctx = models::make_line_context(data.graph);
  }
  return fc;
}

Tensor forward(const ForwardContext& fc,
               const std::vector<std::uint32_t>& batch, bool train,
               std::uint64_t epoch, std::uint64_t batch_index,
               std::uint64_t dropout_key) {
  switch (fc.state->arch) {
    case models::Arch::kEGraphSageM: {
      auto block = sampler::khop_sample(fc.data->flow_graph, batch,
                                        fc.sample_cfg, epoch, batch_index);
      return models::egraphsage_forward(block, batch, fc.data->flow_graph,
                                        fc.features, *fc.state);
    }
    case models::Arch::kGat: {
      auto block = sampler::khop_node_sample(fc.line_graph, batch,
                                             fc.sample_cfg, epoch,
                                             batch_index);
      return models::gat_forward(block, batch, fc.features, *fc.state, train,
                                 dropout_key);
    }
    case models::Arch::kGtcnG: {
      auto block = sampler::khop_node_sample(fc.line_graph, batch,
                                             fc.sample_cfg, epoch,
                                             batch_index);
      return models::gtcn_forward(fc.line_ctx, batch, block, *fc.state, train,
                                  dropout_key);
    }
  }
  throw UsageError("unknown architecture");
}

models::ModelState clone_state(const models::ModelState& s) {
  models::ModelState out;
  out.arch = s.arch;
  out.hyper = s.hyper;
  for (const auto& [name, tensor] : s.params) {
    out.params.emplace(name, tensor.detached_copy());
  }
  return out;
}

std::vector<int> batch_labels(const std::vector<int>& labels,
                              const std::vector<std::uint32_t>& batch) {
  std::vector<int> out;
  out.reserve(batch.size());
  for (std::uint32_t id : batch) out.push_back(labels[id]);
  return out;
}

EvalReport evaluate_ctx(const ForwardContext& fc,
                        const std::vector<std::uint32_t>& ids,
                        std::size_t batch_size, std::size_t num_classes) {
  diffcore::NoGradGuard no_grad;
  std::vector<int> pred;
  pred.reserve(ids.size());
  std::uint64_t chunk = 0;
  for (std::size_t at = 0; at < ids.size(); at += batch_size, ++chunk) {
    const std::size_t end = std::min(ids.size(), at + batch_size);
    std::vector<std::uint32_t> batch(ids.begin() + static_cast<std::ptrdiff_t>(at),
                                     ids.begin() + static_cast<std::ptrdiff_t>(end));
    Tensor logits = forward(fc, batch, /*train=*/false, /*epoch=*/0, chunk,
                            /*dropout_key=*/0);
    for (int p : argmax_rows(logits)) pred.push_back(p);
  }
  return make_report(batch_labels(*fc.labels, ids), pred, num_classes);
}

double params_norm(const models::ModelState& s) {
  double sq = 0.0;
  for (const auto& [name, tensor] : s.params) {
    for (double v : tensor.data()) sq += v * v;
  }
  return std::sqrt(sq);
}

}  // namespace

TrainResult train(const models::ModelState& init, const GraphDataset& data,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (data.train_ids.empty()) throw UsageError("training split is empty");
  const std::size_t n = data.graph.node_count();
  check_ids(data.train_ids, n, "train");
  check_ids(data.val_ids, n, "validation");
  check_ids(data.test_ids, n, "test");

  models::ModelState work = clone_state(init);
  ForwardContext fc = make_context(work, data, cfg);
  const std::size_t num_classes = work.hyper.num_classes;

  std::vector<Tensor> params;
  params.reserve(work.params.size());
  for (auto& [name, tensor] : work.params) params.push_back(tensor);
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  adam_cfg.clip_norm = cfg.clip_norm;
  Adam opt(params, adam_cfg);

  Tensor weights;
  if (cfg.use_class_weights) {
    // Weights come from the training split alone; giving val/test label
    // frequencies any influence would leak the held-out distribution.
    weights = Tensor::from_data(
        {num_classes},
        dataio::class_weights(batch_labels(*fc.labels, data.train_ids),
                              num_classes));
  }

  const std::uint64_t shuffle_seed = rng::derive(cfg.seed, "train_shuffle");
  const std::uint64_t dropout_seed = rng::derive(cfg.seed, "train_dropout");

  TrainResult result;
  result.history.reserve(cfg.epochs);
  double best_f1 = -1.0;

  std::vector<std::uint32_t> order = data.train_ids;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Fisher-Yates with our own generator: std::shuffle's draw pattern
    // is implementation-defined, this one reproduces everywhere.
    rng::Pcg shuffle_gen(rng::combine(shuffle_seed, epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = shuffle_gen.next_below(i);
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0.0;
    std::uint64_t batch_index = 0;
    for (std::size_t at = 0; at < order.size();
         at += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), at + cfg.batch_size);
      std::vector<std::uint32_t> batch(
          order.begin() + static_cast<std::ptrdiff_t>(at),
          order.begin() + static_cast<std::ptrdiff_t>(end));
      const std::uint64_t dropout_key =
          rng::combine(rng::combine(dropout_seed, epoch), batch_index);
      opt.zero_grad();
      double loss_value = 0.0;
      try {
        Tensor logits = forward(fc, batch, /*train=*/true, epoch, batch_index,
                                dropout_key);
        Tensor loss =
            diffcore::cross_entropy(logits, batch_labels(*fc.labels, batch),
                                    weights);
        loss_value = loss.value();
        if (!std::isfinite(loss_value)) {
          throw NumericError("loss is non-finite");
        }
        loss.backward();
        opt.step();
      } catch (const NumericError& err) {
        char norm[32];
        std::snprintf(norm, sizeof(norm), "%.3g", params_norm(work));
        throw NumericError(
            "training diverged at epoch " + std::to_string(epoch) +
            ", batch " + std::to_string(batch_index) + " (parameter norm " +
            norm + "): " + err.what());
      }
      loss_sum += loss_value * static_cast<double>(batch.size());
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(order.size());
    if (data.val_ids.empty()) {
      // No validation signal: record zero and let the final weights win.
      record.val_weighted_f1 = 0.0;
      result.state = clone_state(work);
      result.best_epoch = epoch;
    } else {
      try {
        record.val_weighted_f1 =
            evaluate_ctx(fc, data.val_ids, cfg.batch_size, num_classes)
                .weighted_f1;
      } catch (const NumericError& err) {
        char norm[32];
        std::snprintf(norm, sizeof(norm), "%.3g", params_norm(work));
        throw NumericError("training diverged at epoch " +
                           std::to_string(epoch) +
                           ", validation pass (parameter norm " + norm +
                           "): " + err.what());
      }
      if (record.val_weighted_f1 > best_f1) {
        best_f1 = record.val_weighted_f1;
        result.state = clone_state(work);
        result.best_epoch = epoch;
      }
    }
    result.history.push_back(record);
  }
  return result;
}

EvalReport evaluate(const models::ModelState& state, const GraphDataset& data,
                    const std::vector<std::uint32_t>& ids,
                    const TrainConfig& cfg) {
  cfg.validate();
  check_ids(ids, data.graph.node_count(), "evaluation");
  ForwardContext fc = make_context(state, data, cfg);
  return evaluate_ctx(fc, ids, cfg.batch_size, state.hyper.num_classes);
}

std::vector<int> argmax_rows(const diffcore::Tensor& logits) {
  if (!logits.defined() || logits.rank() != 2) {
    throw UsageError("argmax expects a rank-2 score matrix");
  }
  const std::size_t rows = logits.dim(0);
  const std::size_t cols = logits.dim(1);
  std::vector<int> out(rows, 0);
  for (std::size_t i = 0; i < rows; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < cols; ++j) {
      // Strict comparison keeps the lower class index on ties.
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

void write_history(std::ostream& out,
                   const std::vector<EpochRecord>& history) {
  char buf[160];
  for (const EpochRecord& r : history) {
    std::snprintf(buf, sizeof(buf),
                  "epoch %zu train_loss %.17g val_weighted_f1 %.17g\n",
                  r.epoch, r.train_loss, r.val_weighted_f1);
    out << buf;
  }
}

std::vector<EpochRecord> read_history(std::istream& in) {
  std::vector<EpochRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string k_epoch, k_loss, k_f1;
    EpochRecord r;
    if (!(fields >> k_epoch >> r.epoch >> k_loss >> r.train_loss >> k_f1 >>
          r.val_weighted_f1) ||
        k_epoch != "epoch" || k_loss != "train_loss" ||
        k_f1 != "val_weighted_f1") {
      throw DataError("malformed history line " + std::to_string(line_no));
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace flowgnn::trainer
