#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "flowgnn/flowgraph/graph.hpp"
#include "flowgnn/models/model.hpp"
#include "flowgnn/sampler/sampler.hpp"
#include "flowgnn/trainer/metrics.hpp"

namespace flowgnn::trainer {

enum class Task { kBinary, kMulticlass };

const char* task_name(Task t);
Task task_from_name(const std::string& name);  // ConfigError on unknown

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 500;
  double lr = 0.007;
  std::uint64_t seed = 0;
  Task task = Task::kMulticlass;
  // Inverse-frequency class weights, fit on the training split only.
  bool use_class_weights = false;
  // Per-hop neighbor budgets; a single entry replicates across hops.
  std::vector<std::size_t> sample_sizes = {8, 8};
  double clip_norm = 5.0;

  void validate() const;  // ConfigError on out-of-range fields
};

// One graph plus its transductive split: every model sees the full
// structure, but loss and metrics only touch the ids they are given.
// Line-graph node ids equal flow ids, so a single id space addresses
// bipartite edges (edge models) and line-graph nodes (node models).
struct GraphDataset {
  flowgraph::LineGraph graph;
  sampler::SampleGraph flow_graph;  // bipartite view, edge ids = flow ids
  std::vector<std::uint32_t> train_ids;
  std::vector<std::uint32_t> val_ids;
  std::vector<std::uint32_t> test_ids;
  std::vector<std::string> class_names;  // multiclass display order
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_weighted_f1 = 0.0;
};

struct TrainResult {
  models::ModelState state;  // best validation snapshot
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

// Minibatch training with Adam and per-epoch validation. The returned
// state is a deep snapshot from the epoch with the highest validation
// weighted F1 (first such epoch on ties); with an empty validation split
// every epoch records F1 0 and the final weights win. Divergence (a
// non-finite loss or parameter) raises NumericError naming the epoch
// and batch. All randomness is keyed from cfg.seed, so equal seeds give
// bitwise-equal histories regardless of schedule.
TrainResult train(const models::ModelState& init, const GraphDataset& data,
                  const TrainConfig& cfg);

// Deterministic sampled-neighborhood evaluation of `ids` (dropout off).
// Predictions are row argmax, ties to the lower class index.
EvalReport evaluate(const models::ModelState& state, const GraphDataset& data,
                    const std::vector<std::uint32_t>& ids,
                    const TrainConfig& cfg);

// Argmax with ties to the lower index; exposed for the report tooling.
std::vector<int> argmax_rows(const diffcore::Tensor& logits);

// One line per epoch: "epoch <e> train_loss <v> val_weighted_f1 <v>",
// doubles with 17 significant digits.
void write_history(std::ostream& out, const std::vector<EpochRecord>& history);
std::vector<EpochRecord> read_history(std::istream& in);  // DataError on damage

}  // namespace flowgnn::trainer
