#include "flowgnn/trainer/assemble.hpp"

#include <string>

#include "flowgnn/errors.hpp"
#include "flowgnn/rng.hpp"

namespace flowgnn::trainer {

namespace {

void append_split(dataio::EncodedFlows& all, const dataio::EncodedFlows& part,
                  const char* name) {
  if (part.rows() == 0) return;
  if (part.feature_dim != all.feature_dim) {
    throw DataError(std::string("bundle split '") + name +
                    "' was encoded with feature width " +
                    std::to_string(part.feature_dim) + ", expected " +
                    std::to_string(all.feature_dim));
  }
  all.features.insert(all.features.end(), part.features.begin(),
                      part.features.end());
  all.labels.insert(all.labels.end(), part.labels.begin(), part.labels.end());
  all.binary_labels.insert(all.binary_labels.end(),
                           part.binary_labels.begin(),
                           part.binary_labels.end());
  all.timestamps.insert(all.timestamps.end(), part.timestamps.begin(),
                        part.timestamps.end());
  all.endpoints.insert(all.endpoints.end(), part.endpoints.begin(),
                       part.endpoints.end());
}

}  // namespace

GraphDataset assemble_dataset(const dataio::SplitBundle& bundle,
                              std::uint64_t seed) {
  dataio::EncodedFlows all;
  all.feature_dim = bundle.train.feature_dim;
  append_split(all, bundle.train, "train");
  append_split(all, bundle.val, "val");
  append_split(all, bundle.test, "test");
  if (all.rows() == 0) throw UsageError("bundle holds no flows");

  auto bipartite = flowgraph::build_bipartite(all.keys());
  bipartite = flowgraph::pad_virtual(bipartite, rng::derive(seed, "padding"));

  GraphDataset data;
  data.graph = flowgraph::to_line_graph(bipartite, all.payload());
  data.flow_graph = sampler::SampleGraph::from_bipartite(bipartite);
  data.class_names = bundle.classes;

  const std::size_t n_train = bundle.train.rows();
  const std::size_t n_val = bundle.val.rows();
  const std::size_t n_test = bundle.test.rows();
  data.train_ids.reserve(n_train);
  data.val_ids.reserve(n_val);
  data.test_ids.reserve(n_test);
  std::uint32_t id = 0;
  for (std::size_t i = 0; i < n_train; ++i) data.train_ids.push_back(id++);
  for (std::size_t i = 0; i < n_val; ++i) data.val_ids.push_back(id++);
  for (std::size_t i = 0; i < n_test; ++i) data.test_ids.push_back(id++);
  return data;
}

}  // namespace flowgnn::trainer
