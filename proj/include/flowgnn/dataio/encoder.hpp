#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "flowgnn/dataio/flows.hpp"
#include "flowgnn/flowgraph/graph.hpp"

namespace flowgnn::dataio {

// Train-split feature statistics; applying them to val/test keeps the
// splits leak-free. Numeric columns are z-scored (std floored at 1e-8),
// with a log1p pre-transform on non-negative heavy-tailed columns
// (max > 1000 x median). Categorical columns one-hot with index 0
// reserved for values never seen during fitting.
struct FeatureEncoder {
  struct NumericStat {
    double mean = 0.0;
    double stddev = 1.0;
    bool log1p_first = false;
  };
  std::vector<NumericStat> numeric;  // schema numeric-column order
  std::vector<std::vector<std::string>> categories;  // [col][index] -> name
  std::vector<std::unordered_map<std::string, std::size_t>> category_index;
  std::size_t output_dim = 0;
};

FeatureEncoder fit_encoder(const std::vector<FlowRecord>& train,
                           const DatasetSchema& schema);

struct EncodedFlows {
  std::vector<double> features;  // row-major, rows() x feature_dim
  std::size_t feature_dim = 0;
  std::vector<int> labels;
  std::vector<int> binary_labels;
  std::vector<double> timestamps;
  std::vector<flowgraph::FlowKey> endpoints;

  std::size_t rows() const {
    return feature_dim == 0 ? labels.size() : features.size() / feature_dim;
  }
  flowgraph::FlowPayload payload() const;
  std::vector<flowgraph::FlowKey> keys() const { return endpoints; }
};

// Row order preserved; unseen categories land on the unknown index;
// missing numerics encode as the (transformed) training mean, i.e. 0.
EncodedFlows encode(const FeatureEncoder& enc,
                    const std::vector<FlowRecord>& records,
                    const DatasetSchema& schema);

// Copies the given rows (in the given order) into a new EncodedFlows.
EncodedFlows take_rows(const EncodedFlows& src,
                       const std::vector<std::size_t>& rows);

// Inverse-frequency loss weights N/(C * count_c); absent classes get 0.
std::vector<double> class_weights(const std::vector<int>& labels,
                                  std::size_t num_classes);

}  // namespace flowgnn::dataio
