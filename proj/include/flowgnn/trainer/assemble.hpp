#pragma once

#include <cstdint>

#include "flowgnn/dataio/bundle.hpp"
#include "flowgnn/trainer/trainer.hpp"

namespace flowgnn::trainer {

// Rebuilds the transductive graph dataset from a persisted split bundle.
// Rows concatenate train|val|test (in that order), so split membership
// becomes three contiguous flow-id ranges. The bipartite endpoint graph
// is padded with seed-derived virtual nodes before line-graph
// conversion, matching the construction both samplers train on.
GraphDataset assemble_dataset(const dataio::SplitBundle& bundle,
                              std::uint64_t seed);

}  // namespace flowgnn::trainer
