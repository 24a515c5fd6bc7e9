#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "flowgnn/diffcore/tensor.hpp"

namespace flowgnn::models {

enum class Arch { kEGraphSageM, kGat, kGtcnG };

std::string arch_name(Arch arch);
Arch arch_from_name(const std::string& name);  // ConfigError on unknown

// Widths and depths shared by the three architectures. Defaults are the
// full-scale profile; tests shrink them.
struct Hyper {
  std::size_t feature_dim = 0;   // edge / line-graph node feature width f
  std::size_t num_classes = 2;
  std::size_t hidden = 128;      // hidden width d
  std::size_t layers = 3;        // attention depth L (1..6)
  std::size_t heads = 6;         // attention heads M
  std::size_t head_dim = 16;
  std::size_t sage_layers = 2;   // aggregation depth K
  std::size_t diffusion_order = 2;
  std::size_t window = 8;        // temporal window S
  std::size_t embed_rank = 8;    // adaptive embedding rank r
  std::size_t num_nodes = 0;     // line-graph node count n (gtcn_g only)
  // The adaptive adjacency is a dense n x n matrix; refuse to build one
  // past this many nodes.
  std::size_t adaptive_budget = 4096;
  double dropout = 0.5;          // on attention coefficients, train mode

  void validate(Arch arch) const;  // ConfigError / ResourceError
};

// Named parameter tensors plus the hyperparameters that shaped them.
// The map is ordered so optimizers and checkpoints traverse params in a
// stable order.
struct ModelState {
  Arch arch = Arch::kEGraphSageM;
  Hyper hyper;
  std::map<std::string, diffcore::Tensor> params;

  diffcore::Tensor& param(const std::string& name);
  const diffcore::Tensor& param(const std::string& name) const;
};

// Seeded Glorot-uniform parameters (biases zero); each tensor gets its
// own stream derived from (seed, name), so adding a parameter never
// shifts the others.
ModelState init_model(Arch arch, const Hyper& hyper, std::uint64_t seed);

// Little-endian binary checkpoint: magic, version, architecture tag,
// hyperparameter block, then (name, shape, float64 payload) records.
void save_checkpoint(const std::string& path, const ModelState& state);
ModelState load_checkpoint(const std::string& path,
                           std::optional<Arch> expected = std::nullopt);

}  // namespace flowgnn::models
