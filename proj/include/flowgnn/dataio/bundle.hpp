#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowgnn/dataio/encoder.hpp"

namespace flowgnn::dataio {

// Encoded, already-split dataset persisted as a directory:
//   meta.txt            key-value summary (name, dims, classes, counts)
//   train.fgt val.fgt test.fgt
// Each .fgt is little-endian: "FGTS" magic, u32 version, u64 rows, u64
// cols, rows*cols f64 features, rows i32 labels, rows i32 binary labels,
// rows f64 timestamps, then per row two length-prefixed endpoint keys.
struct SplitBundle {
  std::string dataset;
  std::string variant;
  std::vector<std::string> classes;
  bool stratified = true;
  std::uint64_t seed = 0;
  EncodedFlows train, val, test;
};

void save_bundle(const std::string& dir, const SplitBundle& bundle);
SplitBundle load_bundle(const std::string& dir);

}  // namespace flowgnn::dataio
