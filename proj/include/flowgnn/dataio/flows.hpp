#pragma once

#include <string>
#include <vector>

#include "flowgnn/dataio/schema.hpp"

namespace flowgnn::dataio {

struct FlowRecord {
  std::string src_ip;
  int src_port = 0;
  std::string dst_ip;
  int dst_port = 0;
  double timestamp = 0.0;
  // Parallel to the schema's numeric (respectively categorical) columns,
  // in feature order. Missing numerics are quiet NaN.
  std::vector<double> numeric;
  std::vector<std::string> categorical;
  int label_binary = 0;  // 0 normal, 1 attack
  int label_multiclass = 0;  // index into schema.classes

  std::string src_key() const { return src_ip + ':' + std::to_string(src_port); }
  std::string dst_key() const { return dst_ip + ':' + std::to_string(dst_port); }
};

// One line of RFC-4180-style CSV: comma separated, double quotes guard
// separators and are escaped by doubling. Embedded newlines in fields are
// not supported (flow exports never contain them).
std::vector<std::string> parse_csv_line(const std::string& line);

// Loads and validates every row. Header is required and order-insensitive;
// a missing schema column is a SchemaError, a malformed cell is a
// DataError naming the 1-based data row.
std::vector<FlowRecord> load_flows(const std::string& path,
                                   const DatasetSchema& schema);

}  // namespace flowgnn::dataio
