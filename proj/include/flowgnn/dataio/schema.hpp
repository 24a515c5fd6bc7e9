#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace flowgnn::dataio {

// Column layout of one dataset family, loaded from a versioned key-value
// text file shipped in schemas/. Feature order in the file is the feature
// order everywhere downstream.
struct DatasetSchema {
  std::string name;
  std::string variant;  // which published CSV flavor this schema was cut for
  std::string src_ip_col, src_port_col, dst_ip_col, dst_port_col;
  std::string timestamp_col;
  std::string label_binary_col, label_multiclass_col;
  std::string normal_class;
  std::vector<std::string> features;       // ordered
  std::set<std::string> categorical;       // subset of features
  std::vector<std::string> classes;        // canonical names, normal included
  std::map<std::string, std::string> aliases;  // folded alias -> canonical

  std::size_t numeric_count() const {
    return features.size() - categorical.size();
  }
  bool is_categorical(const std::string& f) const {
    return categorical.count(f) != 0;
  }
  // Index into `classes` for a raw label cell (trimmed, case-folded,
  // alias-resolved); -1 when unknown.
  int class_id(const std::string& raw) const;

  void validate() const;  // ConfigError on structural holes
  static DatasetSchema load(const std::string& path);
};

// Lowercase + trim; the normalization applied to class cells and aliases.
std::string fold_label(const std::string& s);

}  // namespace flowgnn::dataio
