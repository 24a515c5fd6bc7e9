#include "flowgnn/dataio/schema.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "flowgnn/errors.hpp"

namespace flowgnn::dataio {

std::string fold_label(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out = s.substr(b, e - b);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

int DatasetSchema::class_id(const std::string& raw) const {
  std::string folded = fold_label(raw);
  auto alias = aliases.find(folded);
  if (alias != aliases.end()) folded = fold_label(alias->second);
  for (std::size_t i = 0; i < classes.size(); ++i)
    if (fold_label(classes[i]) == folded) return static_cast<int>(i);
  return -1;
}

void DatasetSchema::validate() const {
  auto need = [](const std::string& v, const char* what) {
    if (v.empty())
      throw ConfigError(std::string("schema is missing ") + what);
  };
  need(name, "a name");
  need(src_ip_col, "src_ip");
  need(src_port_col, "src_port");
  need(dst_ip_col, "dst_ip");
  need(dst_port_col, "dst_port");
  need(timestamp_col, "timestamp");
  need(label_binary_col, "label_binary");
  need(label_multiclass_col, "label_multiclass");
  need(normal_class, "normal_class");
  if (features.empty()) throw ConfigError("schema declares no features");
  if (classes.empty()) throw ConfigError("schema declares no classes");
  for (const std::string& c : categorical)
    if (std::find(features.begin(), features.end(), c) == features.end())
      throw ConfigError("categorical column " + c + " is not a feature");
  if (class_id(normal_class) < 0)
    throw ConfigError("normal_class " + normal_class +
                      " is not in the class list");
}

DatasetSchema DatasetSchema::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schema file " + path);

  DatasetSchema s;
  std::string line;
  std::size_t line_no = 0;
  bool version_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    auto rest = [&ls]() {
      std::string v;
      ls >> v;
      return v;
    };
    if (key == "schema_version") {
      if (rest() != "1")
        throw ConfigError("unsupported schema_version in " + path);
      version_seen = true;
    } else if (key == "name") {
      s.name = rest();
    } else if (key == "variant") {
      std::string v;
      std::getline(ls, v);
      s.variant = fold_label(v);
    } else if (key == "src_ip") {
      s.src_ip_col = rest();
    } else if (key == "src_port") {
      s.src_port_col = rest();
    } else if (key == "dst_ip") {
      s.dst_ip_col = rest();
    } else if (key == "dst_port") {
      s.dst_port_col = rest();
    } else if (key == "timestamp") {
      s.timestamp_col = rest();
    } else if (key == "label_binary") {
      s.label_binary_col = rest();
    } else if (key == "label_multiclass") {
      s.label_multiclass_col = rest();
    } else if (key == "normal_class") {
      s.normal_class = rest();
    } else if (key == "feature") {
      std::string col = rest(), flag = rest();
      if (col.empty())
        throw ConfigError(path + ":" + std::to_string(line_no) +
                          ": feature line without a column name");
      s.features.push_back(col);
      if (flag == "categorical")
        s.categorical.insert(col);
      else if (!flag.empty())
        throw ConfigError(path + ":" + std::to_string(line_no) +
                          ": unknown feature flag " + flag);
    } else if (key == "class") {
      s.classes.push_back(rest());
    } else if (key == "alias") {
      std::string from = rest(), to = rest();
      s.aliases[fold_label(from)] = to;
    } else {
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": unknown schema key " + key);
    }
  }
  if (!version_seen)
    throw ConfigError("schema file " + path + " lacks schema_version");
  s.validate();
  return s;
}

}  // namespace flowgnn::dataio
