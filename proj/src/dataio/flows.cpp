#include "flowgnn/dataio/flows.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <unordered_map>

#include "flowgnn/errors.hpp"

namespace flowgnn::dataio {

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw DataError("unterminated quote in CSV line");
  fields.push_back(std::move(cur));
  return fields;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool is_missing(const std::string& v) { return v.empty() || v == "-"; }

// Flow exports carry ports as decimal, occasionally hex (0x...); a
// missing port reads as 0 so the endpoint key stays well-formed.
int parse_port(const std::string& raw, std::size_t row) {
  std::string v = trim(raw);
  if (is_missing(v)) return 0;
  int out = 0;
  const char* first = v.data();
  const char* last = v.data() + v.size();
  std::from_chars_result r{};
  if (v.size() > 2 && v[0] == '0' && (v[1] == 'x' || v[1] == 'X'))
    r = std::from_chars(first + 2, last, out, 16);
  else
    r = std::from_chars(first, last, out, 10);
  if (r.ec != std::errc() || r.ptr != last)
    throw DataError("row " + std::to_string(row) + ": unparseable port '" +
                    raw + "'");
  return out;
}

double parse_double(const std::string& raw, std::size_t row,
                    const std::string& col, bool allow_missing) {
  std::string v = trim(raw);
  if (is_missing(v)) {
    if (allow_missing) return std::numeric_limits<double>::quiet_NaN();
    throw DataError("row " + std::to_string(row) + ": missing value in " +
                    col);
  }
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || !std::isfinite(out))
    throw DataError("row " + std::to_string(row) + ": unparseable number '" +
                    raw + "' in column " + col);
  return out;
}

}  // namespace

std::vector<FlowRecord> load_flows(const std::string& path,
                                   const DatasetSchema& schema) {
  schema.validate();
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);

  std::string header_line;
  if (!std::getline(in, header_line))
    throw SchemaError(path + " is empty; a header row is required");
  if (!header_line.empty() && header_line.back() == '\r')
    header_line.pop_back();
  // Strip a UTF-8 BOM if an exporter left one.
  if (header_line.rfind("\xEF\xBB\xBF", 0) == 0) header_line.erase(0, 3);

  std::unordered_map<std::string, std::size_t> col;
  {
    const std::vector<std::string> names = parse_csv_line(header_line);
    for (std::size_t i = 0; i < names.size(); ++i) col[trim(names[i])] = i;
  }
  auto col_of = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end())
      throw SchemaError(path + ": header is missing column " + name);
    return it->second;
  };

  const std::size_t c_sip = col_of(schema.src_ip_col);
  const std::size_t c_spt = col_of(schema.src_port_col);
  const std::size_t c_dip = col_of(schema.dst_ip_col);
  const std::size_t c_dpt = col_of(schema.dst_port_col);
  const std::size_t c_ts = col_of(schema.timestamp_col);
  const std::size_t c_lb = col_of(schema.label_binary_col);
  const std::size_t c_lm = col_of(schema.label_multiclass_col);
  struct FeatCol {
    std::size_t idx;
    bool categorical;
    const std::string* name;
  };
  std::vector<FeatCol> feats;
  for (const std::string& f : schema.features)
    feats.push_back({col_of(f), schema.is_categorical(f), &f});

  std::vector<FlowRecord> out;
  std::string line;
  std::size_t row = 0;
  const int normal_id = schema.class_id(schema.normal_class);
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = parse_csv_line(line);
    if (cells.size() != col.size())
      throw DataError("row " + std::to_string(row) + ": expected " +
                      std::to_string(col.size()) + " fields, got " +
                      std::to_string(cells.size()));

    FlowRecord r;
    r.src_ip = trim(cells[c_sip]);
    r.dst_ip = trim(cells[c_dip]);
    if (r.src_ip.empty() || r.dst_ip.empty())
      throw DataError("row " + std::to_string(row) + ": empty endpoint");
    r.src_port = parse_port(cells[c_spt], row);
    r.dst_port = parse_port(cells[c_dpt], row);
    r.timestamp = parse_double(cells[c_ts], row, schema.timestamp_col, false);

    for (const FeatCol& f : feats) {
      if (f.categorical)
        r.categorical.push_back(trim(cells[f.idx]));
      else
        r.numeric.push_back(parse_double(cells[f.idx], row, *f.name, true));
    }

    const std::string lb = trim(cells[c_lb]);
    if (lb == "0")
      r.label_binary = 0;
    else if (lb == "1")
      r.label_binary = 1;
    else
      throw DataError("row " + std::to_string(row) +
                      ": binary label must be 0 or 1, got '" + lb + "'");

    const std::string lm = trim(cells[c_lm]);
    if (lm.empty()) {
      if (r.label_binary != 0)
        throw DataError("row " + std::to_string(row) +
                        ": attack row without a class name");
      r.label_multiclass = normal_id;
    } else {
      r.label_multiclass = schema.class_id(lm);
      if (r.label_multiclass < 0)
        throw DataError("row " + std::to_string(row) + ": unknown class '" +
                        lm + "'");
    }
    const bool is_normal = r.label_multiclass == normal_id;
    if (is_normal != (r.label_binary == 0))
      throw DataError("row " + std::to_string(row) +
                      ": class/binary label disagreement");
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace flowgnn::dataio
