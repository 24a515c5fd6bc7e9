#include "flowgnn/dataio/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "flowgnn/errors.hpp"

namespace flowgnn::dataio {

namespace {

constexpr double kStdFloor = 1e-8;
constexpr double kHeavyTailRatio = 1000.0;

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + n / 2, v.end());
  double hi = v[n / 2];
  if (n % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + n / 2 - 1, v.end());
  return (v[n / 2 - 1] + hi) / 2.0;
}

}  // namespace

FeatureEncoder fit_encoder(const std::vector<FlowRecord>& train,
                           const DatasetSchema& schema) {
  if (train.empty()) throw DataError("cannot fit an encoder on zero records");

  FeatureEncoder enc;
  const std::size_t n_num = schema.numeric_count();
  const std::size_t n_cat = schema.categorical.size();
  enc.numeric.resize(n_num);

  std::vector<std::string> numeric_names;
  for (const std::string& f : schema.features)
    if (!schema.is_categorical(f)) numeric_names.push_back(f);

  for (std::size_t c = 0; c < n_num; ++c) {
    std::vector<double> vals;
    vals.reserve(train.size());
    for (const FlowRecord& r : train)
      if (!std::isnan(r.numeric[c])) vals.push_back(r.numeric[c]);
    if (vals.empty())
      throw DataError("column " + numeric_names[c] +
                      " has no usable values in the training split");

    const double mn = *std::min_element(vals.begin(), vals.end());
    const double mx = *std::max_element(vals.begin(), vals.end());
    FeatureEncoder::NumericStat& st = enc.numeric[c];
    st.log1p_first = mn >= 0.0 && mx > kHeavyTailRatio * median_of(vals);
    if (st.log1p_first)
      for (double& v : vals) v = std::log1p(v);
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= static_cast<double>(vals.size());
    st.mean = mean;
    st.stddev = std::max(std::sqrt(var), kStdFloor);
  }

  enc.categories.resize(n_cat);
  enc.category_index.resize(n_cat);
  for (std::size_t c = 0; c < n_cat; ++c) {
    enc.categories[c].push_back("<unknown>");
    enc.category_index[c].emplace("<unknown>", 0);
    for (const FlowRecord& r : train) {
      const std::string& v = r.categorical[c];
      if (enc.category_index[c].emplace(v, enc.categories[c].size()).second)
        enc.categories[c].push_back(v);
    }
  }

  enc.output_dim = n_num;
  for (const auto& cats : enc.categories) enc.output_dim += cats.size();
  return enc;
}

flowgraph::FlowPayload EncodedFlows::payload() const {
  flowgraph::FlowPayload p;
  p.features = features;
  p.feature_dim = feature_dim;
  p.labels = labels;
  p.binary_labels = binary_labels;
  p.timestamps = timestamps;
  return p;
}

EncodedFlows encode(const FeatureEncoder& enc,
                    const std::vector<FlowRecord>& records,
                    const DatasetSchema& schema) {
  if (enc.output_dim == 0) throw UsageError("encoder is not fitted");
  const std::size_t n_num = enc.numeric.size();
  const std::size_t n_cat = enc.categories.size();

  EncodedFlows out;
  out.feature_dim = enc.output_dim;
  out.features.assign(records.size() * enc.output_dim, 0.0);
  out.labels.reserve(records.size());
  out.binary_labels.reserve(records.size());
  out.timestamps.reserve(records.size());
  out.endpoints.reserve(records.size());

  for (std::size_t i = 0; i < records.size(); ++i) {
    const FlowRecord& r = records[i];
    if (r.numeric.size() != n_num || r.categorical.size() != n_cat)
      throw UsageError("record " + std::to_string(i) +
                       " does not match the fitted schema");
    double* row = out.features.data() + i * enc.output_dim;
    for (std::size_t c = 0; c < n_num; ++c) {
      const FeatureEncoder::NumericStat& st = enc.numeric[c];
      double v = r.numeric[c];
      if (std::isnan(v)) {
        row[c] = 0.0;  // missing: sits at the training mean
        continue;
      }
      if (st.log1p_first) v = std::log1p(std::max(v, 0.0));
      row[c] = (v - st.mean) / st.stddev;
    }
    std::size_t base = n_num;
    for (std::size_t c = 0; c < n_cat; ++c) {
      const auto it = enc.category_index[c].find(r.categorical[c]);
      const std::size_t idx =
          it == enc.category_index[c].end() ? 0 : it->second;
      row[base + idx] = 1.0;
      base += enc.categories[c].size();
    }
    out.labels.push_back(r.label_multiclass);
    out.binary_labels.push_back(r.label_binary);
    out.timestamps.push_back(r.timestamp);
    out.endpoints.push_back({r.src_key(), r.dst_key()});
  }
  (void)schema;
  return out;
}

EncodedFlows take_rows(const EncodedFlows& src,
                       const std::vector<std::size_t>& rows) {
  EncodedFlows out;
  out.feature_dim = src.feature_dim;
  out.features.reserve(rows.size() * src.feature_dim);
  out.labels.reserve(rows.size());
  out.binary_labels.reserve(rows.size());
  out.timestamps.reserve(rows.size());
  out.endpoints.reserve(rows.size());
  for (std::size_t r : rows) {
    if (r >= src.rows())
      throw UsageError("row " + std::to_string(r) + " out of range");
    out.features.insert(out.features.end(),
                        src.features.begin() + r * src.feature_dim,
                        src.features.begin() + (r + 1) * src.feature_dim);
    out.labels.push_back(src.labels[r]);
    out.binary_labels.push_back(src.binary_labels[r]);
    out.timestamps.push_back(src.timestamps[r]);
    out.endpoints.push_back(src.endpoints[r]);
  }
  return out;
}

std::vector<double> class_weights(const std::vector<int>& labels,
                                  std::size_t num_classes) {
  std::vector<double> count(num_classes, 0.0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
      throw DataError("label " + std::to_string(y) + " outside class range");
    count[y] += 1.0;
  }
  std::vector<double> w(num_classes, 0.0);
  const double n = static_cast<double>(labels.size());
  for (std::size_t c = 0; c < num_classes; ++c)
    if (count[c] > 0.0) w[c] = n / (static_cast<double>(num_classes) * count[c]);
  return w;
}

}  // namespace flowgnn::dataio
