#include "flowgnn/diffcore/sparse.hpp"

namespace flowgnn::diffcore {

SparseMatrix SparseMatrix::transposed() const {
  SparseMatrix t;
  t.rows = cols_count;
  t.cols_count = rows;
  t.offsets.assign(t.rows + 1, 0);
  for (std::uint32_t c : cols) ++t.offsets[c + 1];
  for (std::size_t i = 0; i < t.rows; ++i) t.offsets[i + 1] += t.offsets[i];
  t.cols.resize(nnz());
  t.vals.resize(nnz());
  std::vector<std::size_t> cursor(t.offsets.begin(), t.offsets.end() - 1);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t e = offsets[r]; e < offsets[r + 1]; ++e) {
      std::size_t slot = cursor[cols[e]]++;
      t.cols[slot] = static_cast<std::uint32_t>(r);
      t.vals[slot] = vals[e];
    }
  }
  return t;
}

SparseMatrix SparseMatrix::row_normalized(const SparseMatrix& a) {
  SparseMatrix out = a;
  for (std::size_t r = 0; r < a.rows; ++r) {
    double sum = 0.0;
    for (std::size_t e = a.offsets[r]; e < a.offsets[r + 1]; ++e)
      sum += a.vals[e];
    if (sum == 0.0) continue;
    for (std::size_t e = a.offsets[r]; e < a.offsets[r + 1]; ++e)
      out.vals[e] = a.vals[e] / sum;
  }
  return out;
}

std::vector<double> SparseMatrix::to_dense() const {
  std::vector<double> dense(rows * cols_count, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t e = offsets[r]; e < offsets[r + 1]; ++e)
      dense[r * cols_count + cols[e]] += vals[e];
  return dense;
}

TransitionMatrix TransitionMatrix::from(SparseMatrix m) {
  TransitionMatrix t;
  auto fwd = std::make_shared<SparseMatrix>(std::move(m));
  t.transpose = std::make_shared<const SparseMatrix>(fwd->transposed());
  t.forward = std::move(fwd);
  return t;
}

}  // namespace flowgnn::diffcore
