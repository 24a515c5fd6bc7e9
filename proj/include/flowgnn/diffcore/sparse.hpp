#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

namespace flowgnn::diffcore {

/// CSR matrix with explicit values. Used for the graph transition
/// matrices; the structure is constant, only dense operands carry grads.
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols_count = 0;
  std::vector<std::size_t> offsets;  // rows + 1 entries
  std::vector<std::uint32_t> cols;
  std::vector<double> vals;

  std::size_t nnz() const { return cols.size(); }

  SparseMatrix transposed() const;

  /// Divides each row by its sum; all-zero rows stay zero.
  static SparseMatrix row_normalized(const SparseMatrix& a);

  /// Dense copy, row-major. Test/oracle helper for small matrices.
  std::vector<double> to_dense() const;
};

using SparseMatrixPtr = std::shared_ptr<const SparseMatrix>;

/// Bundles P with its transpose so the backward pass of propagate() does
/// not rebuild it per call.
struct TransitionMatrix {
  SparseMatrixPtr forward;
  SparseMatrixPtr transpose;

  static TransitionMatrix from(SparseMatrix m);
};

}  // namespace flowgnn::diffcore
