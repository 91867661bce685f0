#pragma once

// Coordinate / CSR / dense matrices and the handful of kernels the GCN needs.
// Everything is double precision. Row-parallel kernels write disjoint output
// rows and never reorder a reduction, so results do not depend on the thread
// count.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace textgcn::sparse {

using Index = std::int64_t;

struct Triple {
  Index row = 0;
  Index col = 0;
  double value = 0.0;

  friend bool operator==(const Triple&, const Triple&) = default;
};

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(Index rows, Index cols, double fill = 0.0);
  DenseMatrix(Index rows, Index cols, std::vector<double> values);

  static DenseMatrix identity(Index n);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }

  double& operator()(Index r, Index c) { return values_[static_cast<std::size_t>(r * cols_ + c)]; }
  double operator()(Index r, Index c) const {
    return values_[static_cast<std::size_t>(r * cols_ + c)];
  }

  std::span<double> row(Index r) {
    return {values_.data() + r * cols_, static_cast<std::size_t>(cols_)};
  }
  std::span<const double> row(Index r) const {
    return {values_.data() + r * cols_, static_cast<std::size_t>(cols_)};
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool all_finite() const;
  DenseMatrix transpose() const;

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<double> values_;
};

class CooMatrix {
 public:
  CooMatrix() = default;
  CooMatrix(Index rows, Index cols) : rows_(rows), cols_(cols) {}

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }

  void add(Index row, Index col, double value) { triples_.push_back({row, col, value}); }
  void reserve(std::size_t n) { triples_.reserve(n); }

  const std::vector<Triple>& triples() const { return triples_; }
  std::size_t nnz() const { return triples_.size(); }

  /// Sorts by (row, col) and merges duplicate coordinates by summation.
  /// Throws StructuralError on any out-of-range coordinate.
  void finalize();

  DenseMatrix to_dense() const;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Triple> triples_;
};

class CsrMatrix {
 public:
  CsrMatrix() : row_offsets_(1, 0) {}
  CsrMatrix(Index rows, Index cols, std::vector<Index> row_offsets,
            std::vector<Index> col_indices, std::vector<double> values);

  static CsrMatrix identity(Index n);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  std::size_t nnz() const { return values_.size(); }

  const std::vector<Index>& row_offsets() const { return row_offsets_; }
  const std::vector<Index>& col_indices() const { return col_indices_; }
  const std::vector<double>& values() const { return values_; }

  /// Stored value at (r, c), or 0 when absent. Binary search within the row.
  double at(Index r, Index c) const;

  DenseMatrix to_dense() const;

  friend bool operator==(const CsrMatrix&, const CsrMatrix&) = default;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Index> row_offsets_;
  std::vector<Index> col_indices_;
  std::vector<double> values_;
};

/// Number of worker threads used by the row-parallel kernels (default 1).
void set_num_threads(int n);
int num_threads();

CsrMatrix coo_to_csr(CooMatrix m);

/// a * b. Throws ArgumentError when a.cols() != b.rows().
DenseMatrix spmm(const CsrMatrix& a, const DenseMatrix& b);

/// D^-1/2 (A + I) D^-1/2 with D the row sums of A + I. `a` must be square,
/// non-negative and carry no diagonal entries.
CsrMatrix sym_normalize(CooMatrix a);

// Dense helpers used by the GCN layers.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);     // a * b
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);  // a^T * b
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);  // a * b^T

// Text serialization: `COO rows cols nnz` followed by `row col value` lines,
// values at 17 significant digits.
void write_coo(std::ostream& out, const CooMatrix& m);
CooMatrix read_coo(std::istream& in);

std::string format_double(double v);

}  // namespace textgcn::sparse
