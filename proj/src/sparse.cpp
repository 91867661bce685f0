#include "textgcn/sparse.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

#include "textgcn/error.hpp"

namespace textgcn::sparse {

namespace {

std::atomic<int> g_threads{1};

// Runs fn(begin, end) over [0, n) split into contiguous chunks.
template <typename Fn>
void parallel_rows(Index n, Fn&& fn) {
  const int threads = g_threads.load();
  if (threads <= 1 || n < 256) {
    fn(Index{0}, n);
    return;
  }
  const Index chunks = std::min<Index>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(chunks));
  for (Index t = 0; t < chunks; ++t) {
    const Index begin = n * t / chunks;
    const Index end = n * (t + 1) / chunks;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

void set_num_threads(int n) { g_threads.store(std::max(1, n)); }
int num_threads() { return g_threads.load(); }

// ---------------------------------------------------------------- DenseMatrix

DenseMatrix::DenseMatrix(Index rows, Index cols, double fill)
    : rows_(rows), cols_(cols), values_(static_cast<std::size_t>(rows * cols), fill) {
  if (rows < 0 || cols < 0) throw ArgumentError("negative matrix dimension");
}

DenseMatrix::DenseMatrix(Index rows, Index cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (rows < 0 || cols < 0) throw ArgumentError("negative matrix dimension");
  if (values_.size() != static_cast<std::size_t>(rows * cols))
    throw ArgumentError("dense matrix value count does not match its shape");
}

DenseMatrix DenseMatrix::identity(Index n) {
  DenseMatrix m(n, n);
  for (Index i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool DenseMatrix::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

DenseMatrix DenseMatrix::transpose() const {
  DenseMatrix t(cols_, rows_);
  for (Index r = 0; r < rows_; ++r)
    for (Index c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

// ------------------------------------------------------------------ CooMatrix

void CooMatrix::finalize() {
  for (const auto& t : triples_) {
    if (t.row < 0 || t.row >= rows_ || t.col < 0 || t.col >= cols_) {
      std::ostringstream msg;
      msg << "coordinate (" << t.row << ", " << t.col << ") outside " << rows_ << "x" << cols_
          << " matrix";
      throw StructuralError(msg.str());
    }
  }
  std::stable_sort(triples_.begin(), triples_.end(), [](const Triple& a, const Triple& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::size_t out = 0;
  for (std::size_t i = 0; i < triples_.size(); ++i) {
    if (out > 0 && triples_[out - 1].row == triples_[i].row &&
        triples_[out - 1].col == triples_[i].col) {
      triples_[out - 1].value += triples_[i].value;
    } else {
      triples_[out++] = triples_[i];
    }
  }
  triples_.resize(out);
}

DenseMatrix CooMatrix::to_dense() const {
  DenseMatrix d(rows_, cols_);
  for (const auto& t : triples_) {
    if (t.row < 0 || t.row >= rows_ || t.col < 0 || t.col >= cols_)
      throw StructuralError("coordinate outside matrix");
    d(t.row, t.col) += t.value;
  }
  return d;
}

// ------------------------------------------------------------------ CsrMatrix

CsrMatrix::CsrMatrix(Index rows, Index cols, std::vector<Index> row_offsets,
                     std::vector<Index> col_indices, std::vector<double> values)
    : rows_(rows),
      cols_(cols),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)) {
  if (rows_ < 0 || cols_ < 0) throw StructuralError("negative matrix dimension");
  if (row_offsets_.size() != static_cast<std::size_t>(rows_ + 1) || row_offsets_.front() != 0)
    throw StructuralError("row_offsets must have rows+1 entries starting at 0");
  if (col_indices_.size() != values_.size() ||
      static_cast<std::size_t>(row_offsets_.back()) != values_.size())
    throw StructuralError("row_offsets, col_indices and values disagree on nnz");
  for (Index r = 0; r < rows_; ++r) {
    const Index begin = row_offsets_[r];
    const Index end = row_offsets_[r + 1];
    if (end < begin) throw StructuralError("row_offsets must be non-decreasing");
    for (Index k = begin; k < end; ++k) {
      const Index c = col_indices_[k];
      if (c < 0 || c >= cols_) throw StructuralError("column index out of range");
      if (k > begin && col_indices_[k - 1] >= c)
        throw StructuralError("column indices must be strictly increasing within a row");
    }
  }
}

CsrMatrix CsrMatrix::identity(Index n) {
  std::vector<Index> offsets(static_cast<std::size_t>(n + 1));
  std::vector<Index> cols(static_cast<std::size_t>(n));
  for (Index i = 0; i <= n; ++i) offsets[i] = i;
  for (Index i = 0; i < n; ++i) cols[i] = i;
  return CsrMatrix(n, n, std::move(offsets), std::move(cols),
                   std::vector<double>(static_cast<std::size_t>(n), 1.0));
}

double CsrMatrix::at(Index r, Index c) const {
  auto first = col_indices_.begin() + row_offsets_[r];
  auto last = col_indices_.begin() + row_offsets_[r + 1];
  auto it = std::lower_bound(first, last, c);
  if (it == last || *it != c) return 0.0;
  return values_[static_cast<std::size_t>(it - col_indices_.begin())];
}

DenseMatrix CsrMatrix::to_dense() const {
  DenseMatrix d(rows_, cols_);
  for (Index r = 0; r < rows_; ++r)
    for (Index k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) d(r, col_indices_[k]) = values_[k];
  return d;
}

// -------------------------------------------------------------------- kernels

CsrMatrix coo_to_csr(CooMatrix m) {
  m.finalize();
  const auto& t = m.triples();
  std::vector<Index> offsets(static_cast<std::size_t>(m.rows() + 1), 0);
  std::vector<Index> cols;
  std::vector<double> vals;
  cols.reserve(t.size());
  vals.reserve(t.size());
  for (const auto& e : t) {
    ++offsets[e.row + 1];
    cols.push_back(e.col);
    vals.push_back(e.value);
  }
  for (Index r = 0; r < m.rows(); ++r) offsets[r + 1] += offsets[r];
  return CsrMatrix(m.rows(), m.cols(), std::move(offsets), std::move(cols), std::move(vals));
}

DenseMatrix spmm(const CsrMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    std::ostringstream msg;
    msg << "spmm dimension mismatch: " << a.rows() << "x" << a.cols() << " times " << b.rows()
        << "x" << b.cols();
    throw ArgumentError(msg.str());
  }
  DenseMatrix out(a.rows(), b.cols());
  const auto& offsets = a.row_offsets();
  const auto& cols = a.col_indices();
  const auto& vals = a.values();
  const Index width = b.cols();
  parallel_rows(a.rows(), [&](Index begin, Index end) {
    for (Index r = begin; r < end; ++r) {
      double* dst = out.row(r).data();
      for (Index k = offsets[r]; k < offsets[r + 1]; ++k) {
        const double w = vals[k];
        const double* src = b.row(cols[k]).data();
        for (Index j = 0; j < width; ++j) dst[j] += w * src[j];
      }
    }
  });
  return out;
}

CsrMatrix sym_normalize(CooMatrix a) {
  if (a.rows() != a.cols()) throw ArgumentError("sym_normalize requires a square matrix");
  for (const auto& t : a.triples()) {
    if (t.value < 0.0) throw ArgumentError("sym_normalize requires non-negative weights");
    if (t.row == t.col && t.value != 0.0)
      throw ArgumentError("sym_normalize expects a zero diagonal; self-loops are added here");
  }
  const Index n = a.rows();
  for (Index i = 0; i < n; ++i) a.add(i, i, 1.0);
  CsrMatrix tilde = coo_to_csr(std::move(a));

  std::vector<double> inv_sqrt_deg(static_cast<std::size_t>(n));
  const auto& offsets = tilde.row_offsets();
  const auto& cols = tilde.col_indices();
  const auto& vals = tilde.values();
  for (Index r = 0; r < n; ++r) {
    double deg = 0.0;
    for (Index k = offsets[r]; k < offsets[r + 1]; ++k) deg += vals[k];
    inv_sqrt_deg[r] = 1.0 / std::sqrt(deg);
  }
  std::vector<double> scaled(vals.size());
  for (Index r = 0; r < n; ++r)
    for (Index k = offsets[r]; k < offsets[r + 1]; ++k)
      scaled[k] = inv_sqrt_deg[r] * vals[k] * inv_sqrt_deg[cols[k]];
  return CsrMatrix(n, n, offsets, cols, std::move(scaled));
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw ArgumentError("matmul dimension mismatch");
  DenseMatrix out(a.rows(), b.cols());
  const Index inner = a.cols();
  const Index width = b.cols();
  parallel_rows(a.rows(), [&](Index begin, Index end) {
    for (Index r = begin; r < end; ++r) {
      double* dst = out.row(r).data();
      const double* lhs = a.row(r).data();
      for (Index k = 0; k < inner; ++k) {
        const double w = lhs[k];
        if (w == 0.0) continue;
        const double* src = b.row(k).data();
        for (Index j = 0; j < width; ++j) dst[j] += w * src[j];
      }
    }
  });
  return out;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) throw ArgumentError("matmul_tn dimension mismatch");
  DenseMatrix out(a.cols(), b.cols());
  const Index width = b.cols();
  // Output row i accumulates a(k, i) * b(k, :) over k in a fixed order.
  parallel_rows(a.cols(), [&](Index begin, Index end) {
    for (Index k = 0; k < a.rows(); ++k) {
      const double* lhs = a.row(k).data();
      const double* src = b.row(k).data();
      for (Index i = begin; i < end; ++i) {
        const double w = lhs[i];
        if (w == 0.0) continue;
        double* dst = out.row(i).data();
        for (Index j = 0; j < width; ++j) dst[j] += w * src[j];
      }
    }
  });
  return out;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) throw ArgumentError("matmul_nt dimension mismatch");
  DenseMatrix out(a.rows(), b.rows());
  const Index inner = a.cols();
  parallel_rows(a.rows(), [&](Index begin, Index end) {
    for (Index r = begin; r < end; ++r) {
      const double* lhs = a.row(r).data();
      for (Index c = 0; c < b.rows(); ++c) {
        const double* rhs = b.row(c).data();
        double acc = 0.0;
        for (Index k = 0; k < inner; ++k) acc += lhs[k] * rhs[k];
        out(r, c) = acc;
      }
    }
  });
  return out;
}

// -------------------------------------------------------------- serialization

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

void write_coo(std::ostream& out, const CooMatrix& m) {
  out << "COO " << m.rows() << ' ' << m.cols() << ' ' << m.nnz() << '\n';
  for (const auto& t : m.triples())
    out << t.row << ' ' << t.col << ' ' << format_double(t.value) << '\n';
}

CooMatrix read_coo(std::istream& in) {
  std::string line;
  // Leading '#' lines are owner-specific headers (see textgraph).
  while (std::getline(in, line) && !line.empty() && line[0] == '#') {
  }
  std::istringstream header(line);
  std::string tag;
  Index rows = -1;
  Index cols = -1;
  Index nnz = -1;
  if (!(header >> tag >> rows >> cols >> nnz) || tag != "COO" || rows < 0 || cols < 0 || nnz < 0)
    throw LoadError("bad COO header: '" + line + "'");
  CooMatrix m(rows, cols);
  m.reserve(static_cast<std::size_t>(nnz));
  for (Index i = 0; i < nnz; ++i) {
    if (!std::getline(in, line)) throw LoadError("COO file truncated");
    const char* p = line.data();
    const char* end = p + line.size();
    Index r = 0;
    Index c = 0;
    double v = 0.0;
    auto skip = [&] {
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
    };
    auto r1 = std::from_chars(p, end, r);
    p = r1.ptr;
    skip();
    auto r2 = std::from_chars(p, end, c);
    p = r2.ptr;
    skip();
    auto r3 = std::from_chars(p, end, v);
    if (r1.ec != std::errc() || r2.ec != std::errc() || r3.ec != std::errc())
      throw LoadError("bad COO entry: '" + line + "'");
    m.add(r, c, v);
  }
  for (const auto& t : m.triples())
    if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
      throw StructuralError("COO entry outside declared shape");
  return m;
}

}  // namespace textgcn::sparse
