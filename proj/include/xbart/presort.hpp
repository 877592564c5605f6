#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "xbart/dataset.hpp"
#include "xbart/error.hpp"

namespace xbart {

/// Residual count and sum over one side of a candidate split.
struct SuffStats {
  std::size_t count = 0;
  double sum = 0.0;

  friend bool operator==(const SuffStats&, const SuffStats&) = default;
};

template <class Index>
concept RowIndex = std::unsigned_integral<Index> && (sizeof(Index) >= 4);

/// Per-variable row orderings for one node. Block v holds the node's rows in
/// ascending order of predictor v, ties broken by ascending row id.
///
/// The grower works on a single root-sized instance and partitions node
/// segments [begin, end) in place, so children are always contiguous
/// sub-ranges of their parent in every block.
template <RowIndex Index = std::uint32_t>
class PresortedIndex {
 public:
  using index_type = Index;

  PresortedIndex() = default;
  PresortedIndex(std::size_t num_vars, std::size_t node_size)
      : num_vars_(num_vars), node_size_(node_size), order_(num_vars * node_size) {}

  std::size_t num_vars() const noexcept { return num_vars_; }
  std::size_t node_size() const noexcept { return node_size_; }

  std::span<const Index> column(std::size_t v) const {
    return {order_.data() + v * node_size_, node_size_};
  }
  std::span<Index> column(std::size_t v) { return {order_.data() + v * node_size_, node_size_}; }

  std::span<const Index> segment(std::size_t v, std::size_t begin, std::size_t end) const {
    return column(v).subspan(begin, end - begin);
  }
  std::span<Index> segment(std::size_t v, std::size_t begin, std::size_t end) {
    return column(v).subspan(begin, end - begin);
  }

  friend bool operator==(const PresortedIndex&, const PresortedIndex&) = default;

 private:
  std::size_t num_vars_ = 0;
  std::size_t node_size_ = 0;
  std::vector<Index> order_;
};

template <RowIndex Index = std::uint32_t>
PresortedIndex<Index> presort(const Dataset& data) {
  const std::size_t n = data.num_rows();
  if (n > static_cast<std::size_t>(std::numeric_limits<Index>::max())) {
    throw InputError("row count exceeds the capacity of the configured row index type");
  }
  PresortedIndex<Index> idx(data.num_vars(), n);
  for (std::size_t v = 0; v < data.num_vars(); ++v) {
    const auto values = data.column(v);
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(values[i])) throw InputError("non-finite predictor value; cannot presort");
    }
    auto col = idx.column(v);
    std::iota(col.begin(), col.end(), Index{0});
    std::stable_sort(col.begin(), col.end(),
                     [&](Index a, Index b) { return values[a] < values[b]; });
  }
  return idx;
}

/// Stable in-place partition of `segment` by `goes_left[row]`. Left rows are
/// compacted to the front (the write cursor never passes the read cursor),
/// right rows are staged in `scratch` and appended. Returns the left count.
template <RowIndex Index>
std::size_t stable_partition_rows(std::span<Index> segment, std::span<const std::uint8_t> goes_left,
                                  std::span<Index> scratch) {
  std::size_t left = 0;
  std::size_t right = 0;
  for (const Index row : segment) {
    if (goes_left[row]) {
      segment[left++] = row;
    } else {
      scratch[right++] = row;
    }
  }
  std::copy_n(scratch.begin(), right, segment.begin() + static_cast<std::ptrdiff_t>(left));
  return left;
}

/// Sifts the node segment [begin, end) of a mutable index around the first
/// `rank` rows of `split_var`. `goes_left` must have one slot per dataset row;
/// only the slots of this node's rows are written.
template <RowIndex Index>
void sift_in_place(PresortedIndex<Index>& idx, std::size_t begin, std::size_t end,
                   std::size_t split_var, std::size_t rank, std::span<std::uint8_t> goes_left,
                   std::span<Index> scratch) {
  const std::size_t n_b = end - begin;
  if (rank < 1 || rank >= n_b) throw ContractViolation("sift rank must leave both children nonempty");
  if (split_var >= idx.num_vars()) throw ContractViolation("sift variable out of range");
  const auto pivot = idx.segment(split_var, begin, end);
  for (std::size_t h = 0; h < n_b; ++h) goes_left[pivot[h]] = h < rank ? 1 : 0;
  for (std::size_t v = 0; v < idx.num_vars(); ++v) {
    if (v == split_var) continue;
    stable_partition_rows(idx.segment(v, begin, end), std::span<const std::uint8_t>(goes_left),
                          scratch);
  }
}

/// Splits a node index into owning left/right children.
template <RowIndex Index>
std::pair<PresortedIndex<Index>, PresortedIndex<Index>> sift(const PresortedIndex<Index>& idx,
                                                            const Dataset& data,
                                                            std::size_t split_var,
                                                            std::size_t split_rank) {
  const std::size_t n_b = idx.node_size();
  if (split_rank < 1 || split_rank >= n_b) {
    throw ContractViolation("sift rank " + std::to_string(split_rank) + " outside [1, " +
                            std::to_string(n_b == 0 ? 0 : n_b - 1) + "]");
  }
  PresortedIndex<Index> work = idx;
  std::vector<std::uint8_t> goes_left(data.num_rows(), 0);
  std::vector<Index> scratch(n_b);
  sift_in_place(work, 0, n_b, split_var, split_rank, std::span<std::uint8_t>(goes_left),
                std::span<Index>(scratch));

  PresortedIndex<Index> left(idx.num_vars(), split_rank);
  PresortedIndex<Index> right(idx.num_vars(), n_b - split_rank);
  for (std::size_t v = 0; v < idx.num_vars(); ++v) {
    const auto col = work.column(v);
    std::copy_n(col.begin(), split_rank, left.column(v).begin());
    std::copy(col.begin() + static_cast<std::ptrdiff_t>(split_rank), col.end(),
              right.column(v).begin());
  }
  return {std::move(left), std::move(right)};
}

template <RowIndex Index>
double segment_sum(std::span<const double> residual, std::span<const Index> rows) {
  double s = 0.0;
  for (const Index row : rows) s += residual[row];
  return s;
}

/// One cumulative pass over `rows`, calling visit(k, left, right) at each
/// candidate rank ranks[k]. `total` is the node's residual sum.
template <RowIndex Index, class Visit>
void scan_prefix_sums(std::span<const double> residual, std::span<const Index> rows,
                      std::span<const std::size_t> ranks, double total, Visit&& visit) {
  const std::size_t n_b = rows.size();
  double running = 0.0;
  std::size_t h = 0;
  for (std::size_t k = 0; k < ranks.size(); ++k) {
    const std::size_t c = ranks[k];
    for (; h < c; ++h) running += residual[rows[h]];
    visit(k, SuffStats{c, running}, SuffStats{n_b - c, total - running});
  }
}

/// Left/right sufficient statistics at each candidate rank of `var`.
template <RowIndex Index>
std::vector<std::pair<SuffStats, SuffStats>> partial_sums(std::span<const double> residual,
                                                          const PresortedIndex<Index>& idx,
                                                          std::size_t var,
                                                          std::span<const std::size_t> ranks) {
  const std::size_t n_b = idx.node_size();
  for (std::size_t k = 0; k < ranks.size(); ++k) {
    if (ranks[k] < 1 || ranks[k] >= n_b || (k > 0 && ranks[k] <= ranks[k - 1])) {
      throw ContractViolation("candidate ranks must be strictly increasing within [1, n_b - 1]");
    }
  }
  const auto rows = idx.column(var);
  const double total = segment_sum<Index>(residual, rows);
  std::vector<std::pair<SuffStats, SuffStats>> out(ranks.size());
  scan_prefix_sums(residual, rows, ranks, total,
                   [&](std::size_t k, SuffStats l, SuffStats r) { out[k] = {l, r}; });
  return out;
}

}  // namespace xbart
