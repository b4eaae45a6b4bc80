#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "seqsprt/sprt.hpp"

namespace seqsprt {

/// Two segments conflict when their query spans or their database spans
/// intersect (closed intervals).
bool segments_conflict(const LoopSegment& a, const LoopSegment& b);

/// Canonical (lexicographic) ordering used for deterministic tie-breaks:
/// query span, database span, then descending score and length.
bool canonical_less(const LoopSegment& a, const LoopSegment& b);

/// Exact conflict resolution.
///
/// Among all subsets of the pool in which no two segments conflict and every
/// discarded segment conflicts with a retained one, returns the subset with
/// the largest total score. With positive scores this is the maximum-weight
/// independent set of the conflict graph. Ties go to the subset whose
/// canonical-order index list is lexicographically smallest.
///
/// Solved by branch-and-bound on each connected component of the conflict
/// graph. Throws WindowOverflow when the pool exceeds `window_cap`.
/// Returned indices refer to `pool` and are sorted ascending.
std::vector<std::size_t> resolve_indices(std::span<const LoopSegment> pool, std::size_t window_cap = 32);

std::vector<LoopSegment> resolve(std::span<const LoopSegment> pool, std::size_t window_cap = 32);

double total_score(std::span<const LoopSegment> segments);

/// Streams segments through resolution windows. A window is flushed when a
/// new query index lies more than `flush_gap` frames beyond the last query
/// index covered by the pool, or when adding a segment would exceed the cap.
class WindowedResolver
{
public:
  struct Entry
  {
    LoopSegment segment;
    std::size_t tag = 0; // caller-supplied identifier, e.g. the verdict index
  };

  WindowedResolver(std::size_t window_cap, std::size_t flush_gap);

  /// Call before adding segments for query `q`.
  void advance_to(std::size_t q);
  void add(LoopSegment segment, std::size_t tag);
  /// Resolves whatever is pending.
  void finish();

  const std::vector<Entry>& retained() const { return retained_; }
  /// Retained segments from different windows that overlap each other.
  std::size_t cross_window_overlaps() const { return cross_window_overlaps_; }
  std::size_t windows_flushed() const { return windows_; }

private:
  void flush();

  std::size_t cap_;
  std::size_t flush_gap_;
  std::vector<Entry> pending_;
  std::vector<Entry> retained_;
  std::size_t cross_window_overlaps_ = 0;
  std::size_t windows_ = 0;
};

} // namespace seqsprt
