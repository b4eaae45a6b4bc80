#include "seqsprt/conflict.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

#include "seqsprt/error.hpp"

namespace seqsprt {

bool segments_conflict(const LoopSegment& a, const LoopSegment& b)
{
  return a.query_span.overlaps(b.query_span) || a.db_span.overlaps(b.db_span);
}

bool canonical_less(const LoopSegment& a, const LoopSegment& b)
{
  return std::make_tuple(a.query_span, a.db_span, -a.score, a.length) <
         std::make_tuple(b.query_span, b.db_span, -b.score, b.length);
}

double total_score(std::span<const LoopSegment> segments)
{
  double acc = 0.0;
  for (const auto& s : segments)
    acc += s.score;
  return acc;
}

namespace {

// Branch-and-bound over one connected component, items in canonical order.
class ComponentSolver
{
public:
  ComponentSolver(std::vector<double> scores, std::vector<std::vector<std::size_t>> adj)
    : scores_(std::move(scores))
    , adj_(std::move(adj))
    , m_(scores_.size())
    , chosen_(m_, false)
    , blocked_(m_, 0)
    , last_neighbor_(m_, 0)
  {
    for (std::size_t i = 0; i < m_; ++i)
      for (std::size_t j : adj_[i])
        last_neighbor_[i] = std::max(last_neighbor_[i], j);
  }

  std::vector<std::size_t> solve()
  {
    search(0, 0.0);
    return best_set_;
  }

private:
  bool dead_exclusion(std::size_t decided_up_to) const
  {
    // an excluded item whose neighbours are all decided and none chosen can
    // never be dominated, so the branch violates maximality
    for (std::size_t j = 0; j <= decided_up_to; ++j)
      if (!chosen_[j] && blocked_[j] == 0 && last_neighbor_[j] <= decided_up_to)
        return true;
    return false;
  }

  void search(std::size_t pos, double total)
  {
    if (pos == m_) {
      if (!found_ || total > best_) {
        found_ = true;
        best_ = total;
        best_set_.clear();
        for (std::size_t i = 0; i < m_; ++i)
          if (chosen_[i])
            best_set_.push_back(i);
      }
      return;
    }
    if (found_) {
      double bound = total;
      for (std::size_t i = pos; i < m_; ++i)
        if (blocked_[i] == 0)
          bound += std::max(0.0, scores_[i]);
      if (bound < best_ - 1e-9 * (1.0 + std::abs(best_)))
        return;
    }
    if (blocked_[pos] == 0) {
      chosen_[pos] = true;
      for (std::size_t j : adj_[pos])
        ++blocked_[j];
      if (!dead_exclusion(pos))
        search(pos + 1, total + scores_[pos]);
      for (std::size_t j : adj_[pos])
        --blocked_[j];
      chosen_[pos] = false;
    }
    if (!dead_exclusion(pos))
      search(pos + 1, total);
  }

  std::vector<double> scores_;
  std::vector<std::vector<std::size_t>> adj_;
  std::size_t m_;
  std::vector<bool> chosen_;
  std::vector<int> blocked_;
  std::vector<std::size_t> last_neighbor_;
  bool found_ = false;
  double best_ = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> best_set_;
};

} // namespace

std::vector<std::size_t> resolve_indices(std::span<const LoopSegment> pool, std::size_t window_cap)
{
  if (pool.size() > window_cap)
    throw WindowOverflow("resolve: pool of " + std::to_string(pool.size()) + " segments exceeds window cap " +
                         std::to_string(window_cap));
  for (const auto& s : pool)
    if (s.length == 0 || !std::isfinite(s.score))
      throw DomainError("resolve: segments need positive length and finite score");

  const std::size_t n = pool.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return canonical_less(pool[a], pool[b]);
  });

  // connected components in canonical order
  std::vector<int> comp(n, -1);
  int n_comp = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] >= 0)
      continue;
    std::vector<std::size_t> stack{s};
    comp[s] = n_comp;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (std::size_t v = 0; v < n; ++v)
        if (comp[v] < 0 && segments_conflict(pool[order[u]], pool[order[v]])) {
          comp[v] = n_comp;
          stack.push_back(v);
        }
    }
    ++n_comp;
  }

  std::vector<std::size_t> out;
  for (int c = 0; c < n_comp; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i)
      if (comp[i] == c)
        members.push_back(i);
    std::vector<double> scores;
    std::vector<std::vector<std::size_t>> adj(members.size());
    for (std::size_t a = 0; a < members.size(); ++a) {
      scores.push_back(pool[order[members[a]]].score);
      for (std::size_t b = 0; b < members.size(); ++b)
        if (a != b && segments_conflict(pool[order[members[a]]], pool[order[members[b]]]))
          adj[a].push_back(b);
    }
    for (std::size_t local : ComponentSolver(std::move(scores), std::move(adj)).solve())
      out.push_back(order[members[local]]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<LoopSegment> resolve(std::span<const LoopSegment> pool, std::size_t window_cap)
{
  std::vector<LoopSegment> out;
  for (std::size_t i : resolve_indices(pool, window_cap))
    out.push_back(pool[i]);
  return out;
}

WindowedResolver::WindowedResolver(std::size_t window_cap, std::size_t flush_gap)
  : cap_(window_cap)
  , flush_gap_(flush_gap)
{
  if (cap_ == 0)
    throw DomainError("WindowedResolver: window cap must be positive");
}

void WindowedResolver::advance_to(std::size_t q)
{
  if (pending_.empty())
    return;
  std::size_t last = 0;
  for (const auto& e : pending_)
    last = std::max(last, e.segment.query_span.hi);
  if (q > last + flush_gap_)
    flush();
}

void WindowedResolver::add(LoopSegment segment, std::size_t tag)
{
  if (pending_.size() >= cap_)
    flush();
  pending_.push_back({std::move(segment), tag});
}

void WindowedResolver::finish() { flush(); }

void WindowedResolver::flush()
{
  if (pending_.empty())
    return;
  std::vector<LoopSegment> segs;
  segs.reserve(pending_.size());
  for (const auto& e : pending_)
    segs.push_back(e.segment);
  const std::size_t before = retained_.size();
  for (std::size_t i : resolve_indices(segs, cap_)) {
    for (std::size_t r = 0; r < before; ++r)
      if (segments_conflict(retained_[r].segment, pending_[i].segment))
        ++cross_window_overlaps_;
    retained_.push_back(pending_[i]);
  }
  pending_.clear();
  ++windows_;
}

} // namespace seqsprt
