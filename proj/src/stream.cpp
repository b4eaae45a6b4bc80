#include "seqsprt/stream.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "seqsprt/error.hpp"

namespace seqsprt {

Metric metric_from_string(const std::string& s)
{
  if (s == "euclidean")
    return Metric::euclidean;
  if (s == "cosine")
    return Metric::cosine;
  if (s == "manhattan")
    return Metric::manhattan;
  throw ConfigError("unknown descriptor metric '" + s + "'");
}

std::string to_string(Metric m)
{
  switch (m) {
  case Metric::euclidean:
    return "euclidean";
  case Metric::cosine:
    return "cosine";
  case Metric::manhattan:
    return "manhattan";
  }
  return "euclidean";
}

DescriptorTable::DescriptorTable(std::size_t dim, std::vector<double> values, Metric metric)
  : dim_(dim)
  , values_(std::move(values))
  , metric_(metric)
{
  if (dim_ == 0)
    throw DomainError("DescriptorTable: dimension must be >= 1");
  if (values_.size() % dim_ != 0)
    throw DomainError("DescriptorTable: value count is not a multiple of the dimension");
}

DescriptorTable DescriptorTable::from_rows(const std::vector<std::vector<double>>& rows, Metric metric)
{
  if (rows.empty())
    throw DomainError("DescriptorTable: no rows");
  const std::size_t dim = rows.front().size();
  std::vector<double> values;
  values.reserve(rows.size() * dim);
  for (const auto& r : rows) {
    if (r.size() != dim)
      throw DomainError("DescriptorTable: rows have unequal dimension");
    values.insert(values.end(), r.begin(), r.end());
  }
  return DescriptorTable(dim, std::move(values), metric);
}

double DescriptorTable::distance(std::size_t a, std::size_t b) const
{
  const double* x = row(a);
  const double* y = row(b);
  switch (metric_) {
  case Metric::euclidean: {
    double acc = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) {
      const double d = x[i] - y[i];
      acc += d * d;
    }
    return std::sqrt(acc);
  }
  case Metric::manhattan: {
    double acc = 0.0;
    for (std::size_t i = 0; i < dim_; ++i)
      acc += std::abs(x[i] - y[i]);
    return acc;
  }
  case Metric::cosine: {
    double dot = 0.0, nx = 0.0, ny = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) {
      dot += x[i] * y[i];
      nx += x[i] * x[i];
      ny += y[i] * y[i];
    }
    if (nx == 0.0 || ny == 0.0)
      return 1.0;
    return std::max(0.0, 1.0 - dot / std::sqrt(nx * ny));
  }
  }
  return 0.0;
}

void DescriptorTable::save_csv(const std::string& path) const
{
  std::ofstream out(path);
  if (!out)
    throw FormatError("cannot write " + path);
  out << std::setprecision(17);
  for (std::size_t k = 0; k < size(); ++k) {
    const double* r = row(k);
    for (std::size_t i = 0; i < dim_; ++i)
      out << (i ? "," : "") << r[i];
    out << '\n';
  }
}

DescriptorTable DescriptorTable::load_csv(const std::string& path, Metric metric)
{
  std::ifstream in(path);
  if (!in)
    throw FormatError("cannot read " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#')
      continue;
    std::vector<double> r;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        r.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError(path + ": non-numeric descriptor value '" + cell + "'");
      }
    }
    rows.push_back(std::move(r));
  }
  return from_rows(rows, metric);
}

CandidateSet retrieve(const DescriptorTable& table,
                      std::size_t q,
                      std::size_t budget,
                      std::size_t exclusion,
                      std::size_t exclusivity)
{
  RetrievalParams p;
  p.budget = budget;
  p.exclusion = exclusion;
  p.exclusivity = exclusivity;
  p.ratio_gate = 0.0;
  return retrieve(table, q, p);
}

CandidateSet retrieve(const DescriptorTable& table, std::size_t q, const RetrievalParams& params)
{
  if (q >= table.size())
    throw DomainError("retrieve: query index out of range");
  std::vector<Candidate> pool;
  pool.reserve(table.size());
  for (std::size_t t = 0; t < table.size(); ++t) {
    const std::size_t gap = t > q ? t - q : q - t;
    if (gap <= params.exclusion)
      continue;
    if (params.past_only && t > q)
      continue;
    pool.push_back({t, table.distance(q, t)});
  }
  std::sort(pool.begin(), pool.end(), [](const Candidate& a, const Candidate& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
  });

  CandidateSet out;
  out.query = q;
  for (const auto& c : pool) {
    if (out.candidates.size() >= params.budget)
      break;
    const bool suppressed = std::any_of(out.candidates.begin(), out.candidates.end(), [&](const Candidate& k) {
      const std::size_t gap = c.index > k.index ? c.index - k.index : k.index - c.index;
      return gap <= params.exclusivity;
    });
    if (!suppressed)
      out.candidates.push_back(c);
  }
  if (params.ratio_gate > 0.0 && !out.candidates.empty()) {
    const double limit = params.ratio_gate * out.candidates.front().distance;
    std::erase_if(out.candidates, [&](const Candidate& c) { return c.distance > limit; });
  }
  return out;
}

std::vector<double> DistanceStream::nu_trace() const
{
  std::vector<double> v;
  for (const auto& o : observations)
    v.push_back(o.nu);
  return v;
}

std::vector<int> DistanceStream::delta_trace() const
{
  std::vector<int> v;
  for (const auto& o : observations)
    v.push_back(o.delta);
  return v;
}

std::optional<Observation> track_step(const DescriptorTable& table,
                                      const DensityPair& dp,
                                      std::size_t q,
                                      std::size_t t,
                                      std::size_t step,
                                      const std::vector<double>& nu_set,
                                      int delta_max)
{
  const std::size_t n = table.size();
  if (q + step >= n)
    return std::nullopt;
  std::vector<double> nus = nu_set;
  std::sort(nus.begin(), nus.end());

  std::map<long, double> llr_cache;
  std::map<long, double> dist_cache;
  std::optional<Observation> best;
  double best_llr = -std::numeric_limits<double>::infinity();
  for (int a = 0; a <= delta_max; ++a) {
    for (double nu : nus) {
      for (int sign : {-1, 1}) {
        if (a == 0 && sign == 1)
          continue;
        const int delta = sign * a;
        const long k = static_cast<long>(std::floor(nu * static_cast<double>(step) + delta));
        const long idx = static_cast<long>(t) + k;
        if (idx < 0 || idx >= static_cast<long>(n))
          continue;
        auto it = llr_cache.find(k);
        if (it == llr_cache.end()) {
          const double x = table.distance(q + step, static_cast<std::size_t>(idx));
          dist_cache[k] = x;
          it = llr_cache.emplace(k, dp.llr(x)).first;
        }
        if (it->second > best_llr) {
          best_llr = it->second;
          best = Observation{step, k, dist_cache[k], nu, delta};
        }
      }
    }
  }
  return best;
}

DistanceStream build_stream(const DescriptorTable& table,
                            const DensityPair& dp,
                            std::size_t q,
                            std::size_t t,
                            const std::vector<double>& nu_set,
                            int delta_max,
                            std::size_t n_max)
{
  if (nu_set.empty())
    throw DomainError("build_stream: empty velocity hypothesis set");
  if (q >= table.size() || t >= table.size())
    throw DomainError("build_stream: keyframe index out of range");
  DistanceStream s{q, t, {}};
  for (std::size_t i = 0; i < n_max; ++i) {
    auto obs = track_step(table, dp, q, t, i, nu_set, delta_max);
    if (!obs)
      break;
    s.observations.push_back(*obs);
  }
  if (s.observations.empty())
    throw EmptyStream("build_stream: no valid index pair at step 0");
  return s;
}

DistanceStream build_stream(const DescriptorTable& table,
                            const DensityPair& dp,
                            std::size_t q,
                            std::size_t t,
                            const TrackerConfig& cfg)
{
  if (cfg.velocity_mode == VelocityMode::per_step)
    return build_stream(table, dp, q, t, cfg.nu_set, cfg.delta_max, cfg.n_max);

  // Per-stream mode: one nu for the whole stream, chosen by total LLR.
  std::vector<double> nus = cfg.nu_set;
  std::sort(nus.begin(), nus.end());
  std::optional<DistanceStream> best;
  double best_total = -std::numeric_limits<double>::infinity();
  for (double nu : nus) {
    DistanceStream s;
    try {
      s = build_stream(table, dp, q, t, std::vector<double>{nu}, cfg.delta_max, cfg.n_max);
    } catch (const EmptyStream&) {
      continue;
    }
    double total = 0.0;
    for (const auto& o : s.observations)
      total += dp.llr(o.distance);
    if (total > best_total) {
      best_total = total;
      best = std::move(s);
    }
  }
  if (!best)
    throw EmptyStream("build_stream: no valid index pair at step 0");
  return *best;
}

DistanceStream build_rigid_stream(const DescriptorTable& table, std::size_t q, std::size_t t, std::size_t n_max)
{
  DistanceStream s{q, t, {}};
  for (std::size_t i = 0; i < n_max && q + i < table.size() && t + i < table.size(); ++i)
    s.observations.push_back({i, static_cast<long>(i), table.distance(q + i, t + i), 1.0, 0});
  if (s.observations.empty())
    throw EmptyStream("build_rigid_stream: no valid index pair at step 0");
  return s;
}

std::optional<Observation> StreamSource::next()
{
  if (pos_ >= stream_.observations.size())
    return std::nullopt;
  return stream_.observations[pos_++];
}

StreamTracker::StreamTracker(const DescriptorTable& table,
                             const DensityPair& dp,
                             std::size_t q,
                             std::size_t t,
                             std::vector<double> nu_set,
                             int delta_max,
                             std::size_t n_max)
  : table_(table)
  , dp_(dp)
  , q_(q)
  , t_(t)
  , nu_set_(std::move(nu_set))
  , delta_max_(delta_max)
  , n_max_(n_max)
{
  if (nu_set_.empty())
    throw DomainError("StreamTracker: empty velocity hypothesis set");
}

std::optional<Observation> StreamTracker::next()
{
  if (done_ || step_ >= n_max_)
    return std::nullopt;
  auto obs = track_step(table_, dp_, q_, t_, step_, nu_set_, delta_max_);
  if (!obs) {
    done_ = true;
    if (step_ == 0)
      throw EmptyStream("StreamTracker: no valid index pair at step 0");
    return std::nullopt;
  }
  ++step_;
  return obs;
}

} // namespace seqsprt
