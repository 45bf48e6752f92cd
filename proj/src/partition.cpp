#include "gmrf/partition.hpp"

#include <algorithm>
#include <deque>
#include <json.hpp>
#include <numeric>

namespace gmrf {

Graph graph_from_precision(const SparseMatrix& q) {
  if (!q.is_square()) throw DimensionError("graph_from_precision: matrix not square");
  Graph g;
  g.n = q.rows();
  g.adjacency.resize(static_cast<std::size_t>(g.n));
  for (Index i = 0; i < g.n; ++i)
    for (const Index j : q.row(i).cols)
      if (j != i) g.adjacency[i].push_back(j);
  // Symmetrize the pattern in case of one-sided entries.
  for (Index i = 0; i < g.n; ++i)
    for (const Index j : g.adjacency[i])
      if (!std::binary_search(g.adjacency[j].begin(), g.adjacency[j].end(), i))
        throw std::invalid_argument("graph_from_precision: pattern is not symmetric");
  return g;
}

std::vector<Index> hop_distance(const Graph& graph, std::span<const Index> sources) {
  std::vector<Index> dist(static_cast<std::size_t>(graph.n), -1);
  std::deque<Index> frontier;
  for (const Index s : sources) {
    if (dist[s] < 0) {
      dist[s] = 0;
      frontier.push_back(s);
    }
  }
  while (!frontier.empty()) {
    const Index v = frontier.front();
    frontier.pop_front();
    for (const Index w : graph.adjacency[v])
      if (dist[w] < 0) {
        dist[w] = dist[v] + 1;
        frontier.push_back(w);
      }
  }
  return dist;
}

namespace {

// Level structure of the subgraph induced by `members` (mask[v] == tag).
// Components are visited in order of their lowest vertex, each rooted at a
// pseudo-peripheral vertex; levels continue across components.
struct LevelStructure {
  std::vector<Index> order;   // vertices by (level, discovery)
  std::vector<Index> level;   // parallel to order
};

std::vector<std::pair<Index, Index>> bfs_levels(const Graph& g, Index root, std::span<const Index> mask, Index tag,
                                                std::vector<Index>& seen, Index stamp) {
  std::vector<std::pair<Index, Index>> out;  // (vertex, level)
  std::deque<std::pair<Index, Index>> q{{root, 0}};
  seen[root] = stamp;
  while (!q.empty()) {
    const auto [v, l] = q.front();
    q.pop_front();
    out.emplace_back(v, l);
    for (const Index w : g.adjacency[v])
      if (mask[w] == tag && seen[w] != stamp) {
        seen[w] = stamp;
        q.emplace_back(w, l + 1);
      }
  }
  return out;
}

LevelStructure level_structure(const Graph& g, const std::vector<Index>& members, std::vector<Index>& mask,
                               Index tag) {
  for (const Index v : members) mask[v] = tag;
  std::vector<Index> seen(static_cast<std::size_t>(g.n), -1);
  std::vector<char> done(static_cast<std::size_t>(g.n), 0);
  LevelStructure ls;
  Index stamp = 0;
  Index base = 0;
  for (const Index start : members) {
    if (done[start]) continue;
    // Pseudo-peripheral root: repeat BFS from the lowest-index vertex of the
    // deepest level until the depth stops growing.
    Index root = start;
    auto levels = bfs_levels(g, root, mask, tag, seen, stamp++);
    for (int iter = 0; iter < 8; ++iter) {
      const Index depth = levels.back().second;
      Index cand = -1;
      for (const auto& [v, l] : levels)
        if (l == depth && (cand < 0 || v < cand)) cand = v;
      auto next = bfs_levels(g, cand, mask, tag, seen, stamp++);
      if (next.back().second <= depth) break;
      root = cand;
      levels = std::move(next);
    }
    Index top = 0;
    for (const auto& [v, l] : levels) {
      done[v] = 1;
      ls.order.push_back(v);
      ls.level.push_back(base + l);
      top = std::max(top, l);
    }
    base += top + 1;
  }
  return ls;
}

struct Split {
  std::vector<Index> left, separator, right;
};

Split bisect(const Graph& g, const std::vector<Index>& members, bool with_separator, std::vector<Index>& mask,
             Index tag) {
  const LevelStructure ls = level_structure(g, members, mask, tag);
  Split s;
  const std::size_t n = ls.order.size();
  if (!with_separator) {
    const std::size_t half = (n + 1) / 2;
    s.left.assign(ls.order.begin(), ls.order.begin() + static_cast<std::ptrdiff_t>(half));
    s.right.assign(ls.order.begin() + static_cast<std::ptrdiff_t>(half), ls.order.end());
  } else {
    // Separator level L: count(level < L) ≤ n/2 < count(level ≤ L).
    std::size_t below = 0;
    Index cut = ls.level.back();
    for (std::size_t k = 0; k < n;) {
      const Index l = ls.level[k];
      std::size_t e = k;
      while (e < n && ls.level[e] == l) ++e;
      if (2 * e > n) {
        cut = l;
        break;
      }
      below = e;
      k = e;
    }
    (void)below;
    for (std::size_t k = 0; k < n; ++k) {
      if (ls.level[k] < cut) s.left.push_back(ls.order[k]);
      else if (ls.level[k] == cut) s.separator.push_back(ls.order[k]);
      else s.right.push_back(ls.order[k]);
    }
  }
  std::sort(s.left.begin(), s.left.end());
  std::sort(s.separator.begin(), s.separator.end());
  std::sort(s.right.begin(), s.right.end());
  return s;
}

PartitionPlan temporal_partition(const Graph& g, Index parts, const PartitionOptions& opt) {
  const Index slab = opt.slab_size;
  if (slab <= 0 || g.n % slab != 0)
    throw std::invalid_argument("temporal_interval: graph size is not a multiple of the slab size");
  const Index n_t = g.n / slab;
  const Index seps = opt.with_separator ? parts - 1 : 0;
  const Index available = n_t - seps;
  if (available < parts) throw std::invalid_argument("partition: too many parts for the number of time slabs");
  PartitionPlan plan;
  plan.n = g.n;
  const Index base = available / parts, rem = available % parts;
  Index t = 0;
  for (Index j = 0; j < parts; ++j) {
    const Index len = base + (j < rem ? 1 : 0);
    std::vector<Index> a;
    for (Index s = t; s < t + len; ++s)
      for (Index k = 0; k < slab; ++k) a.push_back(s * slab + k);
    plan.parts.push_back(std::move(a));
    t += len;
    if (opt.with_separator && j + 1 < parts) {
      for (Index k = 0; k < slab; ++k) plan.separator.push_back(t * slab + k);
      ++t;
    }
  }
  if (opt.with_separator) {
    std::vector<Index> owner(static_cast<std::size_t>(g.n), -1);
    for (Index j = 0; j < parts; ++j)
      for (const Index v : plan.parts[j]) owner[v] = j;
    for (Index v = 0; v < g.n; ++v)
      for (const Index w : g.adjacency[v])
        if (owner[v] >= 0 && owner[w] >= 0 && owner[v] != owner[w])
          throw std::invalid_argument(
              "temporal_interval: single-slab separators do not disconnect the graph (coupling spans more than "
              "one slab)");
  }
  return plan;
}

PartitionPlan bisection_partition(const Graph& g, Index parts, const PartitionOptions& opt) {
  PartitionPlan plan;
  plan.n = g.n;
  std::vector<Index> all(static_cast<std::size_t>(g.n));
  std::iota(all.begin(), all.end(), 0);
  plan.parts.push_back(std::move(all));
  std::vector<Index> mask(static_cast<std::size_t>(g.n), -1);
  Index tag = 0;
  while (plan.part_count() < parts) {
    std::size_t pick = 0;
    for (std::size_t j = 1; j < plan.parts.size(); ++j)
      if (plan.parts[j].size() > plan.parts[pick].size()) pick = j;
    Split s = bisect(g, plan.parts[pick], opt.with_separator, mask, tag++);
    if (s.left.empty() || s.right.empty())
      throw std::invalid_argument("recursive_bisection: part too small to split into " + std::to_string(parts));
    plan.separator.insert(plan.separator.end(), s.separator.begin(), s.separator.end());
    plan.parts[pick] = std::move(s.left);
    plan.parts.insert(plan.parts.begin() + static_cast<std::ptrdiff_t>(pick) + 1, std::move(s.right));
  }
  std::sort(plan.separator.begin(), plan.separator.end());
  return plan;
}

}  // namespace

PartitionPlan partition(const Graph& graph, Index parts, const PartitionOptions& options) {
  if (parts < 1) throw std::invalid_argument("partition: J must be >= 1");
  if (parts > graph.n) throw std::invalid_argument("partition: J exceeds the number of vertices");
  if (parts == 1) {
    PartitionPlan plan;
    plan.n = graph.n;
    std::vector<Index> all(static_cast<std::size_t>(graph.n));
    std::iota(all.begin(), all.end(), 0);
    plan.parts.push_back(std::move(all));
    return plan;
  }
  if (options.strategy == PartitionStrategy::temporal_interval) return temporal_partition(graph, parts, options);
  return bisection_partition(graph, parts, options);
}

PartitionPlan expand_overlap(const Graph& graph, PartitionPlan plan, int l) {
  if (l < 0) throw std::invalid_argument("expand_overlap: l must be >= 0");
  const auto parts = static_cast<std::ptrdiff_t>(plan.parts.size());
  plan.extended.assign(plan.parts.size(), {});
  plan.frontiers.assign(plan.parts.size(), {});
  plan.overlap = l;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t j = 0; j < parts; ++j) {
    const auto dist = hop_distance(graph, plan.parts[j]);
    for (Index v = 0; v < graph.n; ++v) {
      if (dist[v] >= 0 && dist[v] <= l) plan.extended[j].push_back(v);
      else if (dist[v] == l + 1) plan.frontiers[j].push_back(v);
    }
  }
  return plan;
}

std::vector<Index> partition_of_unity(const PartitionPlan& plan, Index j) {
  if (!plan.has_extensions()) throw std::invalid_argument("partition_of_unity: plan has no extensions");
  const auto& b = plan.extended.at(j);
  std::vector<Index> sel;
  sel.reserve(plan.parts[j].size());
  for (const Index v : plan.parts[j]) {
    const auto it = std::lower_bound(b.begin(), b.end(), v);
    if (it == b.end() || *it != v) throw std::logic_error("partition_of_unity: A_j not contained in B_j");
    sel.push_back(static_cast<Index>(it - b.begin()));
  }
  return sel;
}

PartitionPlan absorb_separator(const Graph& graph, PartitionPlan plan) {
  if (plan.separator.empty()) return plan;
  std::vector<Index> owner(static_cast<std::size_t>(graph.n), -1);
  for (Index j = 0; j < plan.part_count(); ++j)
    for (const Index v : plan.parts[j]) owner[v] = j;
  std::vector<Index> target(plan.separator.size(), 0);
  for (std::size_t k = 0; k < plan.separator.size(); ++k) {
    Index best = -1;
    for (const Index w : graph.adjacency[plan.separator[k]])
      if (owner[w] >= 0 && (best < 0 || owner[w] < best)) best = owner[w];
    target[k] = best < 0 ? 0 : best;
  }
  for (std::size_t k = 0; k < plan.separator.size(); ++k) plan.parts[target[k]].push_back(plan.separator[k]);
  for (auto& p : plan.parts) std::sort(p.begin(), p.end());
  plan.separator.clear();
  plan.extended.clear();
  plan.frontiers.clear();
  plan.overlap = 0;
  return plan;
}

std::string validate_plan(const Graph& graph, const PartitionPlan& plan) {
  std::vector<Index> owner(static_cast<std::size_t>(graph.n), -1);
  for (Index j = 0; j < plan.part_count(); ++j) {
    for (const Index v : plan.parts[j]) {
      if (v < 0 || v >= graph.n) return "part " + std::to_string(j) + " has out-of-range vertex";
      if (owner[v] >= 0) return "vertex " + std::to_string(v) + " belongs to two parts";
      owner[v] = j;
    }
  }
  if (!plan.separator.empty()) {
    std::vector<char> in_sep(static_cast<std::size_t>(graph.n), 0);
    for (const Index s : plan.separator) {
      if (owner[s] >= 0) return "separator vertex " + std::to_string(s) + " also belongs to a part";
      in_sep[s] = 1;
    }
    // Components of V \ S may touch at most one part.
    std::vector<Index> comp(static_cast<std::size_t>(graph.n), -1);
    for (Index v = 0; v < graph.n; ++v) {
      if (in_sep[v] || comp[v] >= 0) continue;
      Index seen_part = -1;
      std::deque<Index> q{v};
      comp[v] = v;
      while (!q.empty()) {
        const Index x = q.front();
        q.pop_front();
        if (owner[x] >= 0) {
          if (seen_part >= 0 && seen_part != owner[x])
            return "parts " + std::to_string(seen_part) + " and " + std::to_string(owner[x]) +
                   " are connected outside the separator";
          seen_part = owner[x];
        }
        for (const Index w : graph.adjacency[x])
          if (!in_sep[w] && comp[w] < 0) {
            comp[w] = v;
            q.push_back(w);
          }
      }
    }
  }
  if (plan.has_extensions()) {
    for (Index j = 0; j < plan.part_count(); ++j) {
      const auto& a = plan.parts[j];
      const auto& b = plan.extended[j];
      if (!std::includes(b.begin(), b.end(), a.begin(), a.end())) return "A_j not contained in B_j for j=" + std::to_string(j);
      std::vector<char> in_b(static_cast<std::size_t>(graph.n), 0);
      for (const Index v : b) in_b[v] = 1;
      std::vector<Index> frontier;
      for (const Index v : b)
        for (const Index w : graph.adjacency[v])
          if (!in_b[w]) frontier.push_back(w);
      std::sort(frontier.begin(), frontier.end());
      frontier.erase(std::unique(frontier.begin(), frontier.end()), frontier.end());
      if (frontier != plan.frontiers[j]) return "S_j != N(B_j) \\ B_j for j=" + std::to_string(j);
    }
  }
  return {};
}

std::string plan_to_json(const PartitionPlan& plan) {
  nlohmann::json j;
  j["v"] = 1;
  j["n"] = plan.n;
  j["overlap"] = plan.overlap;
  j["parts"] = plan.parts;
  j["extended"] = plan.extended;
  j["frontiers"] = plan.frontiers;
  j["separator"] = plan.separator;
  return j.dump();
}

PartitionPlan plan_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  PartitionPlan plan;
  plan.n = j.at("n").get<Index>();
  plan.overlap = j.at("overlap").get<int>();
  plan.parts = j.at("parts").get<std::vector<std::vector<Index>>>();
  plan.extended = j.at("extended").get<std::vector<std::vector<Index>>>();
  plan.frontiers = j.at("frontiers").get<std::vector<std::vector<Index>>>();
  plan.separator = j.at("separator").get<std::vector<Index>>();
  return plan;
}

}  // namespace gmrf
