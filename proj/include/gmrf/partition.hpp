// Graph partitioning, overlap (halo) expansion and separators for the RBMC
// estimators.
#pragma once

#include <span>
#include <string>
#include <vector>

#include "gmrf/sparse.hpp"

namespace gmrf {

struct Graph {
  Index n = 0;
  std::vector<std::vector<Index>> adjacency;  // sorted, symmetric, no self-loops
};

enum class PartitionStrategy { temporal_interval, recursive_bisection };

struct PartitionOptions {
  PartitionStrategy strategy = PartitionStrategy::temporal_interval;
  /// Carve a global separator so that the parts are pairwise non-adjacent.
  bool with_separator = false;
  /// Vertices per time slab (temporal_interval); 1 for a chain.
  Index slab_size = 1;
};

/// Disjoint parts A_j, overlapped extensions B_j ⊇ A_j with frontiers
/// S_j = N(B_j) \ B_j, and an optional global separator.
struct PartitionPlan {
  std::vector<std::vector<Index>> parts;       // A_j
  std::vector<std::vector<Index>> extended;    // B_j
  std::vector<std::vector<Index>> frontiers;   // S_j
  std::vector<Index> separator;                // global S (may be empty)
  int overlap = 0;                             // l
  Index n = 0;

  Index part_count() const { return static_cast<Index>(parts.size()); }
  bool has_extensions() const { return extended.size() == parts.size() && !parts.empty(); }
};

Graph graph_from_precision(const SparseMatrix& q);

PartitionPlan partition(const Graph& graph, Index parts, const PartitionOptions& options);

/// B_j = l-hop closed neighbourhood of A_j, S_j = the (l+1)-hop shell.
PartitionPlan expand_overlap(const Graph& graph, PartitionPlan plan, int l);

/// Positions within B_j (sorted) of the vertices of A_j.
std::vector<Index> partition_of_unity(const PartitionPlan& plan, Index j);

/// Gives every global-separator vertex to the lowest-numbered part adjacent to
/// it, yielding a plan whose parts cover the graph.
PartitionPlan absorb_separator(const Graph& graph, PartitionPlan plan);

/// Breadth-first hop distance from `sources` (−1 when unreachable).
std::vector<Index> hop_distance(const Graph& graph, std::span<const Index> sources);

/// Checks the plan invariants against the graph; returns an empty string when
/// valid, otherwise a description of the first violation.
std::string validate_plan(const Graph& graph, const PartitionPlan& plan);

std::string plan_to_json(const PartitionPlan& plan);
PartitionPlan plan_from_json(const std::string& json);

}  // namespace gmrf
