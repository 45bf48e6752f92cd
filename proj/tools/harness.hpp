// Experiment driver behind the gmrf command line: flat key=value config,
// model construction, estimator dispatch and the five subcommands.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gmrf/estimators.hpp"
#include "gmrf/model.hpp"
#include "gmrf/partition.hpp"

namespace gmrf::harness {

/// Bad flags, unknown keys, malformed values, missing inputs: exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Config {
 public:
  Config();

  /// key=value lines; '#' starts a comment.
  void load_file(const std::filesystem::path& path);
  /// One "key=value" override.
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  std::string str(const std::string& key) const;
  double real(const std::string& key) const;
  long integer(const std::string& key) const;
  std::vector<long> integers(const std::string& key) const;
  bool has_value(const std::string& key) const { return !str(key).empty(); }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

LatentModel build_model(const Config& config);

/// Partition plan for the configured estimator (separator plan for the
/// parallel estimators, extended covering plan for the overlapping one).
PartitionPlan make_plan(const SparseMatrix& q, const Config& config, Index slab_size);

struct EstimatorRun {
  MarginalResult result;
  std::optional<PartitionPlan> plan;
  /// Hop distance of every node to the interface its correction samples
  /// (−1 when the estimator has none).
  std::vector<Index> distance;
};

EstimatorSettings estimator_settings(const Config& config);
EstimatorRun run_estimator(const SparseMatrix& q, const Config& config, std::uint64_t seed, Index slab_size);

// Subcommands. Each writes into config "out" and returns the exit code.
int cmd_build(const Config& config);
int cmd_infer(const Config& config);
int cmd_sample(const Config& config);
int cmd_compare(const Config& config);
int cmd_bench(const Config& config);

}  // namespace gmrf::harness
