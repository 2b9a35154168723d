#pragma once

// Undersampling mitigation: choose the row subset that minimises a
// discrimination measure, with a generational genetic algorithm over
// selection masks and an exhaustive oracle for small instances.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fairdisc/data.hpp"
#include "fairdisc/kernels.hpp"
#include "fairdisc/measures.hpp"

namespace fairdisc {

/// Fitness of a selection on which the measure is undefined. Exceeds every
/// feasible value since all disparity-based measures are <= 1.
inline constexpr double kPenaltyEpsilon = 1e-6;
inline constexpr double kPenalty = 1.0 + kPenaltyEpsilon;

struct GAConfig {
  std::size_t population_size = 200;
  std::size_t generations = 400;
  std::size_t tournament_size = 3;
  double crossover_rate = 0.9;  // uniform crossover, per-bit swap probability 0.5
  std::optional<double> mutation_rate;  // per bit; 1/n when unset
  std::size_t elites = 2;
  double init_keep_probability = 0.8;
  std::uint64_t seed = 0;
  bool parallel_fitness = false;
  std::size_t threads = 0;  // 0: hardware concurrency
  std::size_t min_subgroups = 0;  // 0: subgroups may be removed freely

  // Called with (generation, best fitness so far) for generations 0..G.
  std::function<void(std::size_t, double)> progress;

  void validate() const;
  static GAConfig from_json(const nlohmann::json& j);
  /// Overlays the keys present in `j` onto `base`.
  static GAConfig from_json(const nlohmann::json& j, GAConfig base);
  nlohmann::json to_json() const;
};

struct MitigationResult {
  SelectionMask mask;
  double psi_before = 0.0;
  double psi_after = 0.0;
  std::size_t subgroups_before = 0;
  std::size_t subgroups_after = 0;
  std::vector<double> best_fitness_history;  // generation 0..G
  std::size_t rows_kept = 0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static MitigationResult from_json(const nlohmann::json& j);
};

/// Penalised objective from an already computed score.
double fitness_from_score(const Score& s, const MeasureSpec& spec, std::size_t subgroups_present,
                          std::size_t min_subgroups);

/// Reference objective: psi of the selected rows, or kPenalty when the
/// measure is undefined there (empty selection, fewer than two available
/// groups under the `zero` policy, or fewer than `min_subgroups` subgroups).
double fitness(const SelectionMask& mask, const Dataset& dataset, const MeasureSpec& spec,
               std::size_t min_subgroups = 0);

/// Bitset form of `fitness`. Rows are regrouped so every subgroup occupies a
/// contiguous bit range; counting a chromosome is one pass of the masked
/// popcount kernel over the packed words.
class FitnessEvaluator {
 public:
  FitnessEvaluator(const Dataset& dataset, const MeasureSpec& spec, std::size_t min_subgroups = 0,
                   const simd::KernelTable& kernels = simd::active_kernels());

  std::size_t rows() const noexcept { return permutation_.size(); }
  std::size_t words() const noexcept { return (rows() + 63) / 64; }

  /// Original-order mask <-> packed chromosome in evaluator order.
  std::vector<std::uint64_t> pack(const SelectionMask& mask) const;
  SelectionMask unpack(std::span<const std::uint64_t> packed) const;

  double evaluate(std::span<const std::uint64_t> packed) const;
  double evaluate(const SelectionMask& mask) const { return evaluate(pack(mask)); }

  /// Lexicographic order of the two chromosomes read in original row order;
  /// negative when `a` is smaller, 0 when equal.
  int compare_lexicographic(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) const;

 private:
  struct Range {
    std::size_t begin;
    std::size_t end;
  };

  const simd::KernelTable* kernels_;
  MeasureSpec spec_;
  ProtectedSchema schema_;
  std::size_t min_subgroups_;
  double reference_rate_ = 0.0;
  std::vector<std::size_t> permutation_;  // evaluator position -> original row
  std::vector<std::size_t> position_;     // original row -> evaluator position
  std::vector<std::uint64_t> outcome_bits_;
  std::vector<Subgroup> subgroups_;
  std::vector<Range> ranges_;
};

/// Strict weak order used by the GA and the oracle: lower fitness, then more
/// rows kept, then the lexicographically smaller mask.
bool ranks_before(double fitness_a, const SelectionMask& a, double fitness_b, const SelectionMask& b);

MitigationResult mitigate(const Dataset& dataset, const MeasureSpec& spec, const GAConfig& config);

/// Exhaustive search over all non-empty masks; n <= 20.
std::pair<SelectionMask, double> brute_force_optimum(const Dataset& dataset, const MeasureSpec& spec,
                                                     std::size_t min_subgroups = 0);

}  // namespace fairdisc
