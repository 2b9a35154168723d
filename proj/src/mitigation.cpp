#include "fairdisc/mitigation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "fairdisc/error.hpp"
#include "parallel.hpp"

namespace fairdisc {

// ---- GAConfig ------------------------------------------------------------------------

void GAConfig::validate() const {
  auto probability = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw_error(ErrorKind::Configuration, std::string(what) + " must lie in [0, 1]");
  };
  if (population_size == 0) throw_error(ErrorKind::Configuration, "population_size must be >= 1");
  if (population_size < elites + 1) {
    throw_error(ErrorKind::Configuration, "population_size must exceed the number of elites");
  }
  if (tournament_size == 0) throw_error(ErrorKind::Configuration, "tournament_size must be >= 1");
  probability(crossover_rate, "crossover_rate");
  probability(init_keep_probability, "init_keep_probability");
  if (mutation_rate) probability(*mutation_rate, "mutation_rate");
}

GAConfig GAConfig::from_json(const nlohmann::json& j) { return from_json(j, GAConfig{}); }

GAConfig GAConfig::from_json(const nlohmann::json& j, GAConfig c) {
  try {
    c.population_size = j.value("population_size", c.population_size);
    c.generations = j.value("generations", c.generations);
    c.tournament_size = j.value("tournament_size", c.tournament_size);
    c.crossover_rate = j.value("crossover_rate", c.crossover_rate);
    if (j.contains("mutation_rate") && !j.at("mutation_rate").is_null()) {
      c.mutation_rate = j.at("mutation_rate").get<double>();
    }
    c.elites = j.value("elites", c.elites);
    c.init_keep_probability = j.value("init_keep_probability", c.init_keep_probability);
    c.seed = j.value("seed", c.seed);
    c.parallel_fitness = j.value("parallel_fitness", c.parallel_fitness);
    c.threads = j.value("threads", c.threads);
    c.min_subgroups = j.value("min_subgroups", c.min_subgroups);
  } catch (const nlohmann::json::exception& e) {
    throw_error(ErrorKind::Configuration, std::string("ga config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json GAConfig::to_json() const {
  nlohmann::json j = {{"population_size", population_size},
                      {"generations", generations},
                      {"tournament_size", tournament_size},
                      {"crossover_rate", crossover_rate},
                      {"elites", elites},
                      {"init_keep_probability", init_keep_probability},
                      {"seed", seed},
                      {"min_subgroups", min_subgroups}};
  j["mutation_rate"] = mutation_rate ? nlohmann::json(*mutation_rate) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json MitigationResult::to_json() const {
  return {{"mask", mask.to_rle()},
          {"rows_total", mask.size()},
          {"rows_kept", rows_kept},
          {"psi_before", psi_before},
          {"psi_after", psi_after},
          {"subgroups_before", subgroups_before},
          {"subgroups_after", subgroups_after},
          {"best_fitness_history", best_fitness_history},
          {"seed", seed}};
}

MitigationResult MitigationResult::from_json(const nlohmann::json& j) {
  MitigationResult r;
  try {
    r.mask = SelectionMask::from_rle(j.at("mask").get<std::string>());
    r.rows_kept = j.at("rows_kept").get<std::size_t>();
    r.psi_before = j.at("psi_before").get<double>();
    r.psi_after = j.at("psi_after").get<double>();
    r.subgroups_before = j.at("subgroups_before").get<std::size_t>();
    r.subgroups_after = j.at("subgroups_after").get<std::size_t>();
    r.best_fitness_history = j.at("best_fitness_history").get<std::vector<double>>();
    r.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw_error(ErrorKind::Data, std::string("mitigation result: ") + e.what());
  }
  if (r.mask.count() != r.rows_kept) throw_error(ErrorKind::Data, "mitigation result: rows_kept does not match mask");
  return r;
}

// ---- Objective --------------------------------------------------------------------------

double fitness_from_score(const Score& s, const MeasureSpec& spec, std::size_t subgroups_present,
                          std::size_t min_subgroups) {
  if (!s.value) return kPenalty;
  if (spec.policy == SingleGroupPolicy::Zero && s.available < 2) return kPenalty;
  if (subgroups_present < min_subgroups) return kPenalty;
  return *s.value;
}

double fitness(const SelectionMask& mask, const Dataset& dataset, const MeasureSpec& spec,
               std::size_t min_subgroups) {
  if (mask.size() != dataset.rows()) {
    throw_error(ErrorKind::ContractViolation, "mask length " + std::to_string(mask.size()) +
                                                  " != row count " + std::to_string(dataset.rows()));
  }
  const auto counts = count_joint(dataset, spec.use_condition, &mask);
  const double reference = spec.p_expect.value_or(base_rate(dataset, spec.use_condition));
  const Score s = score(counts, dataset.schema(), spec, reference);
  return fitness_from_score(s, spec, counts.cells.size(), min_subgroups);
}

// ---- FitnessEvaluator ---------------------------------------------------------------------

FitnessEvaluator::FitnessEvaluator(const Dataset& dataset, const MeasureSpec& spec,
                                   std::size_t min_subgroups, const simd::KernelTable& kernels)
    : kernels_(&kernels), spec_(spec), schema_(dataset.schema()), min_subgroups_(min_subgroups) {
  spec_.validate(schema_);
  if (spec_.use_condition && !dataset.has_condition()) {
    throw_error(ErrorKind::Configuration, "measure uses a condition but the dataset has none");
  }
  const std::size_t n = dataset.rows();
  reference_rate_ = spec_.p_expect.value_or(base_rate(dataset, spec_.use_condition));

  // Eligible rows grouped by subgroup key, ineligible (condition = 0) rows last.
  const auto keys = subgroup_keys(dataset);
  constexpr auto kIneligible = std::numeric_limits<std::uint64_t>::max();
  std::vector<std::uint64_t> sort_key(keys);
  if (spec_.use_condition) {
    const auto cond = dataset.condition();
    for (std::size_t r = 0; r < n; ++r) {
      if (!cond[r]) sort_key[r] = kIneligible;
    }
  }
  permutation_.resize(n);
  std::iota(permutation_.begin(), permutation_.end(), std::size_t{0});
  std::stable_sort(permutation_.begin(), permutation_.end(),
                   [&](std::size_t a, std::size_t b) { return sort_key[a] < sort_key[b]; });
  position_.resize(n);
  for (std::size_t pos = 0; pos < n; ++pos) position_[permutation_[pos]] = pos;

  outcome_bits_.assign(words(), 0);
  const auto outcome = dataset.outcome();
  for (std::size_t pos = 0; pos < n; ++pos) {
    if (outcome[permutation_[pos]]) outcome_bits_[pos / 64] |= std::uint64_t{1} << (pos % 64);
  }
  for (std::size_t pos = 0; pos < n;) {
    const auto key = sort_key[permutation_[pos]];
    if (key == kIneligible) break;
    std::size_t end = pos;
    while (end < n && sort_key[permutation_[end]] == key) ++end;
    subgroups_.push_back(decode_subgroup_key(schema_, key));
    ranges_.push_back({pos, end});
    pos = end;
  }
}

std::vector<std::uint64_t> FitnessEvaluator::pack(const SelectionMask& mask) const {
  if (mask.size() != rows()) {
    throw_error(ErrorKind::ContractViolation, "mask length " + std::to_string(mask.size()) +
                                                  " != row count " + std::to_string(rows()));
  }
  std::vector<std::uint64_t> packed(words(), 0);
  for (std::size_t r = 0; r < rows(); ++r) {
    if (mask[r]) {
      const auto pos = position_[r];
      packed[pos / 64] |= std::uint64_t{1} << (pos % 64);
    }
  }
  return packed;
}

SelectionMask FitnessEvaluator::unpack(std::span<const std::uint64_t> packed) const {
  std::vector<std::uint8_t> bits(rows(), 0);
  for (std::size_t pos = 0; pos < rows(); ++pos) {
    bits[permutation_[pos]] = static_cast<std::uint8_t>((packed[pos / 64] >> (pos % 64)) & 1U);
  }
  return SelectionMask(std::move(bits));
}

double FitnessEvaluator::evaluate(std::span<const std::uint64_t> packed) const {
  JointCounts counts;
  counts.subgroups = subgroups_;
  counts.cells.resize(ranges_.size());
  std::size_t present = 0;
  for (std::size_t s = 0; s < ranges_.size(); ++s) {
    const auto c = simd::range_counts(*kernels_, packed, outcome_bits_, ranges_[s].begin, ranges_[s].end);
    counts.cells[s] = {c.favorable, c.selected};
    present += c.selected > 0 ? 1 : 0;
  }
  const Score s = score(counts, schema_, spec_, reference_rate_);
  return fitness_from_score(s, spec_, present, min_subgroups_);
}

int FitnessEvaluator::compare_lexicographic(std::span<const std::uint64_t> a,
                                            std::span<const std::uint64_t> b) const {
  std::size_t first_row = std::numeric_limits<std::size_t>::max();
  std::size_t first_pos = 0;
  for (std::size_t w = 0; w < a.size(); ++w) {
    for (std::uint64_t diff = a[w] ^ b[w]; diff != 0; diff &= diff - 1) {
      const std::size_t pos = w * 64 + static_cast<std::size_t>(std::countr_zero(diff));
      if (permutation_[pos] < first_row) {
        first_row = permutation_[pos];
        first_pos = pos;
      }
    }
  }
  if (first_row == std::numeric_limits<std::size_t>::max()) return 0;
  const bool a_has = (a[first_pos / 64] >> (first_pos % 64)) & 1U;
  return a_has ? 1 : -1;
}

bool ranks_before(double fitness_a, const SelectionMask& a, double fitness_b, const SelectionMask& b) {
  if (fitness_a != fitness_b) return fitness_a < fitness_b;
  const auto kept_a = a.count();
  const auto kept_b = b.count();
  if (kept_a != kept_b) return kept_a > kept_b;
  const auto bits_a = a.bits();
  const auto bits_b = b.bits();
  return std::lexicographical_compare(bits_a.begin(), bits_a.end(), bits_b.begin(), bits_b.end());
}

// ---- Genetic algorithm -------------------------------------------------------------------

namespace {

struct Individual {
  std::vector<std::uint64_t> genes;
  double fitness = kPenalty;
  std::size_t kept = 0;
};

std::size_t popcount(std::span<const std::uint64_t> genes) {
  return static_cast<std::size_t>(simd::active_kernels().popcount(genes.data(), genes.size()));
}

class Evolution {
 public:
  Evolution(const FitnessEvaluator& evaluator, const GAConfig& config)
      : eval_(evaluator),
        config_(config),
        n_(evaluator.rows()),
        words_(evaluator.words()),
        mutation_rate_(config.mutation_rate.value_or(1.0 / static_cast<double>(evaluator.rows()))),
        threads_(config.parallel_fitness ? detail::resolve_threads(config.threads) : 1) {}

  Individual run(std::vector<double>& history) {
    std::vector<Individual> population(config_.population_size);
    for_each_individual(population.size(), [&](std::size_t i) {
      auto rng = stream(0, i);
      population[i] = i == 0 ? all_ones() : random_individual(rng);
      finish(population[i]);
    });
    Individual best = population[0];
    update_best(population, best);
    history.push_back(best.fitness);
    if (config_.progress) config_.progress(0, best.fitness);

    std::vector<Individual> next(config_.population_size);
    std::vector<std::size_t> order(population.size());
    for (std::size_t gen = 1; gen <= config_.generations; ++gen) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return better(population[a], population[b]);
      });
      const std::size_t elites = std::min(config_.elites, population.size());
      for (std::size_t e = 0; e < elites; ++e) next[e] = population[order[e]];
      for_each_individual(population.size() - elites, [&](std::size_t j) {
        const std::size_t i = elites + j;
        auto rng = stream(gen, i);
        next[i] = offspring(population, rng);
        finish(next[i]);
      });
      population.swap(next);
      update_best(population, best);
      history.push_back(best.fitness);
      if (config_.progress) config_.progress(gen, best.fitness);
    }
    return best;
  }

 private:
  // Independent stream per (seed, generation, individual): results do not
  // depend on how evaluations are scheduled.
  std::mt19937_64 stream(std::size_t generation, std::size_t individual) const {
    std::seed_seq seq{static_cast<std::uint32_t>(config_.seed), static_cast<std::uint32_t>(config_.seed >> 32),
                      static_cast<std::uint32_t>(generation), static_cast<std::uint32_t>(individual)};
    return std::mt19937_64(seq);
  }

  template <typename Fn>
  void for_each_individual(std::size_t count, Fn&& fn) {
    detail::parallel_for(count, threads_, fn);
  }

  bool better(const Individual& a, const Individual& b) const {
    if (a.fitness != b.fitness) return a.fitness < b.fitness;
    if (a.kept != b.kept) return a.kept > b.kept;
    return eval_.compare_lexicographic(a.genes, b.genes) < 0;
  }

  void update_best(const std::vector<Individual>& population, Individual& best) const {
    for (const auto& ind : population) {
      if (better(ind, best)) best = ind;
    }
  }

  void finish(Individual& ind) const {
    ind.kept = popcount(ind.genes);
    ind.fitness = eval_.evaluate(ind.genes);
  }

  void clear_tail(std::vector<std::uint64_t>& genes) const {
    if (n_ % 64 != 0) genes.back() &= (std::uint64_t{1} << (n_ % 64)) - 1;
  }

  Individual all_ones() const {
    Individual ind;
    ind.genes.assign(words_, ~std::uint64_t{0});
    clear_tail(ind.genes);
    return ind;
  }

  Individual random_individual(std::mt19937_64& rng) const {
    Individual ind;
    ind.genes.assign(words_, 0);
    std::bernoulli_distribution keep(config_.init_keep_probability);
    for (std::size_t pos = 0; pos < n_; ++pos) {
      if (keep(rng)) ind.genes[pos / 64] |= std::uint64_t{1} << (pos % 64);
    }
    return ind;
  }

  const Individual& tournament(const std::vector<Individual>& population, std::mt19937_64& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, population.size() - 1);
    const Individual* winner = &population[pick(rng)];
    for (std::size_t t = 1; t < config_.tournament_size; ++t) {
      const Individual& challenger = population[pick(rng)];
      if (better(challenger, *winner)) winner = &challenger;
    }
    return *winner;
  }

  Individual offspring(const std::vector<Individual>& population, std::mt19937_64& rng) const {
    const Individual& a = tournament(population, rng);
    const Individual& b = tournament(population, rng);
    Individual child;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (unit(rng) < config_.crossover_rate) {
      child.genes.resize(words_);
      for (std::size_t w = 0; w < words_; ++w) {
        const std::uint64_t from_a = rng();
        child.genes[w] = (a.genes[w] & from_a) | (b.genes[w] & ~from_a);
      }
    } else {
      child.genes = a.genes;
    }
    mutate(child.genes, rng);
    return child;
  }

  void mutate(std::vector<std::uint64_t>& genes, std::mt19937_64& rng) const {
    if (mutation_rate_ <= 0.0) return;
    if (mutation_rate_ >= 1.0) {
      for (auto& w : genes) w = ~w;
      clear_tail(genes);
      return;
    }
    // Gaps between flipped bits are geometric.
    std::geometric_distribution<std::size_t> gap(mutation_rate_);
    for (std::size_t pos = gap(rng); pos < n_; pos += gap(rng) + 1) {
      genes[pos / 64] ^= std::uint64_t{1} << (pos % 64);
    }
  }

  const FitnessEvaluator& eval_;
  const GAConfig& config_;
  std::size_t n_;
  std::size_t words_;
  double mutation_rate_;
  std::size_t threads_;
};

}  // namespace

MitigationResult mitigate(const Dataset& dataset, const MeasureSpec& spec, const GAConfig& config) {
  config.validate();
  if (dataset.rows() < 2) throw_error(ErrorKind::Data, "mitigation needs at least 2 rows");
  MitigationResult result;
  result.seed = config.seed;
  result.psi_before = measure(dataset, spec);
  result.subgroups_before = enumerate_subgroups(dataset).size();

  const FitnessEvaluator evaluator(dataset, spec, config.min_subgroups);
  Evolution evolution(evaluator, config);
  const Individual best = evolution.run(result.best_fitness_history);

  result.mask = evaluator.unpack(best.genes);
  result.rows_kept = best.kept;
  result.psi_after = measure(dataset, spec, &result.mask);
  result.subgroups_after = enumerate_subgroups(dataset, &result.mask).size();
  return result;
}

std::pair<SelectionMask, double> brute_force_optimum(const Dataset& dataset, const MeasureSpec& spec,
                                                     std::size_t min_subgroups) {
  const std::size_t n = dataset.rows();
  if (n > 20) throw_error(ErrorKind::Capacity, "brute force is limited to 20 rows, got " + std::to_string(n));
  if (n == 0) throw_error(ErrorKind::Data, "brute force needs at least 1 row");
  std::optional<std::pair<SelectionMask, double>> best;
  std::vector<std::uint8_t> bits(n);
  for (std::uint32_t code = 1; code < (std::uint32_t{1} << n); ++code) {
    for (std::size_t i = 0; i < n; ++i) bits[i] = (code >> i) & 1U;
    SelectionMask mask(bits);
    const double f = fitness(mask, dataset, spec, min_subgroups);
    if (!best || ranks_before(f, mask, best->second, best->first)) best.emplace(std::move(mask), f);
  }
  return *best;
}

}  // namespace fairdisc
