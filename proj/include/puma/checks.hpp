#pragma once

// Property suites run by `puma selftest`. Each suite draws seeded random
// models and checks an identity of the inference and planning code.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "puma/prob.hpp"
#include "puma/world_model.hpp"

namespace puma::checks {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

/// Strictly positive random distribution over `space`.
Categorical random_categorical(const SpacePtr& space, std::mt19937_64& rng);
/// World model with random transition and observation counts.
WorldModel random_world_model(std::size_t n_states, std::size_t n_actions, std::size_t n_cues,
                              std::mt19937_64& rng);

/// F(q) >= -log evidence, equality at the exact posterior, and F(q*) <= F(q).
CheckResult free_energy_bound(std::uint64_t seed, int models = 1000, int q_per_model = 100);
/// H(q(s'|a)) - E[H(posterior)] == E[KL(posterior || q(s'|a))].
CheckResult mutual_information_identity(std::uint64_t seed, int models = 1000);
/// Positive rescaling of (lambda_e, lambda_p) leaves the argmin unchanged.
CheckResult efe_scale_invariance(std::uint64_t seed, int fixtures = 1000);
/// Every fused belief and every world-model row stays a valid distribution.
CheckResult normalization_closure(std::uint64_t seed, int trials = 500);

std::vector<CheckResult> run_all(std::uint64_t seed);

}  // namespace puma::checks
