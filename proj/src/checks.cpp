#include "puma/checks.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "puma/belief.hpp"
#include "puma/efe.hpp"

namespace puma::checks {

namespace {

SpacePtr named_space(const char* prefix, std::size_t n) {
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < n; ++i) labels.push_back(prefix + std::to_string(i));
  return LabelSpace::make(std::move(labels));
}

std::size_t draw_size(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

template <typename F>
CheckResult timed(std::string name, F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r{std::move(name), false, {}, 0.0};
  try {
    r.detail = body(r.pass);
  } catch (const std::exception& e) {
    r.pass = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

}  // namespace

Categorical random_categorical(const SpacePtr& space, std::mt19937_64& rng) {
  std::gamma_distribution<double> g(1.0, 1.0);
  std::vector<double> w(space->size());
  for (auto& x : w) x = g(rng) + 1e-3;
  return normalize(w, space);
}

WorldModel random_world_model(std::size_t n_states, std::size_t n_actions, std::size_t n_cues,
                              std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 5.0);
  WorldModel wm(named_space("s", n_states), named_space("a", n_actions), named_space("o", n_cues),
                0.5 + u(rng) / 5.0, 0.5 + u(rng) / 5.0);
  for (std::size_t s = 0; s < n_states; ++s) {
    for (std::size_t a = 0; a < n_actions; ++a)
      for (std::size_t s2 = 0; s2 < n_states; ++s2) wm.add_transition_count(s, a, s2, u(rng));
    for (std::size_t o = 0; o < n_cues; ++o) wm.add_observation_count(s, o, u(rng));
  }
  return wm;
}

CheckResult free_energy_bound(std::uint64_t seed, int models, int q_per_model) {
  return timed("free_energy_bound", [&](bool& pass) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(1e-3, 1.0);
    double worst_gap = INFINITY, worst_eq = 0.0;
    long violations = 0;
    for (int m = 0; m < models; ++m) {
      const auto space = named_space("s", draw_size(rng, 2, 6));
      const Categorical prior = random_categorical(space, rng);
      ObservationLikelihood lik;
      for (std::size_t i = 0; i < space->size(); ++i) lik.values.push_back(u(rng));
      const double surprise = -log_evidence(prior, lik);
      const Categorical post = bayes_update(prior, lik);
      const double f_star = free_energy(post, prior, lik);
      worst_eq = std::max(worst_eq, std::abs(f_star - surprise));
      for (int k = 0; k < q_per_model; ++k) {
        const double f = free_energy(random_categorical(space, rng), prior, lik);
        worst_gap = std::min(worst_gap, f - surprise);
        if (f < surprise - 1e-9 || f_star > f + 1e-9) ++violations;
      }
    }
    pass = violations == 0 && worst_eq <= 1e-9;
    return "models=" + std::to_string(models) + " violations=" + std::to_string(violations) +
           " max|F(q*)+log ev|=" + fmt(worst_eq) + " min(F-surprise)=" + fmt(worst_gap);
  });
}

CheckResult mutual_information_identity(std::uint64_t seed, int models) {
  return timed("mutual_information_identity", [&](bool& pass) {
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    for (int m = 0; m < models; ++m) {
      const WorldModel wm =
          random_world_model(draw_size(rng, 2, 5), draw_size(rng, 1, 4), draw_size(rng, 2, 6), rng);
      const Categorical q_next = random_categorical(wm.states(), rng);
      double rhs = 0.0;
      for (std::size_t o = 0; o < wm.cues()->size(); ++o) {
        ObservationLikelihood lik{wm.cue_likelihood(o)};
        double p_o = 0.0;
        for (std::size_t s = 0; s < q_next.size(); ++s) p_o += q_next[s] * lik.values[s];
        rhs += p_o * kl_divergence(bayes_update(q_next, lik), q_next);
      }
      const double lhs = entropy(q_next) - expected_posterior_entropy(q_next, wm);
      worst = std::max(worst, std::abs(lhs - rhs));
    }
    pass = worst <= 1e-9;
    return "models=" + std::to_string(models) + " max|lhs-rhs|=" + fmt(worst);
  });
}

CheckResult efe_scale_invariance(std::uint64_t seed, int fixtures) {
  return timed("efe_scale_invariance", [&](bool& pass) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> lam(0.0, 1.0);
    std::uniform_real_distribution<double> logc(-4.0, 4.0);
    int changed = 0;
    for (int f = 0; f < fixtures; ++f) {
      const WorldModel wm =
          random_world_model(draw_size(rng, 2, 5), draw_size(rng, 2, 6), draw_size(rng, 2, 6), rng);
      const Categorical belief = random_categorical(wm.states(), rng);
      const PreferenceModel pref = PreferenceModel::from_probs(random_categorical(wm.cues(), rng));
      const EfeWeights w{lam(rng) + 1e-3, lam(rng) + 1e-3};
      const double c = std::exp(logc(rng));
      const auto a = select_action(belief, wm, *wm.actions(), pref, w).chosen;
      const auto b = select_action(belief, wm, *wm.actions(), pref, {c * w.lambda_e, c * w.lambda_p}).chosen;
      if (a != b) ++changed;
    }
    pass = changed == 0;
    return "fixtures=" + std::to_string(fixtures) + " argmin changes=" + std::to_string(changed);
  });
}

CheckResult normalization_closure(std::uint64_t seed, int trials) {
  return timed("normalization_closure", [&](bool& pass) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> words(0, 40);
    long bad = 0;
    auto valid = [](const Categorical& c) {
      double sum = 0.0;
      for (double p : c.probs()) {
        if (!(p >= 0.0)) return false;
        sum += p;
      }
      return std::abs(sum - 1.0) <= kProbTolerance;
    };
    for (int t = 0; t < trials; ++t) {
      WorldModel wm = random_world_model(draw_size(rng, 2, 5), draw_size(rng, 1, 4), draw_size(rng, 2, 6), rng);
      const Categorical q = random_categorical(wm.states(), rng);
      const Widened wd = widen_observation(random_categorical(wm.states(), rng), words(rng), u(rng) < 0.3);
      const Categorical fused = fuse(wd.dist, q, u(rng));
      if (!valid(fused) || !valid(wd.dist)) ++bad;
      const std::size_t a = draw_size(rng, 0, wm.actions()->size() - 1);
      const std::size_t o = draw_size(rng, 0, wm.cues()->size() - 1);
      wm.update({q, wm.actions()->label(a), fused, wm.cues()->label(o)},
                u(rng) < 0.5 ? CountMode::Soft : CountMode::Hard);
      for (std::size_t s = 0; s < wm.states()->size(); ++s) {
        if (!valid(wm.observation_prob(s)) || !valid(wm.transition_prob(s, a))) ++bad;
      }
    }
    pass = bad == 0;
    return "trials=" + std::to_string(trials) + " invalid=" + std::to_string(bad);
  });
}

std::vector<CheckResult> run_all(std::uint64_t seed) {
  return {free_energy_bound(seed), mutual_information_identity(seed), efe_scale_invariance(seed),
          normalization_closure(seed)};
}

}  // namespace puma::checks
