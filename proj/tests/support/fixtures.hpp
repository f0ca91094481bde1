#pragma once

// Shared synthetic-world fixtures for tests.

#include <cmath>
#include <memory>
#include <vector>

#include "roro/backends.hpp"
#include "roro/gate.hpp"
#include "roro/prefdata.hpp"
#include "roro/rubric.hpp"
#include "roro/synthworld.hpp"

namespace fixture {

struct World {
  roro::synth::WorldConfig cfg;
  std::unique_ptr<roro::SimulatedBackend> srm, lrm;
  World() {
    roro::BackendSpec s, l;
    l.role = roro::Producer::LRM;
    l.param_count = 14e9;
    srm = std::make_unique<roro::SimulatedBackend>(s, cfg);
    lrm = std::make_unique<roro::SimulatedBackend>(l, cfg);
  }
};

// Pools and pairs from the five training-free policies, two rollouts each.
inline std::vector<roro::PreferenceGroup> preference_groups(std::size_t queries, std::uint64_t seed) {
  World w;
  roro::CollectOptions opt;
  opt.per_policy_count = 2;
  std::vector<roro::PreferenceGroup> out;
  for (const auto& q : roro::synth::generate_dataset(w.cfg, queries, seed)) {
    auto p = roro::collect_pool(q, roro::standard_policies(0.3, 0.3, std::exp(-0.3)), *w.srm, *w.lrm,
                                roro::EngineLimits{}, seed, opt);
    if (!p) continue;
    auto pairs = roro::build_pairs(*p, roro::seed_scorer(roro::seed_rubric()));
    out.push_back({std::move(*p), std::move(pairs)});
  }
  return out;
}

inline roro::HeldoutSet heldout_from(const std::vector<roro::PreferenceGroup>& groups) {
  std::vector<roro::TrajectoryPool> pools;
  std::vector<roro::PoolPairs> pairs;
  for (const auto& g : groups) {
    pools.push_back(g.pool);
    pairs.push_back({g.pool.query_id, g.pairs});
  }
  return roro::build_heldout(pools, pairs);
}

// Roughly 1,150 rollouts from 250 queries.
inline const roro::HeldoutSet& synthetic_heldout() {
  static const roro::HeldoutSet h = heldout_from(preference_groups(250, 77));
  return h;
}

}  // namespace fixture
