#pragma once

// Synthetic corpora.
//
// simulate() samples from the latent-factor generative process: factor
// distributions over sequences, objects and bins are drawn once from their
// Dirichlet priors; each trajectory draws its own factor mixture, and each
// of its units draws a factor and then a sequence, an object and a bin
// from that factor. Objects are drawn per unit as the model states, so a
// simulated trajectory may mix objects.
//
// To make simulated corpora usable for next-location prediction, sequence
// ids are given concrete location tuples: sequences are grouped `fanout`
// at a time under a shared r-location context and differ only in their
// final location.
//
// simulate_routes() produces raw passage records that follow a fixed
// successor function, so every r-location context has exactly one
// continuation.

#include <cmath>
#include <string>
#include <vector>

#include "tralfm/corpus.hpp"
#include "tralfm/model.hpp"
#include "tralfm/rng.hpp"

namespace tralfm {

struct SimulationSpec {
  std::size_t sequences = 200;
  std::size_t objects = 20;
  std::size_t bins = 24;
  std::size_t trajectories = 2000;
  std::size_t units_per_trajectory = 10;
  std::size_t fanout = 4;
  std::uint64_t seed = 1;
};

struct Simulation {
  Corpus corpus;
  ModelParams truth;
  std::vector<std::vector<Id>> assignments;
};

namespace detail {

inline void sample_dirichlet_rows(Rng& rng, Matrix<double>& m, const std::vector<double>& prior) {
  for (std::size_t r = 0; r < m.rows(); ++r) rng.dirichlet(prior, m.row(r));
}

// Assigns r+1 location tuples to sequence ids: id s sits under context
// s / fanout (written in base L over r digits) and ends at a location that
// differs from every sibling's.
inline void synthetic_sequence_vocab(Vocabularies& vocab, std::size_t n_sequences, std::size_t fanout) {
  const auto r = static_cast<std::size_t>(vocab.order);
  fanout = std::max<std::size_t>(1, std::min(fanout, n_sequences));
  const std::size_t contexts = (n_sequences + fanout - 1) / fanout;
  std::size_t L = std::max<std::size_t>(2, fanout + 1);
  auto capacity = [&](std::size_t base) {
    long double c = 1;
    for (std::size_t i = 0; i < r; ++i) c *= static_cast<long double>(base);
    return c;
  };
  while (capacity(L) < static_cast<long double>(contexts)) ++L;
  for (std::size_t l = 0; l < L; ++l) vocab.locations.intern("L" + std::to_string(l));

  SequenceKey key(r + 1);
  for (std::size_t s = 0; s < n_sequences; ++s) {
    std::size_t c = s / fanout;
    for (std::size_t j = r; j-- > 0;) {
      key[j] = static_cast<Id>(c % L);
      c /= L;
    }
    key[r] = static_cast<Id>((key[r - 1] + 1 + s % fanout) % L);
    vocab.sequences.intern(key);
  }
}

}  // namespace detail

inline Simulation simulate(const ModelConfig& cfg, const SimulationSpec& spec) {
  cfg.validate();
  if (spec.sequences < 1 || spec.objects < 1 || spec.bins < 1 || spec.trajectories < 1 ||
      spec.units_per_trajectory < 1)
    throw UsageError("simulation sizes must all be >= 1");
  if (spec.bins % 2 != 0 || !TimeBinScheme::valid_bin_hours(static_cast<int>(48 / spec.bins)) ||
      48 % spec.bins != 0)
    throw UsageError("bin count must be 2 * (24 / bin_hours) for a valid bin width");

  Simulation sim;
  Corpus& corpus = sim.corpus;
  corpus.vocab.order = cfg.order;
  corpus.scheme.bin_hours = static_cast<int>(48 / spec.bins);
  detail::synthetic_sequence_vocab(corpus.vocab, spec.sequences, spec.fanout);
  const std::size_t n_objects = cfg.components.object ? spec.objects : 1;
  for (std::size_t o = 0; o < n_objects; ++o) corpus.vocab.objects.intern("O" + std::to_string(o));

  const Dims d{static_cast<std::size_t>(cfg.num_factors), spec.trajectories, spec.sequences, n_objects, spec.bins};
  const ResolvedPriors pr(cfg, d);
  Rng rng(spec.seed);

  ModelParams& truth = sim.truth;
  truth.phi = Matrix<double>(d.factors, d.sequences);
  truth.psi = Matrix<double>(d.factors, d.objects, 1.0);
  truth.phi_time = Matrix<double>(d.factors, d.bins);
  truth.theta = Matrix<double>(d.trajectories, d.factors);
  detail::sample_dirichlet_rows(rng, truth.phi, pr.beta);
  if (cfg.components.object) detail::sample_dirichlet_rows(rng, truth.psi, pr.eta);
  if (cfg.components.time) {
    detail::sample_dirichlet_rows(rng, truth.phi_time, pr.gamma);
  } else {
    // a single constant bin; the time channel carries no information
    truth.phi_time.fill(0.0);
    for (std::size_t k = 0; k < d.factors; ++k) truth.phi_time(k, 0) = 1.0;
  }
  detail::sample_dirichlet_rows(rng, truth.theta, pr.alpha);

  corpus.trajectories.resize(d.trajectories);
  sim.assignments.resize(d.trajectories);
  for (std::size_t m = 0; m < d.trajectories; ++m) {
    auto& traj = corpus.trajectories[m];
    traj.units.reserve(spec.units_per_trajectory);
    for (std::size_t i = 0; i < spec.units_per_trajectory; ++i) {
      const auto k = rng.categorical(truth.theta.row(m), 1.0);
      const auto s = rng.categorical(truth.phi.row(k), 1.0);
      const auto o = rng.categorical(truth.psi.row(k), 1.0);
      const auto t = rng.categorical(truth.phi_time.row(k), 1.0);
      traj.units.push_back({static_cast<Id>(s), static_cast<Id>(o), static_cast<Id>(t)});
      sim.assignments[m].push_back(static_cast<Id>(k));
    }
  }
  return sim;
}

struct RouteSpec {
  std::size_t locations = 30;
  std::size_t objects = 10;
  std::size_t trajectories = 500;
  std::size_t length = 8;  // locations per trajectory
  int order = 2;
  Timestamp start = 1704067200;  // 2024-01-01T00:00:00Z
  Timestamp spacing_seconds = 300;
  std::uint64_t seed = 1;
};

/// Passage records that follow a fixed, seeded successor function of the
/// last `order` locations.
inline std::vector<PassageRecord> simulate_routes(const RouteSpec& spec) {
  if (spec.locations < 2 || spec.length < static_cast<std::size_t>(spec.order) + 1 || spec.objects < 1)
    throw UsageError("route simulation needs >= 2 locations and length >= order + 1");
  Rng rng(spec.seed);
  const auto L = spec.locations;
  const auto r = static_cast<std::size_t>(spec.order);
  std::size_t contexts = 1;
  for (std::size_t i = 0; i < r; ++i) contexts *= L;
  std::vector<Id> successor(contexts);
  for (auto& next : successor) next = static_cast<Id>(rng.below(L));

  std::vector<PassageRecord> out;
  Timestamp clock = spec.start;
  for (std::size_t m = 0; m < spec.trajectories; ++m) {
    const auto object = "car" + std::to_string(rng.below(spec.objects));
    std::vector<Id> path;
    for (std::size_t i = 0; i < r; ++i) path.push_back(static_cast<Id>(rng.below(L)));
    while (path.size() < spec.length) {
      std::size_t ctx = 0;
      for (std::size_t j = path.size() - r; j < path.size(); ++j) ctx = ctx * L + path[j];
      path.push_back(successor[ctx]);
    }
    clock += static_cast<Timestamp>(rng.below(86400));
    for (std::size_t i = 0; i < path.size(); ++i)
      out.push_back({object, "loc" + std::to_string(path[i]), clock + static_cast<Timestamp>(i) * spec.spacing_seconds, 0});
    clock += static_cast<Timestamp>(path.size()) * spec.spacing_seconds + 2 * 3600;
  }
  return out;
}

}  // namespace tralfm
