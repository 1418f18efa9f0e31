#pragma once

// Shared fixtures and brute-force oracles for the test suites. Nothing here
// calls into the sampler; the oracles only use counting and the chain rule.

#include <cmath>
#include <vector>

#include "tralfm/corpus.hpp"
#include "tralfm/model.hpp"
#include "tralfm/simulate.hpp"

namespace tralfm::testing {

/// Corpus from explicit units with synthetic vocabularies of the given sizes.
inline Corpus make_corpus(const std::vector<std::vector<Unit>>& trajectories, std::size_t S, std::size_t O,
                          int bin_hours = 24, int order = 2) {
  Corpus c;
  c.vocab.order = order;
  c.scheme.bin_hours = bin_hours;
  detail::synthetic_sequence_vocab(c.vocab, S, 2);
  for (std::size_t o = 0; o < O; ++o) c.vocab.objects.intern("O" + std::to_string(o));
  for (const auto& t : trajectories) c.trajectories.push_back({t});
  return c;
}

/// M = 2 trajectories x 3 units, S = 3, O = 2, B = 2.
inline Corpus tiny_corpus() {
  return make_corpus({{{0, 0, 0}, {1, 0, 1}, {0, 0, 0}}, {{2, 1, 1}, {1, 1, 1}, {2, 1, 0}}}, 3, 2, 24);
}

inline ModelConfig tiny_config(int K = 2) {
  ModelConfig cfg;
  cfg.num_factors = K;
  cfg.alpha = Prior{0.5, {}};
  cfg.beta = Prior{0.1, {}};
  cfg.eta = Prior{0.2, {}};
  cfg.gamma = Prior{0.3, {}};
  return cfg;
}

/// Flat Dirichlet priors on every distribution.
inline ModelConfig flat_config(int K = 2) {
  ModelConfig cfg;
  cfg.num_factors = K;
  cfg.alpha = Prior{1.0, {}};
  cfg.beta = cfg.eta = cfg.gamma = Prior{1.0, {}};
  return cfg;
}

/// p(z, s, o, t) by the chain rule over sequential Polya-urn predictives.
inline double polya_log_joint(const Corpus& c, const ModelConfig& cfg, const std::vector<std::vector<Id>>& z) {
  const std::size_t K = static_cast<std::size_t>(cfg.num_factors);
  const std::size_t S = c.num_sequences(), O = c.num_objects(), B = c.num_bins();
  const auto alpha = cfg.alpha_prior().expand(K);
  const auto beta = cfg.beta.expand(S), eta = cfg.eta.expand(O), gamma = cfg.gamma.expand(B);
  auto sum = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s;
  };
  std::vector<std::vector<double>> ks(K, std::vector<double>(S)), ko(K, std::vector<double>(O)),
      kt(K, std::vector<double>(B));
  std::vector<double> nk(K, 0.0);
  double lp = 0.0;
  for (std::size_t m = 0; m < c.trajectories.size(); ++m) {
    std::vector<double> mk(K, 0.0);
    double nm = 0;
    for (std::size_t i = 0; i < c.trajectories[m].size(); ++i) {
      const auto& u = c.trajectories[m].units[i];
      const auto k = z[m][i];
      double p = (mk[k] + alpha[k]) / (nm + sum(alpha));
      p *= (ks[k][u.sequence] + beta[u.sequence]) / (nk[k] + sum(beta));
      if (cfg.components.object) p *= (ko[k][u.object] + eta[u.object]) / (nk[k] + sum(eta));
      if (cfg.components.time) p *= (kt[k][u.bin] + gamma[u.bin]) / (nk[k] + sum(gamma));
      lp += std::log(p);
      mk[k] += 1;
      nm += 1;
      ks[k][u.sequence] += 1;
      ko[k][u.object] += 1;
      kt[k][u.bin] += 1;
      nk[k] += 1;
    }
  }
  return lp;
}

/// All K^N assignments of a corpus, each as per-trajectory vectors.
inline std::vector<std::vector<std::vector<Id>>> all_assignments(const Corpus& c, std::size_t K) {
  std::size_t N = c.unit_count();
  std::size_t total = 1;
  for (std::size_t i = 0; i < N; ++i) total *= K;
  std::vector<std::vector<std::vector<Id>>> out;
  out.reserve(total);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t x = code;
    std::vector<std::vector<Id>> z;
    for (const auto& t : c.trajectories) {
      z.emplace_back();
      for (std::size_t i = 0; i < t.size(); ++i) {
        z.back().push_back(static_cast<Id>(x % K));
        x /= K;
      }
    }
    out.push_back(std::move(z));
  }
  return out;
}

/// Flat index of an assignment in the enumeration order of all_assignments.
inline std::size_t assignment_code(const std::vector<std::vector<Id>>& z, std::size_t K) {
  std::size_t code = 0, place = 1;
  for (const auto& t : z)
    for (Id k : t) {
      code += k * place;
      place *= K;
    }
  return code;
}

}  // namespace tralfm::testing
