#pragma once

// Model configuration, Gibbs count tables, Dirichlet-expectation parameter
// estimates and the collapsed joint log-probability.

#include <cmath>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tralfm/common.hpp"
#include "tralfm/corpus.hpp"

namespace tralfm {

/// Which observation channels a factor emits. Sequences are always emitted.
struct Components {
  bool object = true;
  bool time = true;

  static Components sequence_only() { return {false, false}; }

  static Components parse(std::string_view text) {
    Components c{false, false};
    bool has_seq = false;
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto end = std::min(text.find(',', start), text.size());
      const auto tok = text.substr(start, end - start);
      if (tok == "seq" || tok == "sequence") has_seq = true;
      else if (tok == "obj" || tok == "object") c.object = true;
      else if (tok == "time") c.time = true;
      else throw UsageError("unknown component '" + std::string(tok) + "' (expected seq, obj, time)");
      start = end + 1;
    }
    if (!has_seq) throw UsageError("component list must include seq");
    return c;
  }

  std::string str() const {
    std::string s = "seq";
    if (object) s += ",obj";
    if (time) s += ",time";
    return s;
  }

  friend bool operator==(const Components&, const Components&) = default;
};

/// Dirichlet hyperparameter vector: symmetric unless explicit weights are given.
struct Prior {
  double symmetric = 0.01;
  std::vector<double> weights;

  double at(std::size_t i) const { return weights.empty() ? symmetric : weights[i]; }

  std::vector<double> expand(std::size_t n) const {
    if (weights.empty()) return std::vector<double>(n, symmetric);
    if (weights.size() != n)
      throw UsageError("prior has " + std::to_string(weights.size()) + " weights, expected " + std::to_string(n));
    return weights;
  }

  void validate(const char* name) const {
    auto bad = [](double v) { return !(v > 0.0) || !std::isfinite(v); };
    if (weights.empty() ? bad(symmetric) : std::any_of(weights.begin(), weights.end(), bad))
      throw UsageError(std::string("prior ") + name + " must be strictly positive and finite");
  }

  friend bool operator==(const Prior&, const Prior&) = default;
};

struct ModelConfig {
  int num_factors = 40;
  int order = 2;
  std::optional<Prior> alpha;  // unset: symmetric 50 / K
  Prior beta{0.01, {}};
  Prior eta{0.01, {}};
  Prior gamma{0.01, {}};
  Components components;

  Prior alpha_prior() const { return alpha.value_or(Prior{50.0 / num_factors, {}}); }

  void validate() const {
    if (num_factors < 1) throw UsageError("number of latent factors must be >= 1");
    if (order < 1) throw UsageError("sequence order must be >= 1");
    alpha_prior().validate("alpha");
    beta.validate("beta");
    eta.validate("eta");
    gamma.validate("gamma");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct Dims {
  std::size_t factors = 0;
  std::size_t trajectories = 0;
  std::size_t sequences = 0;
  std::size_t objects = 0;
  std::size_t bins = 0;
  friend bool operator==(const Dims&, const Dims&) = default;
};

/// Expanded prior vectors and their sums for fixed dimensions.
struct ResolvedPriors {
  std::vector<double> alpha, beta, eta, gamma;
  double alpha_sum = 0, beta_sum = 0, eta_sum = 0, gamma_sum = 0;

  ResolvedPriors(const ModelConfig& cfg, const Dims& d)
      : alpha(cfg.alpha_prior().expand(d.factors)),
        beta(cfg.beta.expand(d.sequences)),
        eta(cfg.eta.expand(d.objects)),
        gamma(cfg.gamma.expand(d.bins)) {
    for (double v : alpha) alpha_sum += v;
    for (double v : beta) beta_sum += v;
    for (double v : eta) eta_sum += v;
    for (double v : gamma) gamma_sum += v;
  }
};

/// Gibbs count state. Every unit is counted in all four tables so the
/// grand totals agree; components disabled in the config are simply not
/// read by the conditional. The factor-by-sequence, -object and -bin tables
/// are stored column-major (one contiguous K-vector per sequence, object,
/// bin) so the per-unit scan over factors is cache-friendly.
class CountTables {
 public:
  CountTables() = default;
  CountTables(const Dims& d, std::vector<Count> trajectory_lengths)
      : dims_(d),
        n_mk_(d.trajectories, d.factors),
        n_sk_(d.sequences, d.factors),
        n_ok_(d.objects, d.factors),
        n_tk_(d.bins, d.factors),
        n_k_(d.factors, 0),
        n_m_(d.trajectories, 0),
        lengths_(std::move(trajectory_lengths)) {}

  const Dims& dims() const noexcept { return dims_; }

  Count trajectory_factor(std::size_t m, std::size_t k) const noexcept { return n_mk_(m, k); }
  Count factor_sequence(std::size_t k, std::size_t s) const noexcept { return n_sk_(s, k); }
  Count factor_object(std::size_t k, std::size_t o) const noexcept { return n_ok_(o, k); }
  Count factor_bin(std::size_t k, std::size_t t) const noexcept { return n_tk_(t, k); }
  Count factor_total(std::size_t k) const noexcept { return n_k_[k]; }
  Count trajectory_total(std::size_t m) const noexcept { return n_m_[m]; }
  Count trajectory_length(std::size_t m) const noexcept { return lengths_[m]; }

  std::span<const Count> sequence_column(std::size_t s) const noexcept { return n_sk_.row(s); }
  std::span<const Count> object_column(std::size_t o) const noexcept { return n_ok_.row(o); }
  std::span<const Count> bin_column(std::size_t t) const noexcept { return n_tk_.row(t); }
  std::span<const Count> trajectory_row(std::size_t m) const noexcept { return n_mk_.row(m); }
  std::span<const Count> factor_totals() const noexcept { return n_k_; }

  void add(std::size_t m, const Unit& u, std::size_t k) noexcept { bump(m, u, k, +1); }
  void remove(std::size_t m, const Unit& u, std::size_t k) noexcept { bump(m, u, k, -1); }

  /// Empty when every invariant holds, otherwise a description of the first violation.
  std::string check_invariants() const {
    std::ostringstream err;
    const auto& d = dims_;
    auto sum_table = [&](const Matrix<Count>& t, std::vector<long long>& per_k) {
      per_k.assign(d.factors, 0);
      for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t k = 0; k < d.factors; ++k) {
          if (t(r, k) < 0) return false;
          per_k[k] += t(r, k);
        }
      return true;
    };
    std::vector<long long> seq, obj, bin, traj;
    if (!sum_table(n_sk_, seq) || !sum_table(n_ok_, obj) || !sum_table(n_tk_, bin) || !sum_table(n_mk_, traj)) {
      return "negative count entry";
    }
    for (std::size_t k = 0; k < d.factors; ++k) {
      if (seq[k] != n_k_[k] || obj[k] != n_k_[k] || bin[k] != n_k_[k] || traj[k] != n_k_[k]) {
        err << "factor " << k << " totals disagree: seq=" << seq[k] << " obj=" << obj[k] << " bin=" << bin[k]
            << " traj=" << traj[k] << " cached=" << n_k_[k];
        return err.str();
      }
    }
    for (std::size_t m = 0; m < d.trajectories; ++m) {
      long long row = 0;
      for (std::size_t k = 0; k < d.factors; ++k) row += n_mk_(m, k);
      if (row != n_m_[m] || row != lengths_[m]) {
        err << "trajectory " << m << " row sum " << row << " != length " << lengths_[m];
        return err.str();
      }
    }
    return {};
  }

  long long grand_total() const noexcept {
    long long n = 0;
    for (Count c : n_k_) n += c;
    return n;
  }

  friend bool operator==(const CountTables&, const CountTables&) = default;

 private:
  void bump(std::size_t m, const Unit& u, std::size_t k, Count delta) noexcept {
    n_mk_(m, k) += delta;
    n_sk_(u.sequence, k) += delta;
    n_ok_(u.object, k) += delta;
    n_tk_(u.bin, k) += delta;
    n_k_[k] += delta;
    n_m_[m] += delta;
  }

  Dims dims_;
  Matrix<Count> n_mk_;  // M x K
  Matrix<Count> n_sk_;  // S x K
  Matrix<Count> n_ok_;  // O x K
  Matrix<Count> n_tk_;  // B x K
  std::vector<Count> n_k_;
  std::vector<Count> n_m_;
  std::vector<Count> lengths_;
};

/// Row-stochastic parameter matrices.
struct ModelParams {
  Matrix<double> theta;     // M x K
  Matrix<double> phi;       // K x S
  Matrix<double> psi;       // K x O
  Matrix<double> phi_time;  // K x B

  std::size_t factors() const noexcept { return phi.rows(); }
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Posterior-mean estimates of all four distributions from the counts.
inline ModelParams estimate_params(const CountTables& counts, const ModelConfig& cfg) {
  const auto& d = counts.dims();
  const ResolvedPriors pr(cfg, d);
  ModelParams p{Matrix<double>(d.trajectories, d.factors), Matrix<double>(d.factors, d.sequences),
                Matrix<double>(d.factors, d.objects), Matrix<double>(d.factors, d.bins)};
  for (std::size_t m = 0; m < d.trajectories; ++m) {
    const double denom = counts.trajectory_total(m) + pr.alpha_sum;
    for (std::size_t k = 0; k < d.factors; ++k) p.theta(m, k) = (counts.trajectory_factor(m, k) + pr.alpha[k]) / denom;
  }
  for (std::size_t k = 0; k < d.factors; ++k) {
    const double n = counts.factor_total(k);
    const double ds = n + pr.beta_sum, dob = n + pr.eta_sum, dt = n + pr.gamma_sum;
    for (std::size_t s = 0; s < d.sequences; ++s) p.phi(k, s) = (counts.factor_sequence(k, s) + pr.beta[s]) / ds;
    for (std::size_t o = 0; o < d.objects; ++o) p.psi(k, o) = (counts.factor_object(k, o) + pr.eta[o]) / dob;
    for (std::size_t t = 0; t < d.bins; ++t) p.phi_time(k, t) = (counts.factor_bin(k, t) + pr.gamma[t]) / dt;
  }
  return p;
}

namespace detail {

// log Delta(n + prior) - log Delta(prior) for one count vector, where
// log Delta(x) = sum_i lgamma(x_i) - lgamma(sum_i x_i). Zero counts contribute nothing.
template <class CountAt>
double log_delta_ratio(std::size_t n, CountAt count_at, const std::vector<double>& prior, double prior_sum) {
  double acc = 0.0;
  long long total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Count c = count_at(i);
    if (c == 0) continue;
    total += c;
    acc += std::lgamma(c + prior[i]) - std::lgamma(prior[i]);
  }
  if (total == 0) return 0.0;
  return acc - (std::lgamma(static_cast<double>(total) + prior_sum) - std::lgamma(prior_sum));
}

}  // namespace detail

/// log p(z, s, o, t) with the multinomials integrated out. Channels
/// disabled in `cfg` are left out of the product.
inline double log_joint(const CountTables& counts, const ModelConfig& cfg) {
  const auto& d = counts.dims();
  const ResolvedPriors pr(cfg, d);
  double lp = 0.0;
  for (std::size_t k = 0; k < d.factors; ++k) {
    lp += detail::log_delta_ratio(d.sequences, [&](std::size_t s) { return counts.factor_sequence(k, s); }, pr.beta,
                                  pr.beta_sum);
    if (cfg.components.object)
      lp += detail::log_delta_ratio(d.objects, [&](std::size_t o) { return counts.factor_object(k, o); }, pr.eta,
                                    pr.eta_sum);
    if (cfg.components.time)
      lp += detail::log_delta_ratio(d.bins, [&](std::size_t t) { return counts.factor_bin(k, t); }, pr.gamma,
                                    pr.gamma_sum);
  }
  for (std::size_t m = 0; m < d.trajectories; ++m)
    lp += detail::log_delta_ratio(d.factors, [&](std::size_t k) { return counts.trajectory_factor(m, k); }, pr.alpha,
                                  pr.alpha_sum);
  return lp;
}

/// Dimensions of a corpus under a configuration.
inline Dims corpus_dims(const Corpus& corpus, const ModelConfig& cfg) {
  return {static_cast<std::size_t>(cfg.num_factors), corpus.trajectories.size(), corpus.num_sequences(),
          corpus.num_objects(), corpus.num_bins()};
}

/// Build count tables from explicit assignments (one factor per unit).
inline CountTables tables_from_assignments(const Corpus& corpus, const ModelConfig& cfg,
                                           const std::vector<std::vector<Id>>& z) {
  std::vector<Count> lengths;
  for (const auto& t : corpus.trajectories) lengths.push_back(static_cast<Count>(t.size()));
  CountTables c(corpus_dims(corpus, cfg), std::move(lengths));
  for (std::size_t m = 0; m < corpus.trajectories.size(); ++m)
    for (std::size_t i = 0; i < corpus.trajectories[m].size(); ++i) c.add(m, corpus.trajectories[m].units[i], z[m][i]);
  return c;
}

}  // namespace tralfm
