#pragma once

// Collapsed Gibbs sampler.
//
// For the unit i of trajectory m with sequence s, object o and bin t, and
// with i removed from all counts, the factor is drawn from
//
//   p(z_i = k | rest)  ~  (n_sk + b_s) / (n_k + B)        sequence
//                       * (n_ok + e_o) / (n_k + E)        object  (optional)
//                       * (n_tk + g_t) / (n_k + G)        time    (optional)
//                       * (n_mk + a_k)                    trajectory mixture
//
// where B, E, G are the prior sums. The trajectory denominator does not
// depend on k and is dropped before normalisation. Units are visited in
// (trajectory, position) order, so a run is fully determined by its seed.

#include <algorithm>
#include <cassert>
#include <optional>
#include <vector>

#include "tralfm/corpus.hpp"
#include "tralfm/model.hpp"
#include "tralfm/rng.hpp"

namespace tralfm {

struct UnitHandle {
  std::size_t trajectory = 0;
  std::size_t position = 0;
  friend bool operator==(const UnitHandle&, const UnitHandle&) = default;
};

class SamplerState {
 public:
  /// Random uniform initial assignment of every unit.
  SamplerState(const Corpus& corpus, const ModelConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), rng_(seed) {
    cfg_.validate();
    if (corpus.trajectories.empty()) throw DataError("cannot train on an empty corpus");
    if (cfg_.order != corpus.order())
      throw UsageError("model order " + std::to_string(cfg_.order) + " does not match corpus order " +
                       std::to_string(corpus.order()));
    const Dims d = corpus_dims(corpus, cfg_);
    priors_.emplace(cfg_, d);

    std::vector<Count> lengths;
    offsets_.reserve(d.trajectories + 1);
    offsets_.push_back(0);
    for (const auto& t : corpus.trajectories) {
      if (t.units.empty()) throw DataError("corpus contains a trajectory with no units");
      for (const auto& u : t.units) {
        if (u.sequence >= d.sequences || u.object >= d.objects || u.bin >= d.bins)
          throw DataError("unit id out of vocabulary range");
        units_.push_back(u);
      }
      lengths.push_back(static_cast<Count>(t.size()));
      offsets_.push_back(units_.size());
    }
    counts_ = CountTables(d, std::move(lengths));
    z_.resize(units_.size());
    const auto K = d.factors;
    for (std::size_t m = 0; m < d.trajectories; ++m)
      for (std::size_t i = offsets_[m]; i < offsets_[m + 1]; ++i) {
        z_[i] = static_cast<Id>(rng_.below(K));
        counts_.add(m, units_[i], z_[i]);
      }
    weights_.resize(K);
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  const CountTables& counts() const noexcept { return counts_; }
  const Dims& dims() const noexcept { return counts_.dims(); }
  std::size_t iteration() const noexcept { return iteration_; }
  const std::vector<double>& log_joint_trace() const noexcept { return trace_; }
  std::size_t num_units() const noexcept { return units_.size(); }
  std::size_t trajectory_size(std::size_t m) const noexcept { return offsets_[m + 1] - offsets_[m]; }

  Id assignment(UnitHandle h) const { return z_[flat(h)]; }

  /// Assignments grouped per trajectory.
  std::vector<std::vector<Id>> assignments() const {
    std::vector<std::vector<Id>> out(dims().trajectories);
    for (std::size_t m = 0; m < out.size(); ++m) out[m].assign(z_.begin() + offsets_[m], z_.begin() + offsets_[m + 1]);
    return out;
  }

  /// Remove a unit's current assignment from the counts (the "-i" state).
  void detach(UnitHandle h) {
    if (detached_) throw std::logic_error("another unit is already detached");
    counts_.remove(h.trajectory, units_[flat(h)], z_[flat(h)]);
    detached_ = h;
  }

  /// Re-insert a detached unit with factor k.
  void attach(UnitHandle h, Id k) {
    if (detached_ != h) throw std::logic_error("attach() on a unit that is not detached");
    if (k >= dims().factors) throw std::out_of_range("factor index out of range");
    z_[flat(h)] = k;
    counts_.add(h.trajectory, units_[flat(h)], k);
    detached_.reset();
  }

  /// Normalised full conditional over factors for a detached unit.
  std::vector<double> conditional(UnitHandle h) const {
    if (detached_ != h) throw std::logic_error("conditional() requires the unit to be detached first");
    std::vector<double> p(dims().factors);
    const double total = fill_weights(h.trajectory, units_[flat(h)], p);
    for (double& v : p) v /= total;
    return p;
  }

  /// One full sweep over all units; appends the post-sweep log-joint to the trace.
  void iterate() {
    if (detached_) throw std::logic_error("iterate() with a detached unit");
    const auto& c = cfg_.components;
    if (c.object && c.time) sweep<true, true>();
    else if (c.object) sweep<true, false>();
    else if (c.time) sweep<false, true>();
    else sweep<false, false>();
    ++iteration_;
    trace_.push_back(log_joint(counts_, cfg_));
#ifndef NDEBUG
    assert(counts_.check_invariants().empty());
#endif
  }

  double current_log_joint() const { return log_joint(counts_, cfg_); }

 private:
  std::size_t flat(UnitHandle h) const {
    const auto i = offsets_.at(h.trajectory) + h.position;
    if (i >= offsets_[h.trajectory + 1]) throw std::out_of_range("unit position out of range");
    return i;
  }

  template <bool UseObject, bool UseTime>
  double weights_for(std::size_t m, const Unit& u, std::span<double> out) const noexcept {
    const auto& pr = *priors_;
    const auto n_k = counts_.factor_totals();
    const auto n_mk = counts_.trajectory_row(m);
    const auto n_sk = counts_.sequence_column(u.sequence);
    const double beta = pr.beta[u.sequence];
    [[maybe_unused]] const auto n_ok = counts_.object_column(u.object);
    [[maybe_unused]] const auto n_tk = counts_.bin_column(u.bin);
    [[maybe_unused]] const double eta = pr.eta[u.object];
    [[maybe_unused]] const double gamma = pr.gamma[u.bin];
    double total = 0.0;
    for (std::size_t k = 0; k < out.size(); ++k) {
      const double n = n_k[k];
      double num = (n_sk[k] + beta) * (n_mk[k] + pr.alpha[k]);
      double den = n + pr.beta_sum;
      if constexpr (UseObject) {
        num *= n_ok[k] + eta;
        den *= n + pr.eta_sum;
      }
      if constexpr (UseTime) {
        num *= n_tk[k] + gamma;
        den *= n + pr.gamma_sum;
      }
      out[k] = num / den;
      total += out[k];
    }
    return total;
  }

  double fill_weights(std::size_t m, const Unit& u, std::span<double> out) const noexcept {
    const auto& c = cfg_.components;
    if (c.object && c.time) return weights_for<true, true>(m, u, out);
    if (c.object) return weights_for<true, false>(m, u, out);
    if (c.time) return weights_for<false, true>(m, u, out);
    return weights_for<false, false>(m, u, out);
  }

  template <bool UseObject, bool UseTime>
  void sweep() {
    const auto M = dims().trajectories;
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t i = offsets_[m]; i < offsets_[m + 1]; ++i) {
        const Unit& u = units_[i];
        counts_.remove(m, u, z_[i]);
        const double total = weights_for<UseObject, UseTime>(m, u, weights_);
        z_[i] = static_cast<Id>(rng_.categorical(weights_, total));
        counts_.add(m, u, z_[i]);
      }
    }
  }

  ModelConfig cfg_;
  Rng rng_;
  std::optional<ResolvedPriors> priors_;
  std::vector<Unit> units_;
  std::vector<std::size_t> offsets_;
  std::vector<Id> z_;
  CountTables counts_;
  std::vector<double> weights_;
  std::size_t iteration_ = 0;
  std::vector<double> trace_;
  std::optional<UnitHandle> detached_;
};

struct BurnInReport {
  bool non_decreasing = true;
  std::size_t first_drop = 0;  // index of the first window whose median fell
  std::vector<double> medians;
};

/// Medians of consecutive non-overlapping windows of a log-joint trace and
/// whether they never decrease. A trailing partial window is ignored.
inline BurnInReport monitor_burn_in(const std::vector<double>& trace, std::size_t window) {
  if (window == 0) throw UsageError("burn-in window must be >= 1");
  BurnInReport r;
  for (std::size_t start = 0; start + window <= trace.size(); start += window) {
    std::vector<double> w(trace.begin() + start, trace.begin() + start + window);
    std::sort(w.begin(), w.end());
    const double med = window % 2 ? w[window / 2] : 0.5 * (w[window / 2 - 1] + w[window / 2]);
    if (!r.medians.empty() && med < r.medians.back() && r.non_decreasing) {
      r.non_decreasing = false;
      r.first_drop = r.medians.size();
    }
    r.medians.push_back(med);
  }
  return r;
}

struct TrainOptions {
  std::size_t iterations = 100;
  std::size_t average_last = 1;  // average the estimates of the last N sweeps
  std::uint64_t seed = 1;
};

struct TrainResult {
  ModelParams params;
  SamplerState state;
};

/// Random initialisation followed by `iterations` sweeps. With
/// average_last = N > 1 the returned parameters are the mean of the
/// estimates after each of the final N sweeps.
inline TrainResult train(const Corpus& corpus, const ModelConfig& cfg, const TrainOptions& opt) {
  if (opt.average_last < 1) throw UsageError("average-last must be >= 1");
  SamplerState state(corpus, cfg, opt.seed);
  if (opt.iterations == 0 || opt.average_last == 1) {
    for (std::size_t it = 0; it < opt.iterations; ++it) state.iterate();
    auto params = estimate_params(state.counts(), cfg);
    return {std::move(params), std::move(state)};
  }
  const auto window = std::min(opt.average_last, opt.iterations);
  std::optional<ModelParams> acc;
  for (std::size_t it = 0; it < opt.iterations; ++it) {
    state.iterate();
    if (it + window < opt.iterations) continue;
    auto est = estimate_params(state.counts(), cfg);
    if (!acc) {
      acc = std::move(est);
      continue;
    }
    auto add = [](Matrix<double>& into, const Matrix<double>& from) {
      auto dst = into.data();
      auto src = from.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    };
    add(acc->theta, est.theta);
    add(acc->phi, est.phi);
    add(acc->psi, est.psi);
    add(acc->phi_time, est.phi_time);
  }
  for (auto* m : {&acc->theta, &acc->phi, &acc->psi, &acc->phi_time})
    for (double& v : m->data()) v /= static_cast<double>(window);
  return {std::move(*acc), std::move(state)};
}

struct FoldInResult {
  std::vector<double> theta;
  bool prior_fallback = false;  // no unit with a known sequence was available
};

/// Estimate a held-out trajectory's factor mixture with the global factor
/// distributions frozen: only the trajectory's own factor counts change.
/// Units whose sequence is kUnknownSequence are skipped; an object or bin
/// outside the model's range contributes no evidence for that channel.
inline FoldInResult fold_in(const TrajectoryUnits& prefix, const ModelParams& params, const ModelConfig& cfg,
                            std::size_t iterations, std::uint64_t seed) {
  const auto K = params.factors();
  const auto alpha = cfg.alpha_prior().expand(K);
  double alpha_sum = 0.0;
  for (double a : alpha) alpha_sum += a;

  std::vector<const Unit*> known;
  for (const auto& u : prefix.units)
    if (u.sequence != kUnknownSequence && u.sequence < params.phi.cols()) known.push_back(&u);

  FoldInResult out;
  out.theta.resize(K);
  if (known.empty()) {
    for (std::size_t k = 0; k < K; ++k) out.theta[k] = alpha[k] / alpha_sum;
    out.prior_fallback = true;
    return out;
  }

  // per-unit likelihood of each factor is fixed; precompute it
  Matrix<double> like(known.size(), K);
  for (std::size_t i = 0; i < known.size(); ++i) {
    const Unit& u = *known[i];
    for (std::size_t k = 0; k < K; ++k) {
      double v = params.phi(k, u.sequence);
      if (cfg.components.object && u.object < params.psi.cols()) v *= params.psi(k, u.object);
      if (cfg.components.time && u.bin < params.phi_time.cols()) v *= params.phi_time(k, u.bin);
      like(i, k) = v;
    }
  }

  Rng rng(seed);
  std::vector<Count> n_k(K, 0);
  std::vector<Id> z(known.size());
  for (auto& zi : z) {
    zi = static_cast<Id>(rng.below(K));
    ++n_k[zi];
  }
  std::vector<double> w(K);
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < known.size(); ++i) {
      --n_k[z[i]];
      double total = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        w[k] = (n_k[k] + alpha[k]) * like(i, k);
        total += w[k];
      }
      z[i] = static_cast<Id>(rng.categorical(w, total));
      ++n_k[z[i]];
    }
  }
  const double denom = static_cast<double>(known.size()) + alpha_sum;
  for (std::size_t k = 0; k < K; ++k) out.theta[k] = (n_k[k] + alpha[k]) / denom;
  return out;
}

/// Fold-in against frozen global count tables. Equivalent to folding in
/// against the posterior-mean estimates of those counts.
inline FoldInResult fold_in(const TrajectoryUnits& prefix, const CountTables& global, const ModelConfig& cfg,
                            std::size_t iterations, std::uint64_t seed) {
  return fold_in(prefix, estimate_params(global, cfg), cfg, iterations, seed);
}

}  // namespace tralfm
