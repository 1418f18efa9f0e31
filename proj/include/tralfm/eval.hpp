#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "tralfm/corpus.hpp"
#include "tralfm/model.hpp"
#include "tralfm/rng.hpp"
#include "tralfm/sampler.hpp"

namespace tralfm {

/// Indices of the q largest entries, by value descending then index ascending.
inline std::vector<Id> top_indices(std::span<const double> row, std::size_t q) {
  std::vector<Id> idx(row.size());
  std::iota(idx.begin(), idx.end(), Id{0});
  q = std::min(q, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(q), idx.end(),
                    [&](Id a, Id b) { return row[a] > row[b] || (row[a] == row[b] && a < b); });
  idx.resize(q);
  return idx;
}

// ---------------------------------------------------------------------------
// Coherence

/// Document frequencies of sequences over a reference corpus (each
/// trajectory counted once per sequence it contains).
class CooccurrenceIndex {
 public:
  CooccurrenceIndex(const Corpus& reference, double epsilon) : epsilon_(epsilon), M_(reference.trajectories.size()) {
    if (epsilon < 0.0) throw UsageError("PMI epsilon must be >= 0");
    postings_.resize(reference.num_sequences());
    for (std::size_t m = 0; m < reference.trajectories.size(); ++m)
      for (const auto& u : reference.trajectories[m].units)
        if (u.sequence < postings_.size()) {
          auto& list = postings_[u.sequence];
          if (list.empty() || list.back() != m) list.push_back(static_cast<Id>(m));
        }
  }

  std::size_t trajectories() const noexcept { return M_; }
  std::size_t frequency(Id s) const { return s < postings_.size() ? postings_[s].size() : 0; }

  std::size_t joint_frequency(Id a, Id b) const {
    if (a >= postings_.size() || b >= postings_.size()) return 0;
    const auto& x = postings_[a];
    const auto& y = postings_[b];
    std::size_t i = 0, j = 0, n = 0;
    while (i < x.size() && j < y.size()) {
      if (x[i] < y[j]) ++i;
      else if (y[j] < x[i]) ++j;
      else { ++n; ++i; ++j; }
    }
    return n;
  }

  /// P(s) = df(s) / M; a sequence absent from the reference gets the same
  /// epsilon smoothing as joint counts.
  double probability(Id s) const {
    const auto df = frequency(s);
    if (df == 0) return epsilon_ / (static_cast<double>(M_) + epsilon_);
    return static_cast<double>(df) / static_cast<double>(M_);
  }

  double joint_probability(Id a, Id b) const {
    return (static_cast<double>(joint_frequency(a, b)) + epsilon_) / (static_cast<double>(M_) + epsilon_);
  }

  double pmi(Id a, Id b) const { return std::log(joint_probability(a, b) / (probability(a) * probability(b))); }

 private:
  double epsilon_;
  std::size_t M_;
  std::vector<std::vector<Id>> postings_;
};

struct FactorCoherence {
  std::vector<Id> top_sequences;
  std::vector<double> top_probabilities;
  std::size_t pairs = 0;
  double pmi = 0.0;
};

struct CoherenceReport {
  std::vector<FactorCoherence> factors;
  double average_pmi = 0.0;
};

/// Mean pairwise PMI over each factor's q most probable sequences.
inline CoherenceReport pmi_coherence(const ModelParams& params, const Corpus& reference, std::size_t q = 10,
                                     double epsilon = 1.0) {
  if (q < 2) throw UsageError("coherence needs q >= 2");
  if (reference.trajectories.empty()) throw DataError("PMI reference corpus is empty");
  const CooccurrenceIndex index(reference, epsilon);
  CoherenceReport report;
  for (std::size_t k = 0; k < params.factors(); ++k) {
    FactorCoherence fc;
    fc.top_sequences = top_indices(params.phi.row(k), q);
    for (Id s : fc.top_sequences) fc.top_probabilities.push_back(params.phi(k, s));
    double sum = 0.0;
    for (std::size_t i = 0; i < fc.top_sequences.size(); ++i)
      for (std::size_t j = i + 1; j < fc.top_sequences.size(); ++j) {
        sum += index.pmi(fc.top_sequences[i], fc.top_sequences[j]);
        ++fc.pairs;
      }
    fc.pmi = fc.pairs ? sum / static_cast<double>(fc.pairs) : 0.0;
    report.average_pmi += fc.pmi;
    report.factors.push_back(std::move(fc));
  }
  if (!report.factors.empty()) report.average_pmi /= static_cast<double>(report.factors.size());
  return report;
}

// ---------------------------------------------------------------------------
// Factor inspection

struct RankedEntry {
  Id id = 0;
  double probability = 0.0;
  std::string label;
};

struct FactorInspection {
  std::size_t factor = 0;
  std::vector<RankedEntry> sequences;
  std::vector<RankedEntry> objects;
  std::vector<RankedEntry> bins;  // label like "8:00-10:00@weekday"; display index is id + 1
};

inline FactorInspection inspect_factor(const ModelParams& params, const Vocabularies& vocab,
                                       const TimeBinScheme& scheme, std::size_t factor, std::size_t q) {
  if (factor >= params.factors())
    throw UsageError("factor " + std::to_string(factor) + " out of range [0, " + std::to_string(params.factors()) + ")");
  FactorInspection out;
  out.factor = factor;
  for (Id s : top_indices(params.phi.row(factor), q)) {
    std::string label;
    if (s < vocab.sequences.size())
      for (const auto& name : vocab.sequence_names(s)) label += (label.empty() ? "" : "->") + name;
    out.sequences.push_back({s, params.phi(factor, s), label});
  }
  for (Id o : top_indices(params.psi.row(factor), q))
    out.objects.push_back({o, params.psi(factor, o), o < vocab.objects.size() ? vocab.objects.decode(o) : ""});
  for (Id t : top_indices(params.phi_time.row(factor), q))
    out.bins.push_back({t, params.phi_time(factor, t), scheme.label(static_cast<int>(t))});
  return out;
}

/// Table-style text dump: one block per factor, entries as "index [label] probability".
inline void write_inspection(std::ostream& out, const std::vector<FactorInspection>& factors) {
  for (const auto& f : factors) {
    out << "latent factor " << f.factor + 1 << '\n';
    out << "  top sequences:\n";
    for (const auto& e : f.sequences) out << "    " << e.id << " [" << e.label << "] " << e.probability << '\n';
    out << "  top objects:\n";
    for (const auto& e : f.objects) out << "    " << e.id << " [" << e.label << "] " << e.probability << '\n';
    out << "  top time bins:\n";
    for (const auto& e : f.bins) out << "    " << e.id + 1 << " [" << e.label << "] " << e.probability << '\n';
  }
}

// ---------------------------------------------------------------------------
// Next-location prediction

enum class Aggregation { max, sum };

inline Aggregation parse_aggregation(std::string_view s) {
  if (s == "max") return Aggregation::max;
  if (s == "sum") return Aggregation::sum;
  throw UsageError("aggregation must be 'max' or 'sum'");
}

struct ScoredLocation {
  Id location = 0;
  double score = 0.0;
  friend bool operator==(const ScoredLocation&, const ScoredLocation&) = default;
};

struct Prediction {
  std::vector<ScoredLocation> ranking;
  std::vector<double> theta;
  bool frequency_fallback = false;  // no candidate sequence shares the context
  bool prior_theta = false;         // fold-in had no known units
};

/// Frozen model plus the lookup structures needed to score continuations.
class Predictor {
 public:
  /// `known` marks sequences eligible as candidates (empty: all);
  /// `location_counts` ranks locations when no candidate exists.
  Predictor(const ModelParams& params, const ModelConfig& cfg, const Vocabularies& vocab,
            std::vector<double> location_counts, std::vector<bool> known = {})
      : params_(params), cfg_(cfg), vocab_(vocab), location_counts_(std::move(location_counts)) {
    const auto r = static_cast<std::size_t>(vocab.order);
    for (Id s = 0; s < vocab.sequences.size(); ++s) {
      if (!known.empty() && !known[s]) continue;
      const auto& key = vocab.sequences.decode(s);
      candidates_[SequenceKey(key.begin(), key.begin() + static_cast<std::ptrdiff_t>(r))].push_back(s);
    }
    location_counts_.resize(vocab.locations.size(), 0.0);
  }

  const ModelParams& params() const noexcept { return params_; }
  const ModelConfig& config() const noexcept { return cfg_; }

  /// Candidate sequence ids whose first r locations equal `context`.
  std::span<const Id> candidates(const SequenceKey& context) const {
    auto it = candidates_.find(context);
    if (it == candidates_.end()) return {};
    return it->second;
  }

  /// sum_k theta_k * phi_{k,s} * psi_{k,o} * phi_time_{k,t}; a channel is
  /// skipped when disabled or when its id is absent.
  double sequence_score(std::span<const double> theta, Id s, std::optional<Id> object, std::optional<Id> bin) const {
    const bool use_obj = cfg_.components.object && object && *object < params_.psi.cols();
    const bool use_time = cfg_.components.time && bin && *bin < params_.phi_time.cols();
    double score = 0.0;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      double v = theta[k] * params_.phi(k, s);
      if (use_obj) v *= params_.psi(k, *object);
      if (use_time) v *= params_.phi_time(k, *bin);
      score += v;
    }
    return score;
  }

  /// Rank final locations of the context's candidate sequences.
  Prediction rank(std::span<const double> theta, const SequenceKey& context, std::optional<Id> object,
                  std::optional<Id> bin, std::size_t top_n, Aggregation agg = Aggregation::max) const {
    if (context.size() != static_cast<std::size_t>(vocab_.order))
      throw DataError("prediction context needs exactly " + std::to_string(vocab_.order) + " known locations, got " +
                      std::to_string(context.size()));
    Prediction out;
    out.theta.assign(theta.begin(), theta.end());
    std::map<Id, double> by_location;
    for (Id s : candidates(context)) {
      const double score = sequence_score(theta, s, object, bin);
      const Id loc = vocab_.sequences.decode(s).back();
      auto [it, fresh] = by_location.try_emplace(loc, score);
      if (!fresh) it->second = agg == Aggregation::max ? std::max(it->second, score) : it->second + score;
    }
    if (by_location.empty()) {
      out.frequency_fallback = true;
      for (Id l = 0; l < location_counts_.size(); ++l) by_location.emplace(l, location_counts_[l]);
    }
    for (const auto& [loc, score] : by_location) out.ranking.push_back({loc, score});
    sort_ranking(out.ranking);
    if (out.ranking.size() > top_n) out.ranking.resize(top_n);
    return out;
  }

  static void sort_ranking(std::vector<ScoredLocation>& r) {
    std::stable_sort(r.begin(), r.end(), [](const ScoredLocation& a, const ScoredLocation& b) {
      return a.score > b.score || (a.score == b.score && a.location < b.location);
    });
  }

  /// Popularity baseline: all locations ranked by frequency, ignoring context.
  std::vector<ScoredLocation> frequency_ranking(std::size_t top_n) const {
    std::vector<ScoredLocation> r;
    for (Id l = 0; l < location_counts_.size(); ++l) r.push_back({l, location_counts_[l]});
    sort_ranking(r);
    if (r.size() > top_n) r.resize(top_n);
    return r;
  }

 private:
  const ModelParams& params_;
  ModelConfig cfg_;
  const Vocabularies& vocab_;
  std::vector<double> location_counts_;
  std::map<SequenceKey, std::vector<Id>> candidates_;
};

struct PredictOptions {
  std::size_t top_n = 5;
  std::size_t fold_in_iterations = 20;
  std::uint64_t seed = 1;
  Aggregation aggregation = Aggregation::max;
};

/// Fold in the prefix units, then rank continuations of `context`.
inline Prediction predict_next(const Predictor& model, const TrajectoryUnits& prefix, const SequenceKey& context,
                               std::optional<Id> object, std::optional<Id> bin, const PredictOptions& opt) {
  auto folded = fold_in(prefix, model.params(), model.config(), opt.fold_in_iterations, opt.seed);
  auto out = model.rank(folded.theta, context, object, bin, opt.top_n, opt.aggregation);
  out.prior_theta = folded.prior_fallback;
  return out;
}

struct PredictionInstance {
  Id truth = 0;
  std::vector<ScoredLocation> ranking;
};

/// Mean reciprocal rank of the true location within the first `top_n`
/// entries of each ranking; misses contribute 0.
inline double average_precision(std::span<const PredictionInstance> instances, std::size_t top_n) {
  if (instances.empty()) throw DataError("average precision of an empty instance list");
  if (top_n < 1) throw UsageError("top-N must be >= 1");
  double sum = 0.0;
  for (const auto& inst : instances) {
    const auto n = std::min(top_n, inst.ranking.size());
    for (std::size_t i = 0; i < n; ++i)
      if (inst.ranking[i].location == inst.truth) {
        sum += 1.0 / static_cast<double>(i + 1);
        break;
      }
  }
  return sum / static_cast<double>(instances.size());
}

// ---------------------------------------------------------------------------
// Factor matching

inline double total_variation(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return 0.5 * d;
}

struct FactorMatching {
  std::vector<Id> estimated_for_truth;  // truth factor k is matched to estimated factor [k]
  std::vector<double> distance;         // TV distance of each matched pair, indexed by truth factor
  double cost() const { return std::accumulate(distance.begin(), distance.end(), 0.0); }
};

/// Greedy matching of phi rows: repeatedly take the closest remaining
/// (truth, estimate) pair under total variation.
inline FactorMatching match_factors(const ModelParams& estimated, const ModelParams& truth) {
  const auto K = truth.phi.rows();
  if (estimated.phi.rows() != K || estimated.phi.cols() != truth.phi.cols())
    throw UsageError("match_factors: parameter shapes differ");
  struct Pair {
    double d;
    Id t, e;
  };
  std::vector<Pair> pairs;
  for (Id t = 0; t < K; ++t)
    for (Id e = 0; e < K; ++e) pairs.push_back({total_variation(truth.phi.row(t), estimated.phi.row(e)), t, e});
  std::sort(pairs.begin(), pairs.end(),
            [](const Pair& a, const Pair& b) { return std::tie(a.d, a.t, a.e) < std::tie(b.d, b.t, b.e); });
  FactorMatching out{std::vector<Id>(K), std::vector<double>(K)};
  std::vector<bool> used_t(K), used_e(K);
  for (const auto& p : pairs) {
    if (used_t[p.t] || used_e[p.e]) continue;
    used_t[p.t] = used_e[p.e] = true;
    out.estimated_for_truth[p.t] = p.e;
    out.distance[p.t] = p.d;
  }
  return out;
}

}  // namespace tralfm
