#pragma once

// Cross-validated evaluation: per fold, train on the remaining folds,
// score next-location prediction on the held-out trajectories and
// latent-factor coherence on the training trajectories.
//
// A held-out trajectory yields one prediction instance: its last unit is
// the target (context = the unit's first r locations, truth = its final
// location), the preceding units are folded in, and the query bin is the
// bin of the last preceding unit. Held-out units whose sequence never
// occurs in the training fold are treated as unknown.

#include <cmath>
#include <cstdio>
#include <ostream>
#include <thread>

#include "tralfm/eval.hpp"
#include "tralfm/sampler.hpp"

namespace tralfm {

struct EvalOptions {
  std::size_t folds = 10;
  TrainOptions train;  // train.seed is ignored; per-fold seeds derive from `seed`
  std::vector<std::size_t> top_n{1, 5};
  std::size_t q = 10;
  double epsilon = 1.0;
  std::size_t fold_in_iterations = 20;
  Aggregation aggregation = Aggregation::max;
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
};

struct FoldResult {
  std::size_t fold = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::vector<double> ap;           // per top_n
  std::vector<double> baseline_ap;  // popularity baseline, per top_n
  double pmi = 0.0;
  std::size_t frequency_fallbacks = 0;
};

struct EvaluationReport {
  std::vector<std::size_t> top_n;
  std::vector<FoldResult> folds;
  std::optional<ModelParams> first_fold_params;

  double mean_ap(std::size_t i) const { return mean([&](const FoldResult& f) { return f.ap[i]; }); }
  double mean_baseline_ap(std::size_t i) const { return mean([&](const FoldResult& f) { return f.baseline_ap[i]; }); }
  double mean_pmi() const { return mean([](const FoldResult& f) { return f.pmi; }); }

  template <class Get>
  double mean(Get get) const {
    double s = 0.0;
    for (const auto& f : folds) s += get(f);
    return folds.empty() ? 0.0 : s / static_cast<double>(folds.size());
  }

  template <class Get>
  double stddev(Get get) const {
    if (folds.size() < 2) return 0.0;
    const double mu = mean(get);
    double s = 0.0;
    for (const auto& f : folds) s += (get(f) - mu) * (get(f) - mu);
    return std::sqrt(s / static_cast<double>(folds.size() - 1));
  }
};

/// Seeded assignment of trajectories to folds (balanced sizes).
inline std::vector<std::size_t> fold_assignment(std::size_t n, std::size_t folds, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0xf01d));
  rng.shuffle(order);
  std::vector<std::size_t> fold(n);
  for (std::size_t i = 0; i < n; ++i) fold[order[i]] = i % folds;
  return fold;
}

/// Corpus restricted to the given trajectories; vocabularies are shared.
inline Corpus subset_corpus(const Corpus& corpus, std::span<const std::size_t> keep) {
  Corpus out;
  out.vocab = corpus.vocab;
  out.scheme = corpus.scheme;
  out.tz_offset_hours = corpus.tz_offset_hours;
  out.trajectories.reserve(keep.size());
  for (auto m : keep) out.trajectories.push_back(corpus.trajectories.at(m));
  return out;
}

/// How often each location is the final location of a unit.
inline std::vector<double> next_location_counts(const Corpus& corpus) {
  std::vector<double> counts(corpus.vocab.locations.size(), 0.0);
  for (const auto& t : corpus.trajectories)
    for (const auto& u : t.units)
      if (u.sequence < corpus.vocab.sequences.size()) counts[corpus.vocab.sequences.decode(u.sequence).back()] += 1.0;
  return counts;
}

struct HeldOutQuery {
  TrajectoryUnits prefix;
  SequenceKey context;
  Id truth = 0;
  Id object = 0;
  std::optional<Id> bin;
};

inline HeldOutQuery make_query(const Corpus& corpus, const TrajectoryUnits& traj, const std::vector<bool>& known) {
  const auto r = static_cast<std::size_t>(corpus.order());
  const Unit& target = traj.units.back();
  const auto& key = corpus.vocab.sequences.decode(target.sequence);
  HeldOutQuery q;
  q.context.assign(key.begin(), key.begin() + static_cast<std::ptrdiff_t>(r));
  q.truth = key.back();
  q.object = target.object;
  q.prefix.units.assign(traj.units.begin(), traj.units.end() - 1);
  for (auto& u : q.prefix.units)
    if (!known[u.sequence]) u.sequence = kUnknownSequence;
  if (!q.prefix.units.empty()) q.bin = q.prefix.units.back().bin;
  return q;
}

inline FoldResult evaluate_fold(const Corpus& corpus, const ModelConfig& cfg, const EvalOptions& opt,
                                const std::vector<std::size_t>& fold_of, std::size_t fold,
                                ModelParams* keep_params = nullptr) {
  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t m = 0; m < fold_of.size(); ++m) (fold_of[m] == fold ? test_idx : train_idx).push_back(m);
  const Corpus training = subset_corpus(corpus, train_idx);

  TrainOptions topt = opt.train;
  topt.seed = derive_seed(opt.seed, 1000 + fold);
  auto trained = train(training, cfg, topt);

  std::vector<bool> known(corpus.num_sequences(), false);
  for (const auto& t : training.trajectories)
    for (const auto& u : t.units) known[u.sequence] = true;
  const Predictor predictor(trained.params, cfg, corpus.vocab, next_location_counts(training), known);

  const auto max_n = *std::max_element(opt.top_n.begin(), opt.top_n.end());
  std::vector<PredictionInstance> model_instances, baseline_instances;
  const auto baseline = predictor.frequency_ranking(max_n);
  FoldResult res;
  res.fold = fold;
  res.n_train = train_idx.size();
  res.n_test = test_idx.size();
  for (std::size_t j = 0; j < test_idx.size(); ++j) {
    const auto q = make_query(corpus, corpus.trajectories[test_idx[j]], known);
    PredictOptions popt{max_n, opt.fold_in_iterations, derive_seed(topt.seed, j), opt.aggregation};
    auto pred = predict_next(predictor, q.prefix, q.context, q.object, q.bin, popt);
    res.frequency_fallbacks += pred.frequency_fallback ? 1 : 0;
    model_instances.push_back({q.truth, std::move(pred.ranking)});
    baseline_instances.push_back({q.truth, baseline});
  }
  for (auto n : opt.top_n) {
    res.ap.push_back(average_precision(model_instances, n));
    res.baseline_ap.push_back(average_precision(baseline_instances, n));
  }
  res.pmi = pmi_coherence(trained.params, training, opt.q, opt.epsilon).average_pmi;
  if (keep_params) *keep_params = std::move(trained.params);
  return res;
}

inline EvaluationReport evaluate(const Corpus& corpus, const ModelConfig& cfg, const EvalOptions& opt) {
  if (opt.folds < 2) throw UsageError("cross-validation needs at least 2 folds");
  if (corpus.trajectories.size() < opt.folds)
    throw DataError("corpus has " + std::to_string(corpus.trajectories.size()) + " trajectories, fewer than " +
                    std::to_string(opt.folds) + " folds");
  if (opt.top_n.empty()) throw UsageError("at least one top-N value is required");
  for (auto n : opt.top_n)
    if (n < 1) throw UsageError("top-N values must be >= 1");
  cfg.validate();

  const auto fold_of = fold_assignment(corpus.trajectories.size(), opt.folds, opt.seed);
  EvaluationReport report;
  report.top_n = opt.top_n;
  report.folds.resize(opt.folds);
  ModelParams first;
  auto run = [&](std::size_t f) { report.folds[f] = evaluate_fold(corpus, cfg, opt, fold_of, f, f == 0 ? &first : nullptr); };

  const auto jobs = std::max<std::size_t>(1, std::min(opt.jobs, opt.folds));
  if (jobs == 1) {
    for (std::size_t f = 0; f < opt.folds; ++f) run(f);
  } else {
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w)
      workers.emplace_back([&, w] {
        for (std::size_t f = w; f < opt.folds; f += jobs) run(f);
      });
    for (auto& t : workers) t.join();
  }
  report.first_fold_params = std::move(first);
  return report;
}

/// Tab-separated report: one row per fold, then mean and std rows.
inline void write_report(std::ostream& out, const EvaluationReport& r) {
  auto fmt = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  out << "fold\tn_train\tn_test";
  for (auto n : r.top_n) out << "\tap@" << n;
  for (auto n : r.top_n) out << "\tbaseline_ap@" << n;
  out << "\tpmi\tfallbacks\n";
  for (const auto& f : r.folds) {
    out << f.fold << '\t' << f.n_train << '\t' << f.n_test;
    for (double v : f.ap) out << '\t' << fmt(v);
    for (double v : f.baseline_ap) out << '\t' << fmt(v);
    out << '\t' << fmt(f.pmi) << '\t' << f.frequency_fallbacks << '\n';
  }
  for (const bool is_mean : {true, false}) {
    auto stat = [&](auto get) { return is_mean ? r.mean(get) : r.stddev(get); };
    out << (is_mean ? "mean" : "std") << "\t-\t-";
    for (std::size_t i = 0; i < r.top_n.size(); ++i) out << '\t' << fmt(stat([i](const FoldResult& f) { return f.ap[i]; }));
    for (std::size_t i = 0; i < r.top_n.size(); ++i)
      out << '\t' << fmt(stat([i](const FoldResult& f) { return f.baseline_ap[i]; }));
    out << '\t' << fmt(stat([](const FoldResult& f) { return f.pmi; })) << "\t-\n";
  }
}

}  // namespace tralfm
