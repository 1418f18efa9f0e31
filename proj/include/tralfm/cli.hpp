#pragma once

// Command-line front end. `dispatch` routes to one of
//
//   ingest | simulate | train | evaluate | predict | inspect | sweep
//
// and returns 0 on success, 1 on usage errors and 2 on data errors.
// Settings for each subcommand are declared once in `settings_for`; every
// setting can come from --config or from a flag of the same name.

#include <chrono>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "tralfm/config.hpp"
#include "tralfm/corpus_io.hpp"
#include "tralfm/evaluate.hpp"
#include "tralfm/model_io.hpp"
#include "tralfm/sampler.hpp"
#include "tralfm/simulate.hpp"

namespace tralfm::cli {

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"ingest", "simulate", "train", "evaluate", "predict", "inspect", "sweep"};
  return names;
}

inline std::vector<SettingSpec> settings_for(const std::string& sub) {
  const std::vector<SettingSpec> ingest{
      {"gap-seconds", "3600", "split trajectories at gaps longer than this"},
      {"min-len", "3", "drop trajectories with fewer locations"},
      {"order", "2", "sequence order r (locations per sequence = r + 1)"},
      {"bin-hours", "2", "time-bin width in hours (must divide 24)"},
      {"tz-offset", "0", "local time offset from UTC in hours"},
  };
  const std::vector<SettingSpec> model{
      {"k", "40", "number of latent factors"},
      {"alpha", "", "symmetric factor prior (default 50/K)"},
      {"beta", "0.01", "symmetric sequence prior"},
      {"eta", "0.01", "symmetric object prior"},
      {"gamma", "0.01", "symmetric time-bin prior"},
      {"components", "seq,obj,time", "emitted channels: seq[,obj][,time]"},
  };
  const std::vector<SettingSpec> sampling{
      {"iterations", "100", "Gibbs sweeps"},
      {"average-last", "1", "average parameter estimates over the last N sweeps"},
      {"seed", "", "random seed (generated and recorded when omitted)"},
  };
  const std::vector<SettingSpec> evaluation{
      {"folds", "10", "cross-validation folds"},
      {"topn", "1,5", "comma-separated list lengths for average precision"},
      {"q", "10", "top sequences per factor for PMI coherence"},
      {"epsilon", "1", "additive smoothing of PMI joint counts"},
      {"fold-in-iterations", "20", "sweeps when folding in a held-out prefix"},
      {"aggregation", "max", "combine sequence scores per location: max | sum"},
      {"jobs", "1", "parallel workers"},
  };
  auto cat = [](std::initializer_list<std::vector<SettingSpec>> parts) {
    std::vector<SettingSpec> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
  };

  if (sub == "ingest")
    return cat({{{"input", "", "passage records (object,location,timestamp)"}, {"out", "", "corpus file to write"}},
                ingest});
  if (sub == "simulate") {
    auto m = model;
    m[0].default_value = "5";
    return cat({{{"out", "", "corpus file to write"},
                 {"kind", "factors", "factors: sample the latent-factor model; routes: deterministic successors"},
                 {"truth", "", "write ground-truth parameters as a model file (kind=factors)"},
                 {"sequences", "200", "sequence vocabulary size"},
                 {"objects", "20", "number of objects"},
                 {"bins", "24", "number of time bins (2 * 24 / bin-hours)"},
                 {"trajectories", "2000", "number of trajectories"},
                 {"units", "10", "units per trajectory (kind=factors)"},
                 {"fanout", "4", "sequences sharing each context (kind=factors)"},
                 {"locations", "30", "number of locations (kind=routes)"},
                 {"length", "8", "locations per trajectory (kind=routes)"},
                 {"order", "2", "sequence order r"},
                 {"bin-hours", "2", "time-bin width (kind=routes)"},
                 {"tz-offset", "0", "local time offset (kind=routes)"},
                 {"seed", "", "random seed"}},
                m});
  }
  if (sub == "train")
    return cat({{{"corpus", "", "corpus file"},
                 {"out", "", "model file to write"},
                 {"format", "text", "model encoding: text | binary"},
                 {"trace", "", "write the per-sweep log-joint trace here"}},
                model, sampling});
  if (sub == "evaluate")
    return cat({{{"corpus", "", "corpus file"},
                 {"out", "", "report file (default: standard output)"},
                 {"inspect", "", "write a per-factor dump of the first fold's model here"}},
                model, sampling, evaluation});
  if (sub == "predict")
    return {{"model", "", "model file"},
            {"locations", "", "observed locations, oldest first, comma-separated"},
            {"timestamps", "", "timestamps of the observed locations (epoch or ISO-8601)"},
            {"object", "", "object id"},
            {"bin", "", "query time bin (default: bin of the last observed unit)"},
            {"topn", "5", "number of locations to return"},
            {"fold-in-iterations", "20", "sweeps when folding in the observed prefix"},
            {"aggregation", "max", "combine sequence scores per location: max | sum"},
            {"seed", "", "random seed"},
            {"out", "", "ranking file (default: standard output)"}};
  if (sub == "inspect")
    return {{"model", "", "model file"},
            {"factor", "", "1-based factor to show (default: all)"},
            {"q", "10", "entries per list"},
            {"out", "", "output file (default: standard output)"}};
  if (sub == "sweep")
    return cat({{{"param", "", "parameter to vary: k | order | bin-hours"},
                 {"values", "", "comma-separated values"},
                 {"input", "", "passage records (required for order and bin-hours sweeps)"},
                 {"corpus", "", "corpus file (k sweeps only)"},
                 {"out", "", "table file (default: standard output)"}},
                ingest, model, sampling, evaluation});
  throw UsageError("unknown subcommand '" + sub + "'");
}

namespace detail {

inline ModelConfig model_config(const RunConfig& rc, int order) {
  ModelConfig cfg;
  cfg.num_factors = rc.number<int>("k");
  cfg.order = order;
  if (auto a = rc.optional_double("alpha")) cfg.alpha = Prior{*a, {}};
  cfg.beta = Prior{rc.number<double>("beta"), {}};
  cfg.eta = Prior{rc.number<double>("eta"), {}};
  cfg.gamma = Prior{rc.number<double>("gamma"), {}};
  cfg.components = Components::parse(rc.str("components"));
  cfg.validate();
  return cfg;
}

inline IngestOptions ingest_options(const RunConfig& rc) {
  IngestOptions o;
  o.gap_seconds = rc.number<Timestamp>("gap-seconds");
  o.min_len = rc.number<std::size_t>("min-len");
  o.order = rc.number<int>("order");
  o.scheme.bin_hours = rc.number<int>("bin-hours");
  o.tz_offset_hours = rc.number<double>("tz-offset");
  o.scheme.validate();
  if (o.order < 1) throw UsageError("--order must be >= 1");
  if (o.gap_seconds < 0) throw UsageError("--gap-seconds must be >= 0");
  return o;
}

inline EvalOptions eval_options(RunConfig& rc) {
  EvalOptions o;
  o.folds = rc.number<std::size_t>("folds");
  o.train.iterations = rc.number<std::size_t>("iterations");
  o.train.average_last = rc.number<std::size_t>("average-last");
  o.top_n = rc.number_list<std::size_t>("topn");
  o.q = rc.number<std::size_t>("q");
  o.epsilon = rc.number<double>("epsilon");
  o.fold_in_iterations = rc.number<std::size_t>("fold-in-iterations");
  o.aggregation = parse_aggregation(rc.str("aggregation"));
  o.jobs = rc.number<std::size_t>("jobs");
  o.seed = rc.seed();
  return o;
}

// Writes to the file named by `key`, or to `fallback` when it is unset.
template <class Fn>
void with_output(const RunConfig& rc, const std::string& key, std::ostream& fallback, Fn fn) {
  if (!rc.has(key)) {
    fn(fallback);
    return;
  }
  std::ofstream f(rc.str(key), std::ios::binary);
  if (!f) throw DataError("cannot write '" + rc.str(key) + "'");
  fn(f);
  if (!f) throw DataError("write failed for '" + rc.str(key) + "'");
}

inline void manifest_for(const RunConfig& rc, const std::string& out_key, const std::vector<std::string>& inputs) {
  if (rc.has(out_key)) save_manifest(rc.str(out_key) + ".manifest", rc, inputs);
}

inline int run_ingest(RunConfig& rc, std::ostream& out) {
  const auto opt = ingest_options(rc);
  const auto& input = rc.required("input");
  const auto& path = rc.required("out");
  auto corpus = build_corpus(read_records_file(input, opt.tz_offset_hours), opt);
  save_corpus(path, corpus);
  manifest_for(rc, "out", {"input"});
  out << "trajectories\t" << corpus.trajectories.size() << "\nunits\t" << corpus.unit_count() << "\nsequences\t"
      << corpus.num_sequences() << "\nobjects\t" << corpus.num_objects() << "\nlocations\t"
      << corpus.vocab.locations.size() << '\n';
  return 0;
}

inline int run_simulate(RunConfig& rc, std::ostream& out) {
  const auto& path = rc.required("out");
  const auto seed = rc.seed();
  const auto& kind = rc.str("kind");
  Corpus corpus;
  if (kind == "factors") {
    const auto cfg = model_config(rc, rc.number<int>("order"));
    SimulationSpec spec;
    spec.sequences = rc.number<std::size_t>("sequences");
    spec.objects = rc.number<std::size_t>("objects");
    spec.bins = rc.number<std::size_t>("bins");
    spec.trajectories = rc.number<std::size_t>("trajectories");
    spec.units_per_trajectory = rc.number<std::size_t>("units");
    spec.fanout = rc.number<std::size_t>("fanout");
    spec.seed = seed;
    auto sim = simulate(cfg, spec);
    if (rc.has("truth")) {
      Model truth{cfg, sim.corpus.vocab, sim.corpus.scheme, 0.0, sim.truth, next_location_counts(sim.corpus)};
      save_model(rc.str("truth"), truth, Encoding::text);
    }
    corpus = std::move(sim.corpus);
  } else if (kind == "routes") {
    RouteSpec spec;
    spec.locations = rc.number<std::size_t>("locations");
    spec.objects = rc.number<std::size_t>("objects");
    spec.trajectories = rc.number<std::size_t>("trajectories");
    spec.length = rc.number<std::size_t>("length");
    spec.order = rc.number<int>("order");
    spec.seed = seed;
    IngestOptions opt;
    opt.order = spec.order;
    opt.scheme.bin_hours = rc.number<int>("bin-hours");
    opt.tz_offset_hours = rc.number<double>("tz-offset");
    corpus = build_corpus(simulate_routes(spec), opt);
  } else {
    throw UsageError("--kind must be 'factors' or 'routes'");
  }
  save_corpus(path, corpus);
  manifest_for(rc, "out", {});
  out << "trajectories\t" << corpus.trajectories.size() << "\nunits\t" << corpus.unit_count() << '\n';
  return 0;
}

inline Model to_model(const Corpus& corpus, const ModelConfig& cfg, ModelParams params) {
  return {cfg, corpus.vocab, corpus.scheme, corpus.tz_offset_hours, std::move(params), next_location_counts(corpus)};
}

inline int run_train(RunConfig& rc, std::ostream& out) {
  const auto corpus = load_corpus(rc.required("corpus"));
  const auto& path = rc.required("out");
  const auto enc = parse_encoding(rc.str("format"));
  const auto cfg = model_config(rc, corpus.order());
  TrainOptions opt;
  opt.iterations = rc.number<std::size_t>("iterations");
  opt.average_last = rc.number<std::size_t>("average-last");
  opt.seed = rc.seed();
  auto result = train(corpus, cfg, opt);
  save_model(path, to_model(corpus, cfg, std::move(result.params)), enc);
  if (rc.has("trace")) {
    with_output(rc, "trace", out, [&](std::ostream& t) {
      t << "iteration\tlog_joint\n";
      const auto& trace = result.state.log_joint_trace();
      for (std::size_t i = 0; i < trace.size(); ++i) t << i + 1 << '\t' << tralfm::detail::format_double(trace[i]) << '\n';
    });
  }
  manifest_for(rc, "out", {"corpus"});
  out << "factors\t" << cfg.num_factors << "\niterations\t" << opt.iterations << "\nlog_joint\t"
      << tralfm::detail::format_double(result.state.current_log_joint()) << '\n';
  return 0;
}

inline std::vector<FactorInspection> inspect_all(const ModelParams& params, const Vocabularies& vocab,
                                                 const TimeBinScheme& scheme, std::size_t q) {
  std::vector<FactorInspection> out;
  for (std::size_t k = 0; k < params.factors(); ++k) out.push_back(inspect_factor(params, vocab, scheme, k, q));
  return out;
}

inline int run_evaluate(RunConfig& rc, std::ostream& out) {
  const auto corpus = load_corpus(rc.required("corpus"));
  const auto cfg = model_config(rc, corpus.order());
  const auto opt = eval_options(rc);
  const auto report = evaluate(corpus, cfg, opt);
  with_output(rc, "out", out, [&](std::ostream& o) { write_report(o, report); });
  if (rc.has("inspect")) {
    with_output(rc, "inspect", out, [&](std::ostream& o) {
      write_inspection(o, inspect_all(*report.first_fold_params, corpus.vocab, corpus.scheme, opt.q));
    });
  }
  manifest_for(rc, "out", {"corpus"});
  return 0;
}

inline int run_predict(RunConfig& rc, std::ostream& out) {
  const auto model = load_model(rc.required("model"));
  const auto r = static_cast<std::size_t>(model.config.order);
  std::vector<std::string> names;
  for (auto tok : tralfm::detail::split(rc.required("locations"), ',')) names.emplace_back(tralfm::detail::trim(tok));
  if (names.size() < r)
    throw DataError("need at least " + std::to_string(r) + " observed locations, got " + std::to_string(names.size()));

  std::vector<Timestamp> stamps;
  if (rc.has("timestamps")) {
    for (auto tok : tralfm::detail::split(rc.str("timestamps"), ',')) {
      auto ts = parse_timestamp(tok, model.tz_offset_hours);
      if (!ts) throw DataError("unparseable timestamp '" + std::string(tok) + "'");
      stamps.push_back(*ts);
    }
    if (stamps.size() != names.size()) throw DataError("--timestamps must match --locations in length");
  }

  const auto object = model.vocab.objects.find(rc.required("object"));
  std::vector<std::optional<Id>> locs;
  for (const auto& n : names) locs.push_back(model.vocab.locations.find(n));

  TrajectoryUnits prefix;
  for (std::size_t i = 0; i + r < names.size(); ++i) {
    SequenceKey key;
    bool known = true;
    for (std::size_t j = 0; j <= r; ++j) {
      known = known && locs[i + j].has_value();
      key.push_back(locs[i + j].value_or(0));
    }
    Id bin = kUnknownSequence;
    if (!stamps.empty()) {
      long double sum = 0;
      for (std::size_t j = 0; j <= r; ++j) sum += static_cast<long double>(stamps[i + j]);
      const auto mean = static_cast<Timestamp>(std::floor(sum / static_cast<long double>(r + 1)));
      bin = static_cast<Id>(time_bin(mean, model.scheme, model.tz_offset_hours));
    }
    const Id seq = known ? model.vocab.sequences.find(key).value_or(kUnknownSequence) : kUnknownSequence;
    prefix.units.push_back({seq, object.value_or(kUnknownSequence), bin});
  }

  std::optional<Id> bin;
  if (rc.has("bin")) {
    bin = rc.number<Id>("bin");
    if (*bin >= static_cast<Id>(model.scheme.total_bins())) throw UsageError("--bin out of range");
  } else if (!prefix.units.empty() && prefix.units.back().bin != kUnknownSequence) {
    bin = prefix.units.back().bin;
  }

  SequenceKey context;
  bool context_known = true;
  for (std::size_t i = names.size() - r; i < names.size(); ++i) {
    context_known = context_known && locs[i].has_value();
    context.push_back(locs[i].value_or(0));
  }

  const Predictor predictor(model.params, model.config, model.vocab, model.location_counts);
  PredictOptions opt;
  opt.top_n = rc.number<std::size_t>("topn");
  opt.fold_in_iterations = rc.number<std::size_t>("fold-in-iterations");
  opt.aggregation = parse_aggregation(rc.str("aggregation"));
  opt.seed = rc.seed();
  Prediction pred;
  if (context_known) {
    pred = predict_next(predictor, prefix, context, object, bin, opt);
  } else {
    pred.ranking = predictor.frequency_ranking(opt.top_n);
    pred.frequency_fallback = true;
  }
  with_output(rc, "out", out, [&](std::ostream& o) {
    o << "rank\tlocation\tscore\n";
    for (std::size_t i = 0; i < pred.ranking.size(); ++i)
      o << i + 1 << '\t' << model.vocab.locations.decode(pred.ranking[i].location) << '\t'
        << tralfm::detail::format_double(pred.ranking[i].score) << '\n';
    if (pred.frequency_fallback) o << "# fallback: no known continuation of the context; ranked by frequency\n";
    if (pred.prior_theta) o << "# note: no known sequence in the prefix; factor mixture is the prior mean\n";
  });
  manifest_for(rc, "out", {"model"});
  return 0;
}

inline int run_inspect(RunConfig& rc, std::ostream& out) {
  const auto model = load_model(rc.required("model"));
  const auto q = rc.number<std::size_t>("q");
  std::vector<FactorInspection> dump;
  if (rc.has("factor")) {
    const auto f = rc.number<std::size_t>("factor");
    if (f < 1) throw UsageError("--factor is 1-based");
    dump.push_back(inspect_factor(model.params, model.vocab, model.scheme, f - 1, q));
  } else {
    dump = inspect_all(model.params, model.vocab, model.scheme, q);
  }
  with_output(rc, "out", out, [&](std::ostream& o) { write_inspection(o, dump); });
  manifest_for(rc, "out", {"model"});
  return 0;
}

}  // namespace detail

struct SweepRow {
  std::string value;
  std::vector<double> ap;
  double pmi = 0.0;
  double seconds = 0.0;
};

/// Evaluate once per value of `param` (k, order or bin-hours), all other
/// settings held at `base`. Values are validated before any run starts.
inline std::vector<SweepRow> sweep(RunConfig base, std::ostream* progress = nullptr) {
  const auto param = base.required("param");
  if (param != "k" && param != "order" && param != "bin-hours")
    throw UsageError("--param must be one of k, order, bin-hours");
  const auto values = base.number_list<int>("values");
  if (values.empty()) throw UsageError("--values must not be empty");
  for (int v : values) {
    if (param == "bin-hours" && !TimeBinScheme::valid_bin_hours(v))
      throw UsageError("bin-hours value " + std::to_string(v) + " does not divide 24");
    if (v < 1) throw UsageError(param + " values must be >= 1");
  }
  if (param != "k" && !base.has("input")) throw UsageError("sweeping " + param + " needs raw records via --input");
  if (!base.has("input") && !base.has("corpus")) throw UsageError("sweep needs --input or --corpus");
  base.seed();

  std::optional<Corpus> fixed;
  std::vector<PassageRecord> records;
  if (base.has("input")) {
    records = read_records_file(base.str("input"), base.number<double>("tz-offset"));
  } else {
    fixed = load_corpus(base.str("corpus"));
  }

  std::vector<SweepRow> rows(values.size());
  auto run_one = [&](std::size_t i) {
    RunConfig rc = base;
    rc.set(param, std::to_string(values[i]));
    rc.set("jobs", "1");
    const auto start = std::chrono::steady_clock::now();
    const Corpus corpus = fixed ? *fixed : build_corpus(records, detail::ingest_options(rc));
    const auto cfg = detail::model_config(rc, corpus.order());
    const auto report = evaluate(corpus, cfg, detail::eval_options(rc));
    rows[i].value = std::to_string(values[i]);
    for (std::size_t j = 0; j < report.top_n.size(); ++j) rows[i].ap.push_back(report.mean_ap(j));
    rows[i].pmi = report.mean_pmi();
    rows[i].seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (progress) *progress << "sweep " << param << "=" << values[i] << " done\n";
  };
  const auto jobs = std::max<std::size_t>(1, std::min(base.number<std::size_t>("jobs"), values.size()));
  if (jobs == 1) {
    for (std::size_t i = 0; i < values.size(); ++i) run_one(i);
  } else {
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w)
      workers.emplace_back([&, w] {
        for (std::size_t i = w; i < values.size(); i += jobs) run_one(i);
      });
    for (auto& t : workers) t.join();
  }
  return rows;
}

inline void write_sweep(std::ostream& out, const std::string& param, const std::vector<std::size_t>& top_n,
                        const std::vector<SweepRow>& rows) {
  out << param;
  for (auto n : top_n) out << "\tap@" << n;
  out << "\tpmi\tseconds\n";
  char buf[64];
  for (const auto& r : rows) {
    out << r.value;
    for (double v : r.ap) {
      std::snprintf(buf, sizeof buf, "%.6f", v);
      out << '\t' << buf;
    }
    std::snprintf(buf, sizeof buf, "%.6f\t%.3f", r.pmi, r.seconds);
    out << '\t' << buf << '\n';
  }
}

namespace detail {

inline int run_sweep(RunConfig& rc, std::ostream& out, std::ostream& err) {
  rc.seed();
  const auto rows = sweep(rc, &err);
  with_output(rc, "out", out, [&](std::ostream& o) {
    write_sweep(o, rc.str("param"), rc.number_list<std::size_t>("topn"), rows);
  });
  manifest_for(rc, "out", {"input", "corpus"});
  return 0;
}

}  // namespace detail

inline std::string usage() {
  return "usage: tralfm <subcommand> [--config FILE] [--key value ...]\n"
         "subcommands: ingest simulate train evaluate predict inspect sweep\n"
         "run 'tralfm <subcommand> --help' for the settings of a subcommand\n";
}

/// Entry point shared by the executable and the tests.
inline int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  if (args.size() < 2) {
    err << usage();
    return 1;
  }
  CLI::App app{"Latent-factor modelling of traffic trajectories", "tralfm"};
  app.require_subcommand(1);
  std::map<std::string, std::map<std::string, std::string>> buffers;
  std::map<std::string, std::map<std::string, CLI::Option*>> options;
  std::map<std::string, std::string> config_paths;
  for (const auto& name : subcommands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_paths[name], "flat key = value settings file");
    for (const auto& s : settings_for(name)) {
      std::string help = s.help;
      if (!s.default_value.empty()) help += " [default: " + s.default_value + "]";
      options[name][s.key] = sub->add_option("--" + s.key, buffers[name][s.key], help);
    }
  }

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << usage();
    return 1;
  }

  std::string name;
  for (auto* sub : app.get_subcommands()) name = sub->get_name();
  try {
    SettingMap flags;
    for (const auto& [key, opt] : options[name])
      if (opt->count() > 0) flags[key] = buffers[name][key];
    SettingMap file;
    if (!config_paths[name].empty()) file = parse_config_file(config_paths[name]);
    auto rc = RunConfig::resolve(name, settings_for(name), file, flags);
    if (name == "ingest") return detail::run_ingest(rc, out);
    if (name == "simulate") return detail::run_simulate(rc, out);
    if (name == "train") return detail::run_train(rc, out);
    if (name == "evaluate") return detail::run_evaluate(rc, out);
    if (name == "predict") return detail::run_predict(rc, out);
    if (name == "inspect") return detail::run_inspect(rc, out);
    if (name == "sweep") return detail::run_sweep(rc, out, err);
    err << usage();
    return 1;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace tralfm::cli
