#include "malpoison/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "malpoison/attack.hpp"
#include "malpoison/dataset.hpp"
#include "malpoison/embedding.hpp"
#include "malpoison/hac.hpp"
#include "malpoison/harness.hpp"

namespace malpoison {

namespace fs = std::filesystem;

namespace {

struct StageError : std::runtime_error {
  StageError(const std::string& stage, const std::string& what) : std::runtime_error(stage + ": " + what) {}
};

template <class Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

struct Common {
  std::uint64_t seed = 0;
  fs::path output = ".";
  std::size_t jobs = 1;
};

struct InputOptions {
  fs::path input;
  std::string format = "jsonl";
  std::size_t q = 1;
};

struct SynthOptions {
  SynthConfig cfg;
  std::size_t samples = 0;
};

struct Options {
  Common common;
  InputOptions in;
  SynthOptions synth;
  std::optional<double> cutoff;
  bool calibrate = false;
  std::vector<std::string> strategies;
  std::string strategy = "bridge-best";
  double max_fraction = 0.05;
  std::size_t max_points = 0;
  std::size_t reps = 5;
  std::string cutoff_mode = "worst-case";
  std::string bandwidth = "auto";
  bool force = false;
  bool unstratified = false;
  bool count_all_clusters = false;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--seed", o.common.seed, "Master random seed")->capture_default_str();
  cmd->add_option("--output,-o", o.common.output, "Output directory")->capture_default_str();
  cmd->add_option("--jobs,-j", o.common.jobs, "Worker thread cap")->check(CLI::PositiveNumber)->capture_default_str();
}

CLI::Option* add_input(CLI::App* cmd, Options& o) {
  auto* input = cmd->add_option("--input,-i", o.in.input, "Report file")->check(CLI::ExistingFile);
  cmd->add_option("--format", o.in.format, "Report format")
      ->check(CLI::IsMember({"jsonl", "token_lines"}))
      ->capture_default_str();
  cmd->add_option("--qgram,-q", o.in.q, "q-gram length")->check(CLI::PositiveNumber)->capture_default_str();
  return input;
}

void add_synth(CLI::App* cmd, Options& o) {
  auto& s = o.synth.cfg;
  cmd->add_option("--synth-families", s.family_count, "Synthetic family count")->capture_default_str();
  cmd->add_option("--synth-samples", o.synth.samples, "Samples per family (fixed size)");
  cmd->add_option("--synth-samples-min", s.samples_min, "Minimum samples per family")->capture_default_str();
  cmd->add_option("--synth-samples-max", s.samples_max, "Maximum samples per family")->capture_default_str();
  cmd->add_option("--synth-vocabulary", s.vocabulary_size, "Token vocabulary size")->capture_default_str();
  cmd->add_option("--synth-core-tokens", s.core_tokens_per_family, "Core tokens per family")->capture_default_str();
  cmd->add_option("--synth-core-prob", s.core_inclusion_prob, "Core token inclusion probability")
      ->capture_default_str();
  cmd->add_option("--synth-noise-min", s.noise_min, "Minimum noise tokens per sample")->capture_default_str();
  cmd->add_option("--synth-noise-max", s.noise_max, "Maximum noise tokens per sample")->capture_default_str();
  cmd->add_option("--synth-shared-tokens", s.shared_tokens, "Core tokens shared by neighbouring families")
      ->capture_default_str();
}

SynthConfig synth_config(const Options& o) {
  SynthConfig cfg = o.synth.cfg;
  if (o.synth.samples > 0) cfg.samples_min = cfg.samples_max = o.synth.samples;
  cfg.seed = o.common.seed;
  return cfg;
}

Bandwidth parse_bandwidth(const std::string& text) {
  if (text == "auto") return {};
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used != text.size() || !(value > 0.0)) throw CLI::ValidationError("--bandwidth", "expected 'auto' or a positive number");
  return {false, value};
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

ReportSet load(const Options& o) {
  return stage("load", [&] { return load_reports(o.in.input, parse_report_format(o.in.format)); });
}

EmbeddedDataset embed_reports(const ReportSet& reports, std::size_t q) {
  return stage("embed", [&] {
    auto space = std::make_shared<const FeatureSpace>(build_feature_space(reports, q));
    return embed_all(reports, space);
  });
}

void cmd_synth(const Options& o, std::ostream& out) {
  const auto reports = stage("synth", [&] { return synth_generate(synth_config(o)); });
  const fs::path path = o.common.output / "reports.jsonl";
  stage("write", [&] {
    auto file = open_output(path);
    write_reports_jsonl(reports, file);
  });
  out << "wrote " << reports.size() << " reports to " << path.string() << '\n';
}

void cmd_embed(const Options& o, std::ostream& out) {
  const auto data = embed_reports(load(o), o.in.q);
  const fs::path vectors = o.common.output / "vectors.tsv";
  const fs::path features = o.common.output / "features.txt";
  stage("write", [&] {
    auto file = open_output(vectors);
    write_vector_dump(data, file);
    auto names = open_output(features);
    for (FeatureIndex f = 0; f < data.space->dimension(); ++f) {
      const auto& gram = data.space->gram(f);
      names << f << '\t';
      for (std::size_t t = 0; t < gram.size(); ++t) names << (t ? " " : "") << gram[t];
      names << '\n';
    }
  });
  out << "embedded " << data.size() << " reports into " << data.space->dimension() << " dimensions\n";
}

void write_assignment(const EmbeddedDataset& data, const Partition& part, const fs::path& path) {
  auto file = open_output(path);
  file << "id,cluster\n";
  for (std::size_t i = 0; i < data.size(); ++i) file << data.vectors[i].origin_id().value_or(std::to_string(i)) << ',' << part[i] << '\n';
}

void cmd_cluster(const Options& o, std::ostream& out) {
  const auto data = embed_reports(load(o), o.in.q);
  const auto dend = stage("cluster", [&] { return single_linkage(data); });
  const double cutoff = o.cutoff ? *o.cutoff : stage("calibrate", [&] {
    if (!data.labels) throw std::invalid_argument("--calibrate needs labeled reports");
    return calibrate_cutoff(dend, *data.labels);
  });
  const auto part = stage("cluster", [&] { return cut(dend, cutoff); });
  stage("write", [&] {
    auto file = open_output(o.common.output / "dendrogram.csv");
    write_dendrogram_csv(dend, file);
    write_assignment(data, part, o.common.output / "assignments.csv");
  });
  out << "cutoff " << format_real(cutoff) << ": " << part.cluster_count() << " clusters\n";
  if (data.labels) {
    const auto q = f_measure(part, *data.labels);
    out << "precision " << format_real(q.precision) << " recall " << format_real(q.recall) << " f_measure "
        << format_real(q.f) << '\n';
  }
}

void cmd_calibrate(const Options& o, std::ostream& out) {
  const auto data = embed_reports(load(o), o.in.q);
  const auto result = stage("calibrate", [&] {
    if (!data.labels) throw std::invalid_argument("calibration needs labeled reports");
    const auto dend = single_linkage(data);
    const double cutoff = calibrate_cutoff(dend, *data.labels);
    const auto part = cut(dend, cutoff);
    return std::make_pair(cutoff, std::make_pair(part.cluster_count(), f_measure(part, *data.labels)));
  });
  const auto& [cutoff, rest] = result;
  stage("write", [&] {
    nlohmann::json j = {{"cutoff", cutoff},
                        {"clusters", rest.first},
                        {"precision", rest.second.precision},
                        {"recall", rest.second.recall},
                        {"f_measure", rest.second.f}};
    open_output(o.common.output / "calibration.json") << j.dump(2) << '\n';
  });
  out << "cutoff " << format_real(cutoff) << ": " << rest.first << " clusters, f_measure " << format_real(rest.second.f)
      << '\n';
}

void cmd_attack(const Options& o, std::ostream& out) {
  const auto reports = load(o);
  const auto space = stage("embed", [&] { return std::make_shared<const FeatureSpace>(build_feature_space(reports, o.in.q)); });

  // Without an explicit cutoff the input is split and T calibrates it.
  EmbeddedDataset target;
  double cutoff = 0.0;
  if (o.cutoff) {
    target = stage("embed", [&] { return embed_all(reports, space); });
    cutoff = *o.cutoff;
  } else {
    const auto parts = stage("split", [&] {
      if (!reports.labeled()) throw std::invalid_argument("calibration needs labeled reports (or pass --cutoff)");
      return split(reports, derive_seed(o.common.seed, 0), !o.unstratified);
    });
    const auto calibration = stage("embed", [&] { return embed_all(parts.calibration, space); });
    target = stage("embed", [&] { return embed_all(parts.evaluation, space); });
    cutoff = stage("calibrate", [&] { return calibrate_cutoff(calibration); });
  }

  AttackConfig cfg;
  cfg.kind = parse_strategy(o.strategy);
  cfg.bandwidth = parse_bandwidth(o.bandwidth);
  cfg.max_points = o.max_points > 0 ? o.max_points : injection_budget(o.max_fraction, target.size());
  cfg.cutoff_mode = parse_cutoff_mode(o.cutoff_mode);
  cfg.cutoff = cutoff;
  cfg.seed = derive_seed(o.common.seed, 1);
  cfg.count_all_clusters = o.count_all_clusters;
  cfg.jobs = o.common.jobs;
  const auto trace = stage("attack", [&] { return run_attack(target, cfg); });

  stage("write", [&] {
    auto csv = open_output(o.common.output / "metrics.csv");
    write_metrics_csv(trace.records, csv);
    auto log = open_output(o.common.output / "attack_log.json");
    write_attack_log_json(trace, log);
    auto poison = open_output(o.common.output / "poison.tsv");
    for (std::size_t p = 0; p < trace.injected.size(); ++p) {
      poison << "poison-" << p << '\t' << trace.injected_base_ids[p] << '\t';
      const auto active = trace.injected[p].vector.active();
      for (std::size_t t = 0; t < active.size(); ++t) poison << (t ? "," : "") << active[t];
      poison << '\n';
    }
  });
  const auto& last = trace.records.back();
  out << to_string(trace.kind) << ": " << trace.injected.size() << " injections, objective "
      << format_real(last.objective_dc) << ", " << last.clusters << " clusters, f_measure "
      << format_real(last.f_measure) << '\n';
  if (trace.terminated_early) out << "stopped early: " << trace.termination_reason << '\n';
}

void cmd_experiment(const Options& o, std::ostream& out) {
  ExperimentConfig cfg;
  if (!o.in.input.empty()) {
    cfg.source.path = o.in.input;
    cfg.source.format = parse_report_format(o.in.format);
  } else {
    cfg.source.synth = synth_config(o);
  }
  cfg.q = o.in.q;
  for (const auto& name : o.strategies) {
    if (name == "all") {
      cfg.strategies.assign(std::begin(all_strategies), std::end(all_strategies));
    } else {
      cfg.strategies.push_back(parse_strategy(name));
    }
  }
  if (cfg.strategies.empty()) cfg.strategies.assign(std::begin(all_strategies), std::end(all_strategies));
  cfg.max_fraction = o.max_fraction;
  cfg.repetitions = o.reps;
  cfg.cutoff_mode = parse_cutoff_mode(o.cutoff_mode);
  cfg.master_seed = o.common.seed;
  cfg.output_dir = o.common.output;
  cfg.stratified = !o.unstratified;
  cfg.bandwidth = parse_bandwidth(o.bandwidth);
  cfg.count_all_clusters = o.count_all_clusters;
  cfg.jobs = o.common.jobs;

  if (!o.force && fs::exists(cfg.output_dir) && !fs::is_empty(cfg.output_dir)) {
    throw StageError("write", "output directory '" + cfg.output_dir.string() +
                                  "' is not empty (use --force to overwrite)");
  }
  const auto res = stage("experiment", [&] { return run_experiment(cfg); });
  const auto manifest = stage("write", [&] { return write_results(res, cfg.output_dir, o.force); });
  out << "wrote " << manifest.size() << " files to " << cfg.output_dir.string() << '\n';
  for (const auto& agg : res.aggregates) {
    out << to_string(agg.kind) << ": objective " << format_real(agg.objective.mean.back()) << ", clusters "
        << format_real(agg.clusters.mean.back()) << ", f_measure " << format_real(agg.f_measure.mean.back()) << '\n';
  }
}

void cmd_render(const Options& o, std::ostream& out) {
  const auto aggregates = stage("load", [&] { return load_aggregates(o.in.input); });
  const auto written = stage("render", [&] { return render_curves(aggregates, o.common.output); });
  for (const auto& path : written) out << "wrote " << path.string() << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Poisoning attacks against single-linkage clustering of behavioral reports", "malpoison"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  Options o;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled report set (reports.jsonl)");
  add_common(synth, o);
  add_synth(synth, o);

  auto* embed = app.add_subcommand("embed", "Embed reports as binary q-gram vectors (vectors.tsv, features.txt)");
  add_common(embed, o);
  add_input(embed, o)->required();

  auto* cluster = app.add_subcommand("cluster", "Single-linkage clustering (dendrogram.csv, assignments.csv)");
  add_common(cluster, o);
  add_input(cluster, o)->required();
  auto* cutoff_opt = cluster->add_option("--cutoff", o.cutoff, "Cut height")->check(CLI::NonNegativeNumber);
  auto* calibrate_flag = cluster->add_flag("--calibrate", o.calibrate, "Choose the cutoff by F-measure");
  cutoff_opt->excludes(calibrate_flag);

  auto* calibrate = app.add_subcommand("calibrate", "Pick the F-measure-maximizing cutoff (calibration.json)");
  add_common(calibrate, o);
  add_input(calibrate, o)->required();

  auto* attack = app.add_subcommand("attack", "Run one poisoning strategy (metrics.csv, attack_log.json, poison.tsv)");
  add_common(attack, o);
  add_input(attack, o)->required();
  attack->add_option("--strategy,-s", o.strategy, "Attack strategy")
      ->check(CLI::IsMember({"random", "random-best", "bridge-best", "bridge-hard", "bridge-soft", "fmeasure-best"}))
      ->capture_default_str();
  attack->add_option("--cutoff", o.cutoff, "Reference cutoff; without it the input is split and T calibrates it")
      ->check(CLI::NonNegativeNumber);
  attack->add_option("--max-fraction", o.max_fraction, "Poison budget as a fraction of the attacked set")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  attack->add_option("--max-points", o.max_points, "Poison budget as a count (overrides --max-fraction)");
  attack->add_option("--cutoff-mode", o.cutoff_mode, "Cut used to evaluate the poisoned data")
      ->check(CLI::IsMember({"worst-case", "fixed"}))
      ->capture_default_str();
  attack->add_option("--bandwidth", o.bandwidth, "KDE bandwidth for bridge-soft ('auto' or a number)")
      ->capture_default_str();
  attack->add_flag("--count-all-clusters", o.count_all_clusters, "Count clusters holding only poison points");
  attack->add_flag("--unstratified", o.unstratified, "Plain random split instead of per-family");

  auto* experiment = app.add_subcommand("experiment", "Repeated split/calibrate/attack runs with aggregated curves");
  add_common(experiment, o);
  add_input(experiment, o);
  add_synth(experiment, o);
  experiment->add_option("--strategy,-s", o.strategies, "Strategy to run (repeatable, or 'all'; default all)")
      ->check(CLI::IsMember(
          {"all", "random", "random-best", "bridge-best", "bridge-hard", "bridge-soft", "fmeasure-best"}));
  experiment->add_option("--max-fraction", o.max_fraction, "Largest poison fraction of S")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  experiment->add_option("--reps", o.reps, "Repetitions")->check(CLI::PositiveNumber)->capture_default_str();
  experiment->add_option("--cutoff-mode", o.cutoff_mode, "Cut used to evaluate the poisoned data")
      ->check(CLI::IsMember({"worst-case", "fixed"}))
      ->capture_default_str();
  experiment->add_option("--bandwidth", o.bandwidth, "KDE bandwidth for bridge-soft ('auto' or a number)")
      ->capture_default_str();
  experiment->add_flag("--count-all-clusters", o.count_all_clusters, "Count clusters holding only poison points");
  experiment->add_flag("--unstratified", o.unstratified, "Plain random split instead of per-family");
  experiment->add_flag("--force", o.force, "Overwrite a non-empty output directory");

  auto* render = app.add_subcommand("render", "Draw objective, cluster and F-measure curves as SVG");
  add_common(render, o);
  render->add_option("--input,-i", o.in.input, "Experiment output directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
    if (cluster->parsed() && !o.cutoff && !o.calibrate) {
      throw CLI::RequiredError("--cutoff or --calibrate");
    }
    if (attack->parsed()) parse_bandwidth(o.bandwidth);
    if (experiment->parsed()) parse_bandwidth(o.bandwidth);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    const CLI::App* failed = &app;
    for (const auto* sub : app.get_subcommands()) failed = sub;
    err << "malpoison: usage: " << e.what() << "\n\n" << failed->help();
    return 2;
  }

  try {
    if (synth->parsed()) cmd_synth(o, out);
    if (embed->parsed()) cmd_embed(o, out);
    if (cluster->parsed()) cmd_cluster(o, out);
    if (calibrate->parsed()) cmd_calibrate(o, out);
    if (attack->parsed()) cmd_attack(o, out);
    if (experiment->parsed()) cmd_experiment(o, out);
    if (render->parsed()) cmd_render(o, out);
  } catch (const std::exception& e) {
    err << "malpoison: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace malpoison
