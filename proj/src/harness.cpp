#include "malpoison/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>

#include <openssl/evp.h>

#include "malpoison/parallel.hpp"

namespace malpoison {

namespace fs = std::filesystem;

void ExperimentConfig::validate() const {
  if (strategies.empty()) throw std::invalid_argument("experiment needs at least one strategy");
  if (!(max_fraction > 0.0 && max_fraction < 1.0)) throw std::invalid_argument("max_fraction must lie in (0, 1)");
  if (repetitions == 0) throw std::invalid_argument("repetitions must be at least 1");
  if (q == 0) throw std::invalid_argument("q-gram length must be positive");
  if (source.path.has_value() == source.synth.has_value()) {
    throw std::invalid_argument("experiment needs exactly one data source (file or synthetic)");
  }
  if (source.synth) source.synth->validate();
  if (!bandwidth.automatic && !(bandwidth.value > 0.0)) throw std::invalid_argument("bandwidth must be positive");
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  if (cfg.source.path) {
    j["data_source"] = {{"path", cfg.source.path->string()},
                        {"format", cfg.source.format == ReportFormat::jsonl ? "jsonl" : "token_lines"}};
  } else if (cfg.source.synth) {
    const auto& s = *cfg.source.synth;
    j["data_source"] = {{"synthetic",
                         {{"family_count", s.family_count},
                          {"samples_min", s.samples_min},
                          {"samples_max", s.samples_max},
                          {"vocabulary_size", s.vocabulary_size},
                          {"core_tokens_per_family", s.core_tokens_per_family},
                          {"core_inclusion_prob", s.core_inclusion_prob},
                          {"noise_min", s.noise_min},
                          {"noise_max", s.noise_max},
                          {"shared_tokens", s.shared_tokens},
                          {"seed", s.seed}}}};
  }
  j["q"] = cfg.q;
  std::vector<std::string> names;
  for (auto k : cfg.strategies) names.push_back(to_string(k));
  j["strategies"] = names;
  j["max_fraction"] = cfg.max_fraction;
  j["repetitions"] = cfg.repetitions;
  j["cutoff_mode"] = to_string(cfg.cutoff_mode);
  j["master_seed"] = cfg.master_seed;
  j["output_dir"] = cfg.output_dir.string();
  j["stratified"] = cfg.stratified;
  if (cfg.bandwidth.automatic) {
    j["bandwidth"] = "auto";
  } else {
    j["bandwidth"] = cfg.bandwidth.value;
  }
  j["count_all_clusters"] = cfg.count_all_clusters;
  return j;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  const auto& src = j.at("data_source");
  if (src.contains("path")) {
    cfg.source.path = src.at("path").get<std::string>();
    cfg.source.format = parse_report_format(src.value("format", "jsonl"));
  } else {
    const auto& s = src.at("synthetic");
    SynthConfig synth;
    synth.family_count = s.value("family_count", synth.family_count);
    synth.samples_min = s.value("samples_min", synth.samples_min);
    synth.samples_max = s.value("samples_max", synth.samples_max);
    synth.vocabulary_size = s.value("vocabulary_size", synth.vocabulary_size);
    synth.core_tokens_per_family = s.value("core_tokens_per_family", synth.core_tokens_per_family);
    synth.core_inclusion_prob = s.value("core_inclusion_prob", synth.core_inclusion_prob);
    synth.noise_min = s.value("noise_min", synth.noise_min);
    synth.noise_max = s.value("noise_max", synth.noise_max);
    synth.shared_tokens = s.value("shared_tokens", synth.shared_tokens);
    synth.seed = s.value("seed", synth.seed);
    cfg.source.synth = synth;
  }
  cfg.q = j.value("q", cfg.q);
  for (const auto& name : j.at("strategies")) cfg.strategies.push_back(parse_strategy(name.get<std::string>()));
  cfg.max_fraction = j.value("max_fraction", cfg.max_fraction);
  cfg.repetitions = j.value("repetitions", cfg.repetitions);
  cfg.cutoff_mode = parse_cutoff_mode(j.value("cutoff_mode", std::string("worst-case")));
  cfg.master_seed = j.value("master_seed", cfg.master_seed);
  cfg.output_dir = j.value("output_dir", std::string());
  cfg.stratified = j.value("stratified", cfg.stratified);
  if (auto it = j.find("bandwidth"); it != j.end() && it->is_number()) {
    cfg.bandwidth = {false, it->get<double>()};
  }
  cfg.count_all_clusters = j.value("count_all_clusters", cfg.count_all_clusters);
  return cfg;
}

std::size_t injection_budget(double max_fraction, std::size_t evaluation_size) {
  // The small slack keeps products such as 0.07 * 100 from rounding up.
  return static_cast<std::size_t>(std::ceil(max_fraction * static_cast<double>(evaluation_size) - 1e-9));
}

namespace {

SeriesStats stats_of(const std::vector<std::vector<double>>& columns) {
  SeriesStats out;
  for (const auto& values : columns) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    out.mean.push_back(mean);
    out.stddev.push_back(values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0);
  }
  return out;
}

}  // namespace

StrategyAggregate aggregate(StrategyKind kind, std::span<const std::vector<MetricsRecord>> traces,
                            std::size_t injections, std::size_t evaluation_size) {
  if (traces.empty()) throw std::invalid_argument("nothing to aggregate");
  StrategyAggregate agg;
  agg.kind = kind;
  std::vector<std::vector<double>> objective(injections + 1), clusters(injections + 1), precision(injections + 1),
      recall(injections + 1), f(injections + 1);
  for (const auto& trace : traces) {
    if (trace.empty()) throw std::invalid_argument("empty attack trace");
    for (std::size_t i = 0; i <= injections; ++i) {
      const auto& r = trace[std::min(i, trace.size() - 1)];
      objective[i].push_back(r.objective_dc);
      clusters[i].push_back(static_cast<double>(r.clusters));
      precision[i].push_back(r.precision);
      recall[i].push_back(r.recall);
      f[i].push_back(r.f_measure);
    }
  }
  for (std::size_t i = 0; i <= injections; ++i) {
    agg.poison_counts.push_back(i);
    agg.fractions.push_back(static_cast<double>(i) / static_cast<double>(evaluation_size));
  }
  agg.objective = stats_of(objective);
  agg.clusters = stats_of(clusters);
  agg.precision = stats_of(precision);
  agg.recall = stats_of(recall);
  agg.f_measure = stats_of(f);
  return agg;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const ReportSet reports =
      cfg.source.synth ? synth_generate(*cfg.source.synth) : load_reports(*cfg.source.path, cfg.source.format);
  if (!reports.labeled()) throw std::invalid_argument("experiment needs family labels for calibration");
  // Perfect knowledge: one feature space over T and S together.
  const auto space = std::make_shared<const FeatureSpace>(build_feature_space(reports, cfg.q));

  ExperimentResult res;
  res.config = cfg;
  res.repetitions.resize(cfg.repetitions);
  const std::size_t rep_jobs = std::min(cfg.jobs, cfg.repetitions);
  const std::size_t attack_jobs = rep_jobs > 1 ? 1 : cfg.jobs;

  parallel_for(cfg.repetitions, rep_jobs, [&](std::size_t r) {
    auto& rep = res.repetitions[r];
    rep.seed = derive_seed(cfg.master_seed, r);
    const auto parts = split(reports, derive_seed(rep.seed, 0), cfg.stratified);
    const auto calibration = embed_all(parts.calibration, space);
    const auto evaluation = embed_all(parts.evaluation, space);
    rep.calibration_size = calibration.size();
    rep.evaluation_size = evaluation.size();
    rep.cutoff = calibrate_cutoff(calibration);

    if (cfg.max_fraction * static_cast<double>(evaluation.size()) < 1.0 - 1e-9) {
      throw std::invalid_argument("max_fraction * |S| = " +
                                  format_real(cfg.max_fraction * static_cast<double>(evaluation.size())) +
                                  " is below one injection");
    }
    const std::size_t budget = injection_budget(cfg.max_fraction, evaluation.size());
    for (auto kind : cfg.strategies) {
      AttackConfig ac;
      ac.kind = kind;
      ac.bandwidth = cfg.bandwidth;
      ac.max_points = budget;
      ac.cutoff_mode = cfg.cutoff_mode;
      ac.cutoff = rep.cutoff;
      const auto stream = static_cast<std::uint64_t>(std::find(std::begin(all_strategies), std::end(all_strategies), kind) -
                                                     std::begin(all_strategies));
      ac.seed = derive_seed(rep.seed, 1 + stream);
      ac.count_all_clusters = cfg.count_all_clusters;
      ac.jobs = attack_jobs;
      rep.traces.push_back(run_attack(evaluation, ac));
    }
  });

  const std::size_t evaluation_size = res.repetitions.front().evaluation_size;
  for (const auto& rep : res.repetitions) {
    if (rep.evaluation_size != evaluation_size) throw std::logic_error("evaluation split size varies across repetitions");
  }
  res.injections = injection_budget(cfg.max_fraction, evaluation_size);
  for (std::size_t s = 0; s < cfg.strategies.size(); ++s) {
    std::vector<std::vector<MetricsRecord>> traces;
    for (const auto& rep : res.repetitions) traces.push_back(rep.traces[s].records);
    res.aggregates.push_back(aggregate(cfg.strategies[s], traces, res.injections, evaluation_size));
  }
  return res;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 digest failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < length; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

namespace {

constexpr const char* aggregate_header =
    "poison_count,poison_fraction,objective_dc_mean,objective_dc_std,clusters_mean,clusters_std,precision_mean,"
    "precision_std,recall_mean,recall_std,f_measure_mean,f_measure_std";

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream in(line);
  std::string cell;
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  return cells;
}

}  // namespace

void write_aggregate_csv(const StrategyAggregate& agg, std::ostream& out) {
  out << aggregate_header << '\n';
  for (std::size_t i = 0; i < agg.poison_counts.size(); ++i) {
    out << agg.poison_counts[i] << ',' << format_real(agg.fractions[i]);
    for (const SeriesStats* s : {&agg.objective, &agg.clusters, &agg.precision, &agg.recall, &agg.f_measure}) {
      out << ',' << format_real(s->mean[i]) << ',' << format_real(s->stddev[i]);
    }
    out << '\n';
  }
}

std::vector<ManifestEntry> write_results(const ExperimentResult& res, const fs::path& dir, bool force) {
  if (res.aggregates.empty() || res.repetitions.empty()) throw std::invalid_argument("cannot write an empty result");
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw std::runtime_error("output directory '" + dir.string() + "' is not empty (use --force to overwrite)");
  }
  fs::create_directories(dir / "raw");

  std::map<std::string, std::string> files;
  for (const auto& agg : res.aggregates) {
    std::ostringstream out;
    write_aggregate_csv(agg, out);
    files["aggregate_" + to_string(agg.kind) + ".csv"] = out.str();
  }
  std::ostringstream reps;
  reps << "repetition,seed,cutoff,calibration_size,evaluation_size\n";
  for (std::size_t r = 0; r < res.repetitions.size(); ++r) {
    const auto& rep = res.repetitions[r];
    reps << r << ',' << rep.seed << ',' << format_real(rep.cutoff) << ',' << rep.calibration_size << ','
         << rep.evaluation_size << '\n';
    for (const auto& trace : rep.traces) {
      const std::string stem = "raw/" + to_string(trace.kind) + "_rep" + std::to_string(r);
      std::ostringstream csv;
      write_metrics_csv(trace.records, csv);
      files[stem + ".csv"] = csv.str();
      std::ostringstream log;
      write_attack_log_json(trace, log);
      files[stem + ".json"] = log.str();
    }
  }
  files["repetitions.csv"] = reps.str();
  files["config.json"] = to_json(res.config).dump(2) + "\n";

  std::vector<ManifestEntry> manifest;
  std::ostringstream listing;
  for (const auto& [name, content] : files) {
    write_file(dir / name, content);
    manifest.push_back({name, sha256_hex(content)});
    listing << manifest.back().sha256 << "  " << name << '\n';
  }
  write_file(dir / "manifest.txt", listing.str());
  return manifest;
}

std::vector<StrategyAggregate> load_aggregates(const fs::path& dir) {
  std::vector<StrategyAggregate> out;
  for (auto kind : all_strategies) {
    const fs::path path = dir / ("aggregate_" + to_string(kind) + ".csv");
    if (!fs::exists(path)) continue;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    if (line != aggregate_header) throw std::runtime_error("unexpected header in '" + path.string() + "'");
    StrategyAggregate agg;
    agg.kind = kind;
    std::size_t row = 1;
    while (std::getline(in, line)) {
      ++row;
      if (line.empty()) continue;
      const auto cells = split_csv(line);
      if (cells.size() != 12) {
        throw std::runtime_error(path.string() + ":" + std::to_string(row) + ": expected 12 columns");
      }
      try {
        agg.poison_counts.push_back(std::stoul(cells[0]));
        agg.fractions.push_back(std::stod(cells[1]));
        SeriesStats* series[] = {&agg.objective, &agg.clusters, &agg.precision, &agg.recall, &agg.f_measure};
        for (std::size_t s = 0; s < 5; ++s) {
          series[s]->mean.push_back(std::stod(cells[2 + 2 * s]));
          series[s]->stddev.push_back(std::stod(cells[3 + 2 * s]));
        }
      } catch (const std::logic_error&) {
        throw std::runtime_error(path.string() + ":" + std::to_string(row) + ": malformed number");
      }
    }
    out.push_back(std::move(agg));
  }
  if (out.empty()) throw std::runtime_error("no aggregate CSVs found in '" + dir.string() + "'");
  return out;
}

}  // namespace malpoison
