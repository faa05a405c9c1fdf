#include "malpoison/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "malpoison/random.hpp"

namespace malpoison {

namespace {

std::vector<std::string> split_whitespace(const std::string& text) {
  std::vector<std::string> tokens;
  std::istringstream in(text);
  std::string token;
  while (in >> token) tokens.push_back(std::move(token));
  return tokens;
}

bool is_blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

ReportSet parse_token_lines(std::istream& in, const std::string& filename) {
  std::vector<Report> reports;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;

    Report report;
    report.id = filename + ":" + std::to_string(line_no);
    auto tab = line.find('\t');
    if (tab != std::string::npos) {
      std::string family = line.substr(0, tab);
      if (is_blank(family)) {
        throw DataError("line " + std::to_string(line_no) + ": empty family label before tab");
      }
      report.family = split_whitespace(family).front();
      report.events = split_whitespace(line.substr(tab + 1));
    } else {
      report.events = split_whitespace(line);
    }
    if (report.events.empty()) {
      throw DataError("line " + std::to_string(line_no) + ": report has no events");
    }
    reports.push_back(std::move(report));
  }
  return ReportSet(std::move(reports), Provenance::ingested);
}

ReportSet parse_jsonl(std::istream& in, const std::string& filename) {
  std::vector<Report> reports;
  std::string line;
  std::size_t line_no = 0;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const std::string where = "record " + std::to_string(record) + " (line " + std::to_string(line_no) + ")";

    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(where + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw DataError(where + ": expected a JSON object");

    Report report;
    if (auto it = j.find("id"); it != j.end()) {
      if (!it->is_string()) throw DataError(where + ": field 'id' must be a string");
      report.id = it->get<std::string>();
    } else {
      report.id = filename + ":" + std::to_string(record);
    }
    if (auto it = j.find("family"); it != j.end() && !it->is_null()) {
      if (!it->is_string()) throw DataError(where + ": field 'family' must be a string");
      report.family = it->get<std::string>();
    }
    auto events = j.find("events");
    if (events == j.end() || !events->is_array()) {
      throw DataError(where + ": field 'events' must be an array");
    }
    for (const auto& e : *events) {
      if (!e.is_string()) throw DataError(where + ": events must be strings");
      report.events.push_back(e.get<std::string>());
    }
    if (report.events.empty()) throw DataError(where + ": report has no events");
    reports.push_back(std::move(report));
    ++record;
  }
  return ReportSet(std::move(reports), Provenance::ingested);
}

std::string token_name(std::size_t index, std::size_t vocabulary_size) {
  std::size_t width = 2;
  for (std::size_t v = vocabulary_size - 1; v >= 100; v /= 10) ++width;
  std::string digits = std::to_string(index);
  return "ev" + std::string(width > digits.size() ? width - digits.size() : 0, '0') + digits;
}

}  // namespace

ReportSet::ReportSet(std::vector<Report> reports, Provenance provenance)
    : reports_(std::move(reports)), provenance_(provenance) {
  std::set<std::string> ids;
  std::size_t labeled = 0;
  for (std::size_t i = 0; i < reports_.size(); ++i) {
    const auto& r = reports_[i];
    if (r.events.empty()) throw DataError("report '" + r.id + "' has no events");
    if (!ids.insert(r.id).second) throw DataError("duplicate report id '" + r.id + "'");
    if (r.family) ++labeled;
  }
  if (labeled != 0 && labeled != reports_.size()) {
    throw DataError("mixed labeled and unlabeled reports (" + std::to_string(labeled) + " of " +
                    std::to_string(reports_.size()) + " labeled)");
  }
}

ReportFormat parse_report_format(const std::string& name) {
  if (name == "token_lines" || name == "tokens") return ReportFormat::token_lines;
  if (name == "jsonl") return ReportFormat::jsonl;
  throw DataError("unknown report format '" + name + "'");
}

ReportSet load_reports(const std::filesystem::path& path, ReportFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  const std::string filename = path.filename().string();
  switch (format) {
    case ReportFormat::token_lines:
      return parse_token_lines(in, filename);
    case ReportFormat::jsonl:
      return parse_jsonl(in, filename);
  }
  throw DataError("unsupported format");
}

void write_reports_jsonl(const ReportSet& set, std::ostream& out) {
  for (const auto& r : set.reports()) {
    nlohmann::json j;
    j["id"] = r.id;
    if (r.family) j["family"] = *r.family;
    j["events"] = r.events;
    out << j.dump() << '\n';
  }
}

void SynthConfig::validate() const {
  if (family_count == 0) throw DataError("synth: family_count must be positive");
  if (samples_min == 0 || samples_min > samples_max) {
    throw DataError("synth: samples per family must be a positive range");
  }
  if (core_tokens_per_family == 0) throw DataError("synth: core_tokens_per_family must be positive");
  if (!(core_inclusion_prob > 0.0 && core_inclusion_prob <= 1.0)) {
    throw DataError("synth: core_inclusion_prob must lie in (0, 1]");
  }
  if (noise_min > noise_max) throw DataError("synth: noise range is empty");
  if (shared_tokens >= core_tokens_per_family) {
    throw DataError("synth: shared_tokens must be smaller than core_tokens_per_family");
  }
  const std::size_t stride = core_tokens_per_family - shared_tokens;
  const std::size_t needed = (family_count - 1) * stride + core_tokens_per_family;
  if (needed > vocabulary_size) {
    throw DataError("synth: vocabulary of " + std::to_string(vocabulary_size) + " tokens is too small, " +
                    std::to_string(needed) + " needed for the family cores");
  }
}

ReportSet synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t stride = cfg.core_tokens_per_family - cfg.shared_tokens;

  std::vector<Report> reports;
  for (std::size_t f = 0; f < cfg.family_count; ++f) {
    const std::size_t count = uniform_between(rng, cfg.samples_min, cfg.samples_max);
    const std::size_t core_begin = f * stride;
    for (std::size_t s = 0; s < count; ++s) {
      std::vector<std::size_t> tokens;
      // Empty draws are resampled so family sizes stay exact.
      while (tokens.empty()) {
        for (std::size_t t = 0; t < cfg.core_tokens_per_family; ++t) {
          if (bernoulli(rng, cfg.core_inclusion_prob)) tokens.push_back(core_begin + t);
        }
        const std::size_t noise = uniform_between(rng, cfg.noise_min, cfg.noise_max);
        for (std::size_t t = 0; t < noise; ++t) tokens.push_back(uniform_below(rng, cfg.vocabulary_size));
      }
      shuffle(tokens, rng);

      Report report;
      report.id = "synth-f" + std::to_string(f) + "-" + std::to_string(s);
      report.family = "family" + std::to_string(f);
      for (auto t : tokens) report.events.push_back(token_name(t, cfg.vocabulary_size));
      reports.push_back(std::move(report));
    }
  }
  return ReportSet(std::move(reports), Provenance::synthetic);
}

SplitResult split(const ReportSet& set, std::uint64_t seed, bool stratified) {
  if (set.size() < 2) throw DataError("split needs at least 2 reports, got " + std::to_string(set.size()));
  Rng rng(seed);
  std::vector<std::size_t> to_t;
  std::vector<std::size_t> to_s;

  if (stratified && set.labeled()) {
    std::map<std::string, std::vector<std::size_t>> families;
    for (std::size_t i = 0; i < set.size(); ++i) families[*set[i].family].push_back(i);

    std::vector<std::size_t> odd_extras;
    for (auto& [name, members] : families) {
      shuffle(members, rng);
      const std::size_t half = members.size() / 2;
      to_t.insert(to_t.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(half));
      to_s.insert(to_s.end(), members.begin() + static_cast<std::ptrdiff_t>(half),
                  members.begin() + static_cast<std::ptrdiff_t>(2 * half));
      if (members.size() % 2 == 1) odd_extras.push_back(members.back());
    }
    // Alternate the leftovers of odd-sized families so totals stay balanced.
    shuffle(odd_extras, rng);
    for (std::size_t i = 0; i < odd_extras.size(); ++i) (i % 2 == 0 ? to_t : to_s).push_back(odd_extras[i]);
  } else {
    std::vector<std::size_t> order(set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order, rng);
    const std::size_t t_size = (set.size() + 1) / 2;
    to_t.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(t_size));
    to_s.assign(order.begin() + static_cast<std::ptrdiff_t>(t_size), order.end());
  }

  auto collect = [&](std::vector<std::size_t>& indices) {
    std::sort(indices.begin(), indices.end());
    std::vector<Report> part;
    part.reserve(indices.size());
    for (auto i : indices) part.push_back(set[i]);
    return ReportSet(std::move(part), set.provenance());
  };
  return {collect(to_t), collect(to_s)};
}

}  // namespace malpoison
