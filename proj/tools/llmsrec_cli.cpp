// llmsrec: dataset preparation, experiment runs and reporting.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "llmsrec/corpus.hpp"
#include "llmsrec/retrieval.hpp"
#include "llmsrec/runner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace llmsrec;

namespace {

enum class Kind { kString, kInt, kUint, kDouble, kBool, kPath };

struct Override {
  const char* flag;
  const char* pointer;
  Kind kind;
  const char* help;
};

// Every config field has a flag; values land in the config JSON before it is
// parsed, so flags and file share one code path.
const std::vector<Override> kOverrides = {
    {"--dataset-name", "/dataset/name", Kind::kString, "label used in records and tables"},
    {"--format", "/dataset/format", Kind::kString, "movielens-1m | generic-tsv"},
    {"--interactions", "/dataset/interactions", Kind::kString, "interactions file"},
    {"--items", "/dataset/items", Kind::kString, "items file"},
    {"--min-count", "/dataset/min_count", Kind::kInt, "k-core threshold"},
    {"--n-users", "/n_eval_users", Kind::kUint, "evaluation users (0 = all)"},
    {"--method", "/method", Kind::kString,
     "zero-shot | one-shot-fixed | one-shot-nearest | one-shot-his | syn"},
    {"--variant", "/variant", Kind::kString, "instruction variant A-D"},
    {"--task", "/task", Kind::kString, "demonstration task T1 | T2 | T3"},
    {"--demo-with-candidates", "/demo_with_candidates", Kind::kBool, "T1/T2 demos show candidates"},
    {"--k", "/k", Kind::kUint, "members per aggregated demonstration"},
    {"--max-h", "/max_h", Kind::kUint, "history length cap"},
    {"--m", "/m", Kind::kInt, "candidates per list"},
    {"--n-demos", "/n_demos", Kind::kUint, "aggregated demonstrations per prompt"},
    {"--repeats", "/repeats", Kind::kUint, "repeats per instance"},
    {"--selection", "/selection", Kind::kString, "random | overlap | embedding"},
    {"--history-order", "/history_order", Kind::kString, "chronological | insertion"},
    {"--rank-basis", "/scoring/rank_basis", Kind::kString, "emitted-line | candidate-only"},
    {"--cir-denominator", "/scoring/cir_denominator", Kind::kString,
     "emitted-lines | candidate-count"},
    {"--seed", "/seed", Kind::kUint, "master seed"},
    {"--candidates-file", "/candidates_file", Kind::kPath, "JSONL of precomputed candidate sets"},
    {"--templates-dir", "/templates_dir", Kind::kPath, "prompt template overrides"},
    {"--backend", "/backend/kind", Kind::kString, "mock | openai"},
    {"--model", "/backend/model", Kind::kString, "chat model id"},
    {"--temperature", "/backend/temperature", Kind::kDouble, "sampling temperature"},
    {"--max-tokens", "/backend/max_tokens", Kind::kInt, "completion token limit"},
    {"--timeout-ms", "/backend/timeout_ms", Kind::kInt, "request timeout"},
    {"--base-url", "/backend/base_url", Kind::kString, "chat endpoint base URL"},
    {"--api-key-env", "/backend/api_key_env", Kind::kString, "env var holding the chat API key"},
    {"--max-attempts", "/backend/retry/max_attempts", Kind::kInt, "attempts per request"},
    {"--response-cache", "/backend/response_cache", Kind::kPath, "completion cache JSONL"},
    {"--cache-bypass", "/backend/cache_bypass", Kind::kBool, "ignore cached completions"},
    {"--max-in-flight", "/backend/max_in_flight", Kind::kUint, "concurrent requests"},
    {"--mock-policy", "/backend/mock/policy", Kind::kString,
     "truth-first | presented-order | oracle"},
    {"--mock-seed", "/backend/mock/seed", Kind::kUint, "mock tie-break seed"},
    {"--mock-hallucinations", "/backend/mock/hallucinations", Kind::kInt, "injected non-candidates"},
    {"--mock-duplicates", "/backend/mock/duplicates", Kind::kInt, "injected repeats"},
    {"--embedding", "/embedding/kind", Kind::kString, "hash | openai"},
    {"--embedding-dim", "/embedding/dim", Kind::kUint, "hash embedding dimension"},
    {"--embedding-model", "/embedding/model", Kind::kString, "embedding model id"},
    {"--embedding-base-url", "/embedding/base_url", Kind::kString, "embedding endpoint base URL"},
    {"--embedding-api-key-env", "/embedding/api_key_env", Kind::kString,
     "env var holding the embedding API key"},
    {"--embedding-cache", "/embedding/cache", Kind::kPath, "embedding cache JSONL"},
};

struct ConfigOptions {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::string cutoffs;
};

void add_config_options(CLI::App* app, ConfigOptions& opts) {
  app->add_option("-c,--config", opts.config_file, "JSON experiment config")
      ->check(CLI::ExistingFile);
  for (const auto& o : kOverrides) {
    app->add_option_function<std::string>(
        o.flag, [&opts, &o](const std::string& v) { opts.values[o.flag] = v; }, o.help);
  }
  app->add_option("--cutoffs", opts.cutoffs, "NDCG cutoffs, comma separated");
}

json convert(const Override& o, const std::string& v) {
  switch (o.kind) {
    case Kind::kString: return v;
    case Kind::kPath: return v.empty() ? json(nullptr) : json(v);
    case Kind::kInt: return std::stoll(v);
    case Kind::kUint: return static_cast<std::uint64_t>(std::stoull(v));
    case Kind::kDouble: return std::stod(v);
    case Kind::kBool:
      if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
      if (v == "false" || v == "0" || v == "no" || v == "off") return false;
      throw std::invalid_argument(std::string(o.flag) + " expects true or false");
  }
  return nullptr;
}

runner::ExperimentConfig resolve_config(const ConfigOptions& opts) {
  runner::ExperimentConfig base;
  if (!opts.config_file.empty()) base = runner::load_config(opts.config_file);
  json j = runner::to_json(base);
  for (const auto& o : kOverrides) {
    auto it = opts.values.find(o.flag);
    if (it == opts.values.end()) continue;
    try {
      j[json::json_pointer(o.pointer)] = convert(o, it->second);
    } catch (const std::logic_error& e) {
      throw std::invalid_argument(std::string(o.flag) + ": " + e.what());
    }
  }
  if (!opts.cutoffs.empty()) {
    std::vector<int> cutoffs;
    std::stringstream ss(opts.cutoffs);
    for (std::string part; std::getline(ss, part, ',');) cutoffs.push_back(std::stoi(part));
    j["scoring"]["cutoffs"] = cutoffs;
  }
  auto config = runner::config_from_json(j);
  config.validate();
  return config;
}

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) out.push_back(std::stoull(part));
  return out;
}

json stats_json(const corpus::DatasetStats& s) {
  return json{{"users", s.n_users},
              {"items", s.n_items},
              {"interactions", s.n_interactions},
              {"avg_items_per_user", s.avg_items_per_user},
              {"avg_users_per_item", s.avg_users_per_item}};
}

struct DatasetOptions {
  std::string format = "movielens-1m";
  std::string interactions;
  std::string items;
  int min_count = 5;
  bool keep_raw_titles = false;
};

void add_dataset_options(CLI::App* app, DatasetOptions& d) {
  app->add_option("--format", d.format, "movielens-1m | generic-tsv")->capture_default_str();
  app->add_option("--interactions", d.interactions, "interactions file (ratings.dat or TSV)")
      ->required()
      ->check(CLI::ExistingFile);
  app->add_option("--items", d.items, "items file (movies.dat or TSV)")
      ->required()
      ->check(CLI::ExistingFile);
  app->add_option("--min-count", d.min_count, "k-core threshold")->capture_default_str();
  app->add_flag("--keep-raw-titles", d.keep_raw_titles, "keep MovieLens titles as published");
}

corpus::InteractionLog load(const DatasetOptions& d) {
  corpus::DatasetSource source;
  source.format = corpus::parse_format(d.format);
  source.interactions = d.interactions;
  source.items = d.items;
  source.clean_titles = !d.keep_raw_titles;
  return corpus::load_interactions(source);
}

int cmd_stats(const DatasetOptions& d) {
  const auto start = std::chrono::steady_clock::now();
  auto raw = load(d);
  auto filtered = corpus::filter_log(raw, d.min_count);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json out{{"raw_records", raw.raw_count},
           {"raw", stats_json(corpus::dataset_stats(raw))},
           {"filtered", stats_json(corpus::dataset_stats(filtered))},
           {"min_count", d.min_count},
           {"seconds", seconds}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_ingest(const DatasetOptions& d, const fs::path& out_dir) {
  auto filtered = corpus::filter_log(load(d), d.min_count);
  auto split = corpus::leave_one_out_split(filtered);
  fs::create_directories(out_dir);
  {
    std::ofstream items(out_dir / "items.tsv", std::ios::binary);
    for (const auto& item : filtered.catalog.items()) items << item.id << '\t' << item.title << '\n';
  }
  {
    std::ofstream inter(out_dir / "interactions.tsv", std::ios::binary);
    for (const auto& [user, events] : filtered.users) {
      for (const auto& e : events) inter << user << '\t' << e.item << '\t' << e.timestamp << '\n';
    }
  }
  json info{{"stats", stats_json(corpus::dataset_stats(filtered))},
            {"test_users", split.test.size()},
            {"train_pool", split.train_pool.size()},
            {"skipped_users", split.skipped},
            {"min_count", d.min_count}};
  std::ofstream(out_dir / "dataset.json") << info.dump(2) << '\n';
  std::cout << "wrote " << (out_dir / "items.tsv").string() << " and "
            << (out_dir / "interactions.tsv").string() << " (format generic-tsv)\n"
            << info.dump(2) << '\n';
  return 0;
}

int cmd_embed_cache(const runner::ExperimentConfig& config) {
  if (!config.embedding.cache_path) {
    throw std::invalid_argument("embed-cache needs --embedding-cache");
  }
  auto data = runner::prepare_data(config);
  auto services = runner::make_services(config);
  std::vector<std::string> texts;
  for (const auto& entry : data.split.train_pool) {
    texts.push_back(retrieval::sequence_text(entry.history, data.log.catalog, config.max_h));
  }
  for (const auto& inst : data.instances) {
    texts.push_back(retrieval::sequence_text(inst.history, data.log.catalog, config.max_h));
  }
  const std::size_t before = services.cache->size();
  retrieval::embed_all(texts, *services.provider, *services.cache, 64,
                       config.backend.max_in_flight);
  std::cout << "embedded " << texts.size() << " histories; cache " << before << " -> "
            << services.cache->size() << " entries (" << services.provider->calls()
            << " provider calls)\n";
  return 0;
}

void print_summary(const runner::ExperimentSummary& s) {
  runner::Report rep;
  runner::ReportRow row;
  row.dataset = s.dataset;
  row.method = s.method;
  row.config_hash = s.config_hash;
  row.k = s.k;
  row.records = s.n_instances * s.repeats;
  row.failures = s.failures;
  row.metrics = s.metrics;
  rep.rows.push_back(row);
  std::cout << runner::format_table(rep);
  if (s.unparseable) std::cout << s.unparseable << " unparseable responses scored as misses\n";
}

int cmd_run(const runner::ExperimentConfig& config, const fs::path& out_dir) {
  auto data = runner::prepare_data(config);
  auto services = runner::make_services(config);
  auto backend = runner::make_backend(config.backend);
  auto result = runner::run_experiment(config, data, *backend, services);
  runner::write_outputs(out_dir, result, config);
  print_summary(result.summary);
  std::cout << "outputs in " << out_dir.string() << '\n';
  return result.summary.failures == result.records.size() && !result.records.empty() ? 1 : 0;
}

int cmd_grid(const runner::ExperimentConfig& config, const std::string& ks,
             const fs::path& out_dir) {
  auto data = runner::prepare_data(config);
  auto services = runner::make_services(config);
  auto backend = runner::make_backend(config.backend);
  const auto k_values = parse_list(ks);
  auto entries = runner::grid_search_k(config, k_values, data, *backend, services);

  runner::Report rep;
  json out = json::array();
  for (const auto& e : entries) {
    runner::ReportRow row;
    row.dataset = e.summary.dataset;
    row.method = e.summary.method + (e.best ? " *" : "");
    row.config_hash = e.summary.config_hash;
    row.k = e.k;
    row.records = e.summary.n_instances * e.summary.repeats;
    row.failures = e.summary.failures;
    row.metrics = e.summary.metrics;
    rep.rows.push_back(row);
    out.push_back({{"k", e.k}, {"best", e.best}, {"summary", runner::to_json(e.summary)}});
  }
  fs::create_directories(out_dir);
  std::ofstream(out_dir / "grid.json") << out.dump(2) << '\n';
  std::ofstream(out_dir / "table.csv") << runner::format_csv(rep);
  std::cout << runner::format_table(rep) << "* best k by mean NDCG@10\n";
  return 0;
}

int cmd_report(const fs::path& records, bool rescore, const std::string& csv_path) {
  auto rep = runner::report(records, rescore);
  std::cout << runner::format_table(rep);
  if (rep.skipped_lines) std::cerr << rep.skipped_lines << " record lines skipped\n";
  if (!csv_path.empty()) std::ofstream(csv_path) << runner::format_csv(rep);
  return 0;
}

int cmd_replay(const fs::path& run_dir, const fs::path& out_dir, const ConfigOptions& overrides) {
  std::ifstream in(run_dir / "summary.json");
  if (!in) throw std::runtime_error("no summary.json in " + run_dir.string());
  const json original = json::parse(in);
  auto config = runner::config_from_json(original.at("config"));
  if (!overrides.values.empty()) {
    // Dataset paths may have moved since the run; the rest must match.
    json j = runner::to_json(config);
    for (const auto& o : kOverrides) {
      auto it = overrides.values.find(o.flag);
      if (it != overrides.values.end()) j[json::json_pointer(o.pointer)] = convert(o, it->second);
    }
    config = runner::config_from_json(j);
  }
  auto data = runner::prepare_data(config);
  auto services = runner::make_services(config);
  auto backend = runner::replay_backend_from_records(run_dir / "records.jsonl");
  auto result = runner::run_experiment(config, data, backend, services);
  runner::write_outputs(out_dir, result, config);
  print_summary(result.summary);

  json replayed = runner::to_json(result.summary);
  json expected = original;
  expected.erase("config");
  if (replayed == expected) {
    std::cout << "replay matches the stored summary\n";
    return 0;
  }
  std::cout << "replay differs from the stored summary\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LLM in-context sequential recommendation experiments"};
  app.require_subcommand(1);

  DatasetOptions stats_opts;
  auto* stats = app.add_subcommand("stats", "Dataset statistics before and after filtering");
  add_dataset_options(stats, stats_opts);

  DatasetOptions ingest_opts;
  std::string ingest_out;
  auto* ingest = app.add_subcommand("ingest", "Filter a dataset and write it as generic TSV");
  add_dataset_options(ingest, ingest_opts);
  ingest->add_option("-o,--out", ingest_out, "output directory")->required();

  ConfigOptions embed_opts;
  auto* embed = app.add_subcommand("embed-cache", "Precompute history embeddings");
  add_config_options(embed, embed_opts);

  ConfigOptions run_opts;
  std::string run_out = "runs/latest";
  auto* run = app.add_subcommand("run", "Run one experiment");
  add_config_options(run, run_opts);
  run->add_option("-o,--out", run_out, "output directory")->capture_default_str();

  ConfigOptions grid_opts;
  std::string grid_out = "runs/grid";
  std::string grid_ks = "1,2,3,4,5,6,7,8,9,10";
  auto* grid = app.add_subcommand("grid-k", "Sweep the number of aggregated members");
  add_config_options(grid, grid_opts);
  grid->add_option("--ks", grid_ks, "comma-separated k values")->capture_default_str();
  grid->add_option("-o,--out", grid_out, "output directory")->capture_default_str();

  std::string report_records;
  std::string report_csv;
  bool rescore = false;
  auto* rep = app.add_subcommand("report", "Tabulate one or more runs from records.jsonl");
  rep->add_option("records", report_records, "records.jsonl")->required()->check(CLI::ExistingFile);
  rep->add_option("--csv", report_csv, "also write a CSV table");
  rep->add_flag("--rescore", rescore, "parse stored responses again instead of stored metrics");

  std::string replay_dir;
  std::string replay_out = "runs/replay";
  ConfigOptions replay_opts;
  auto* replay = app.add_subcommand("replay", "Rerun an experiment from stored completions");
  replay->add_option("run_dir", replay_dir, "directory of a previous run")
      ->required()
      ->check(CLI::ExistingDirectory);
  replay->add_option("-o,--out", replay_out, "output directory")->capture_default_str();
  replay->add_option_function<std::string>(
      "--interactions", [&](const std::string& v) { replay_opts.values["--interactions"] = v; },
      "interactions file, if moved");
  replay->add_option_function<std::string>(
      "--items", [&](const std::string& v) { replay_opts.values["--items"] = v; },
      "items file, if moved");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*stats) return cmd_stats(stats_opts);
    if (*ingest) return cmd_ingest(ingest_opts, ingest_out);
    if (*embed) return cmd_embed_cache(resolve_config(embed_opts));
    if (*run) return cmd_run(resolve_config(run_opts), run_out);
    if (*grid) return cmd_grid(resolve_config(grid_opts), grid_ks, grid_out);
    if (*rep) return cmd_report(report_records, rescore, report_csv);
    if (*replay) return cmd_replay(replay_dir, replay_out, replay_opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
