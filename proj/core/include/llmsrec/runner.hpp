#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "llmsrec/corpus.hpp"
#include "llmsrec/demo.hpp"
#include "llmsrec/embedding.hpp"
#include "llmsrec/eval.hpp"
#include "llmsrec/llm.hpp"
#include "llmsrec/prompts.hpp"
#include "llmsrec/retrieval.hpp"

namespace llmsrec::runner {

using nlohmann::json;

enum class Method { kZeroShot, kOneShotFixed, kOneShotNearest, kOneShotHis, kSyn };

Method parse_method(const std::string& name);
std::string method_name(Method method);

struct BackendConfig {
  /// "mock" or "openai".
  std::string kind = "mock";
  llm::MockConfig mock;
  llm::ChatEndpointConfig chat;
  llm::CompletionParams params;
  std::optional<std::filesystem::path> response_cache;
  bool cache_bypass = false;
  std::size_t max_in_flight = 4;
};

struct EmbeddingConfig {
  /// "hash" (offline) or "openai".
  std::string kind = "hash";
  std::size_t dim = 64;
  retrieval::HttpEmbeddingConfig http;
  std::optional<std::filesystem::path> cache_path;
};

struct ExperimentConfig {
  std::string dataset_name = "dataset";
  corpus::DatasetSource dataset;
  int min_count = 5;
  std::size_t n_eval_users = 200;
  Method method = Method::kSyn;
  prompts::InstructionVariant variant = prompts::InstructionVariant::kA;
  demo::TaskTemplate task = demo::TaskTemplate::kRankedItems;
  bool demo_with_candidates = false;
  std::size_t k_members = 3;
  std::size_t max_h = 50;
  int m = 20;
  std::size_t n_aggregated_demos = 1;
  std::size_t repeats = 9;
  retrieval::SimilarityKind selection = retrieval::SimilarityKind::kEmbedding;
  demo::HistoryOrder history_order = demo::HistoryOrder::kChronological;
  eval::ScoringOptions scoring;
  std::uint64_t seed = 2024;
  std::optional<std::filesystem::path> candidates_file;
  std::optional<std::filesystem::path> templates_dir;
  BackendConfig backend;
  EmbeddingConfig embedding;

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

json to_json(const ExperimentConfig& config);
/// Missing fields keep their defaults.
ExperimentConfig config_from_json(const json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Hash over every setting that can change prompts or scores.
std::string config_hash(const ExperimentConfig& config);

/// Seed for one stream, keyed by the master seed plus identifiers; order of
/// execution never enters the derivation.
std::uint64_t stream_seed(const ExperimentConfig& config, std::string_view purpose,
                          std::string_view instance = {}, std::uint64_t repeat = 0);

struct PreparedData {
  corpus::InteractionLog log;
  corpus::Split split;
  std::vector<corpus::EvalInstance> instances;
};

PreparedData prepare_data(const ExperimentConfig& config);
/// Same as above for an already-loaded (unfiltered) log.
PreparedData prepare_data(const ExperimentConfig& config, corpus::InteractionLog log);

/// `{"user_id": ..., "candidates": [...]}` per line.
std::map<corpus::UserId, std::vector<corpus::ItemId>> load_candidate_file(
    const std::filesystem::path& path);

struct RunRecord {
  std::string config_hash;
  std::string dataset;
  std::string method;
  std::size_t k = 0;
  corpus::UserId instance;
  std::size_t instance_index = 0;
  std::size_t repeat = 0;
  /// "ok", "unparseable" or "failed".
  std::string status;
  std::string error;
  prompts::PromptBundle prompt;
  llm::CompletionRecord completion;
  corpus::ItemId truth;
  std::vector<corpus::ItemId> candidates;
  std::vector<std::string> candidate_titles;
  std::optional<eval::ParsedRanking> parsed;
  eval::MetricSet metrics;
};

json to_json(const RunRecord& record);
/// Enough of a record to rescore or replay it.
RunRecord record_from_json(const json& j);

struct ExperimentSummary {
  std::string config_hash;
  std::string dataset;
  std::string method;
  std::size_t k = 0;
  std::size_t n_instances = 0;
  std::size_t repeats = 0;
  std::size_t failures = 0;
  std::size_t unparseable = 0;
  eval::RunSummary metrics;
  std::vector<eval::MetricSet> per_repeat;
};

json to_json(const ExperimentSummary& summary);

struct ExperimentResult {
  ExperimentSummary summary;
  std::vector<RunRecord> records;
};

/// Embedding provider and cache built from a config.
struct Services {
  std::unique_ptr<retrieval::EmbeddingProvider> provider;
  std::unique_ptr<retrieval::EmbeddingCache> cache;
};

Services make_services(const ExperimentConfig& config);
std::unique_ptr<llm::Backend> make_backend(const BackendConfig& config);

ExperimentResult run_experiment(const ExperimentConfig& config, const PreparedData& data,
                                llm::Backend& backend, Services& services);

/// Builds the demonstrations the configured method uses for one instance and
/// repeat.
std::vector<prompts::AnyDemonstration> build_demonstrations(
    const ExperimentConfig& config, const PreparedData& data, const corpus::EvalInstance& test,
    std::size_t repeat, retrieval::Retriever* retriever);

struct GridEntry {
  std::size_t k = 0;
  ExperimentSummary summary;
  bool best = false;
};

/// One experiment per k; the best k by mean NDCG@10 (smaller k on ties) is
/// flagged.
std::vector<GridEntry> grid_search_k(const ExperimentConfig& config, std::span<const std::size_t> ks,
                                     const PreparedData& data, llm::Backend& backend,
                                     Services& services);

void write_records(const std::filesystem::path& path, std::span<const RunRecord> records);
void write_summary(const std::filesystem::path& path, const ExperimentSummary& summary,
                   const ExperimentConfig& config);
/// Writes records.jsonl, summary.json and table.csv under `dir`.
void write_outputs(const std::filesystem::path& dir, const ExperimentResult& result,
                   const ExperimentConfig& config);

struct ReportRow {
  std::string dataset;
  std::string method;
  std::string config_hash;
  std::size_t k = 0;
  std::size_t records = 0;
  std::size_t failures = 0;
  eval::RunSummary metrics;
};

struct Report {
  std::vector<ReportRow> rows;
  std::size_t skipped_lines = 0;
};

/// Groups records by (dataset, method, config) and averages per repeat.
/// With `rescore`, stored responses are parsed again against the stored
/// candidates instead of trusting stored metrics.
Report report(const std::filesystem::path& records_path, bool rescore = false,
              const eval::ScoringOptions& scoring = {});
std::string format_table(const Report& report);
std::string format_csv(const Report& report);

/// Stored completions keyed by prompt hash.
llm::ReplayBackend replay_backend_from_records(const std::filesystem::path& records_path);

}  // namespace llmsrec::runner
