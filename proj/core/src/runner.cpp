#include "llmsrec/runner.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "llmsrec/hashing.hpp"
#include "llmsrec/rng.hpp"

namespace llmsrec::runner {

namespace fs = std::filesystem;

Method parse_method(const std::string& name) {
  if (name == "zero-shot") return Method::kZeroShot;
  if (name == "one-shot-fixed") return Method::kOneShotFixed;
  if (name == "one-shot-nearest") return Method::kOneShotNearest;
  if (name == "one-shot-his") return Method::kOneShotHis;
  if (name == "syn") return Method::kSyn;
  throw std::invalid_argument("unknown method: " + name);
}

std::string method_name(Method method) {
  switch (method) {
    case Method::kZeroShot: return "zero-shot";
    case Method::kOneShotFixed: return "one-shot-fixed";
    case Method::kOneShotNearest: return "one-shot-nearest";
    case Method::kOneShotHis: return "one-shot-his";
    case Method::kSyn: return "syn";
  }
  return "?";
}

namespace {

std::string history_order_name(demo::HistoryOrder order) {
  return order == demo::HistoryOrder::kChronological ? "chronological" : "insertion";
}

demo::HistoryOrder parse_history_order(const std::string& name) {
  if (name == "chronological") return demo::HistoryOrder::kChronological;
  if (name == "insertion") return demo::HistoryOrder::kInsertion;
  throw std::invalid_argument("unknown history order: " + name);
}

std::string rank_basis_name(eval::RankBasis basis) {
  return basis == eval::RankBasis::kEmittedLine ? "emitted-line" : "candidate-only";
}

eval::RankBasis parse_rank_basis(const std::string& name) {
  if (name == "emitted-line") return eval::RankBasis::kEmittedLine;
  if (name == "candidate-only") return eval::RankBasis::kCandidateOnly;
  throw std::invalid_argument("unknown rank basis: " + name);
}

std::string cir_denominator_name(eval::CirDenominator d) {
  return d == eval::CirDenominator::kEmittedLines ? "emitted-lines" : "candidate-count";
}

eval::CirDenominator parse_cir_denominator(const std::string& name) {
  if (name == "emitted-lines") return eval::CirDenominator::kEmittedLines;
  if (name == "candidate-count") return eval::CirDenominator::kCandidateCount;
  throw std::invalid_argument("unknown CIR denominator: " + name);
}

json optional_path(const std::optional<fs::path>& p) {
  return p ? json(p->string()) : json(nullptr);
}

std::optional<fs::path> read_optional_path(const json& j, const char* key,
                                           std::optional<fs::path> fallback) {
  if (!j.contains(key)) return fallback;
  if (j.at(key).is_null()) return std::nullopt;
  return fs::path(j.at(key).get<std::string>());
}

prompts::TemplateRegistry registry_for(const ExperimentConfig& config) {
  return config.templates_dir ? prompts::TemplateRegistry::load(*config.templates_dir)
                              : prompts::TemplateRegistry::builtin();
}

bool needs_retriever(Method method) {
  return method == Method::kOneShotNearest || method == Method::kSyn;
}

}  // namespace

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
  if (min_count < 1) fail("min_count must be >= 1");
  if (m < 2) fail("m must be >= 2");
  if (repeats < 1) fail("repeats must be >= 1");
  if (k_members < 1) fail("k must be >= 1");
  if (max_h < 1) fail("max_h must be >= 1");
  if (n_aggregated_demos < 1 || n_aggregated_demos > 4) fail("n_demos must be in 1..4");
  if (static_cast<std::size_t>(m) < k_members) fail("k must not exceed m");
  if (backend.kind != "mock" && backend.kind != "openai") fail("backend must be mock or openai");
  if (backend.max_in_flight < 1) fail("max_in_flight must be >= 1");
  if (embedding.kind != "hash" && embedding.kind != "openai") {
    fail("embedding must be hash or openai");
  }
  if (scoring.cutoffs.empty()) fail("at least one NDCG cutoff is required");
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["dataset"] = {{"name", c.dataset_name},
                  {"format", corpus::format_name(c.dataset.format)},
                  {"interactions", c.dataset.interactions.string()},
                  {"items", c.dataset.items.string()},
                  {"clean_titles", c.dataset.clean_titles},
                  {"min_count", c.min_count}};
  j["n_eval_users"] = c.n_eval_users;
  j["method"] = method_name(c.method);
  j["variant"] = prompts::variant_name(c.variant);
  j["task"] = demo::task_name(c.task);
  j["demo_with_candidates"] = c.demo_with_candidates;
  j["k"] = c.k_members;
  j["max_h"] = c.max_h;
  j["m"] = c.m;
  j["n_demos"] = c.n_aggregated_demos;
  j["repeats"] = c.repeats;
  j["selection"] = retrieval::similarity_name(c.selection);
  j["history_order"] = history_order_name(c.history_order);
  j["scoring"] = {{"cutoffs", c.scoring.cutoffs},
                  {"rank_basis", rank_basis_name(c.scoring.rank_basis)},
                  {"cir_denominator", cir_denominator_name(c.scoring.cir_denominator)}};
  j["seed"] = c.seed;
  j["candidates_file"] = optional_path(c.candidates_file);
  j["templates_dir"] = optional_path(c.templates_dir);

  const auto& b = c.backend;
  j["backend"] = {
      {"kind", b.kind},
      {"model", b.params.model_id},
      {"temperature", b.params.temperature},
      {"max_tokens", b.params.max_output_tokens},
      {"timeout_ms", b.params.timeout.count()},
      {"base_url", b.chat.base_url},
      {"api_key_env", b.chat.api_key_env},
      {"retry",
       {{"max_attempts", b.chat.retry.max_attempts},
        {"initial_backoff_ms", b.chat.retry.initial_backoff.count()},
        {"multiplier", b.chat.retry.multiplier}}},
      {"response_cache", optional_path(b.response_cache)},
      {"cache_bypass", b.cache_bypass},
      {"max_in_flight", b.max_in_flight},
      {"mock",
       {{"policy", llm::mock_policy_name(b.mock.policy)},
        {"seed", b.mock.seed},
        {"hallucinations", b.mock.hallucinations},
        {"duplicates", b.mock.duplicates},
        {"inject_after", b.mock.inject_after ? json(*b.mock.inject_after) : json(nullptr)}}}};

  const auto& e = c.embedding;
  j["embedding"] = {{"kind", e.kind},
                    {"dim", e.dim},
                    {"base_url", e.http.base_url},
                    {"model", e.http.model},
                    {"api_key_env", e.http.api_key_env},
                    {"cache", optional_path(e.cache_path)}};
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    c.dataset_name = d.value("name", c.dataset_name);
    if (d.contains("format")) c.dataset.format = corpus::parse_format(d.at("format"));
    c.dataset.interactions = d.value("interactions", c.dataset.interactions.string());
    c.dataset.items = d.value("items", c.dataset.items.string());
    c.dataset.clean_titles = d.value("clean_titles", c.dataset.clean_titles);
    c.min_count = d.value("min_count", c.min_count);
  }
  c.n_eval_users = j.value("n_eval_users", c.n_eval_users);
  if (j.contains("method")) c.method = parse_method(j.at("method"));
  if (j.contains("variant")) c.variant = prompts::parse_variant(j.at("variant"));
  if (j.contains("task")) c.task = demo::parse_task(j.at("task"));
  c.demo_with_candidates = j.value("demo_with_candidates", c.demo_with_candidates);
  c.k_members = j.value("k", c.k_members);
  c.max_h = j.value("max_h", c.max_h);
  c.m = j.value("m", c.m);
  c.n_aggregated_demos = j.value("n_demos", c.n_aggregated_demos);
  c.repeats = j.value("repeats", c.repeats);
  if (j.contains("selection")) c.selection = retrieval::parse_similarity(j.at("selection"));
  if (j.contains("history_order")) c.history_order = parse_history_order(j.at("history_order"));
  if (j.contains("scoring")) {
    const json& s = j.at("scoring");
    c.scoring.cutoffs = s.value("cutoffs", c.scoring.cutoffs);
    if (s.contains("rank_basis")) c.scoring.rank_basis = parse_rank_basis(s.at("rank_basis"));
    if (s.contains("cir_denominator")) {
      c.scoring.cir_denominator = parse_cir_denominator(s.at("cir_denominator"));
    }
  }
  c.seed = j.value("seed", c.seed);
  c.candidates_file = read_optional_path(j, "candidates_file", c.candidates_file);
  c.templates_dir = read_optional_path(j, "templates_dir", c.templates_dir);

  if (j.contains("backend")) {
    const json& b = j.at("backend");
    auto& out = c.backend;
    out.kind = b.value("kind", out.kind);
    out.params.model_id = b.value("model", out.params.model_id);
    out.params.temperature = b.value("temperature", out.params.temperature);
    out.params.max_output_tokens = b.value("max_tokens", out.params.max_output_tokens);
    out.params.timeout =
        std::chrono::milliseconds(b.value("timeout_ms", out.params.timeout.count()));
    out.chat.base_url = b.value("base_url", out.chat.base_url);
    out.chat.api_key_env = b.value("api_key_env", out.chat.api_key_env);
    if (b.contains("retry")) {
      const json& r = b.at("retry");
      out.chat.retry.max_attempts = r.value("max_attempts", out.chat.retry.max_attempts);
      out.chat.retry.initial_backoff = std::chrono::milliseconds(
          r.value("initial_backoff_ms", out.chat.retry.initial_backoff.count()));
      out.chat.retry.multiplier = r.value("multiplier", out.chat.retry.multiplier);
    }
    out.response_cache = read_optional_path(b, "response_cache", out.response_cache);
    out.cache_bypass = b.value("cache_bypass", out.cache_bypass);
    out.max_in_flight = b.value("max_in_flight", out.max_in_flight);
    if (b.contains("mock")) {
      const json& mk = b.at("mock");
      if (mk.contains("policy")) out.mock.policy = llm::parse_mock_policy(mk.at("policy"));
      out.mock.seed = mk.value("seed", out.mock.seed);
      out.mock.hallucinations = mk.value("hallucinations", out.mock.hallucinations);
      out.mock.duplicates = mk.value("duplicates", out.mock.duplicates);
      if (mk.contains("inject_after") && !mk.at("inject_after").is_null()) {
        out.mock.inject_after = mk.at("inject_after").get<std::size_t>();
      }
    }
  }
  if (j.contains("embedding")) {
    const json& e = j.at("embedding");
    auto& out = c.embedding;
    out.kind = e.value("kind", out.kind);
    out.dim = e.value("dim", out.dim);
    out.http.base_url = e.value("base_url", out.http.base_url);
    out.http.model = e.value("model", out.http.model);
    out.http.api_key_env = e.value("api_key_env", out.http.api_key_env);
    out.cache_path = read_optional_path(e, "cache", out.cache_path);
  }
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("invalid config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& config) {
  json j = to_json(config);
  // Locations and transport settings do not change what gets scored.
  j["dataset"].erase("interactions");
  j["dataset"].erase("items");
  j.erase("templates_dir");
  for (const char* key : {"response_cache", "cache_bypass", "max_in_flight", "retry",
                          "timeout_ms", "api_key_env"}) {
    j["backend"].erase(key);
  }
  j["embedding"].erase("cache");
  j["embedding"].erase("api_key_env");
  j["templates"] = registry_for(config).entries();
  return sha256_hex(j.dump()).substr(0, 16);
}

std::uint64_t stream_seed(const ExperimentConfig& config, std::string_view purpose,
                          std::string_view instance, std::uint64_t repeat) {
  return derive_seed(config.seed, purpose, instance, repeat);
}

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

std::map<corpus::UserId, std::vector<corpus::ItemId>> load_candidate_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw corpus::CorpusError("cannot open candidates file: " + path.string());
  std::map<corpus::UserId, std::vector<corpus::ItemId>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      const json& uid = j.at("user_id");
      std::string user = uid.is_string() ? uid.get<std::string>() : uid.dump();
      std::vector<corpus::ItemId> items;
      for (const json& v : j.at("candidates")) {
        items.push_back(v.is_string() ? v.get<std::string>() : v.dump());
      }
      out[user] = std::move(items);
    } catch (const json::exception& e) {
      throw corpus::CorpusError("malformed candidates file " + path.string() + " line " +
                                std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

PreparedData prepare_data(const ExperimentConfig& config) {
  return prepare_data(config, corpus::load_interactions(config.dataset));
}

PreparedData prepare_data(const ExperimentConfig& config, corpus::InteractionLog log) {
  config.validate();
  PreparedData data;
  data.log = corpus::filter_log(log, config.min_count);
  data.split = corpus::leave_one_out_split(data.log);

  std::vector<corpus::UserExample> chosen;
  if (config.n_eval_users == 0) {
    chosen = data.split.test;
  } else {
    Rng rng(stream_seed(config, "eval-users"));
    chosen = corpus::sample_eval_users<corpus::UserExample>(data.split.test, config.n_eval_users,
                                                            rng);
  }

  std::map<corpus::UserId, std::vector<corpus::ItemId>> imported;
  if (config.candidates_file) imported = load_candidate_file(*config.candidates_file);

  data.instances.reserve(chosen.size());
  for (auto& example : chosen) {
    std::vector<corpus::ItemId> candidates;
    if (config.candidates_file) {
      auto it = imported.find(example.user);
      if (it == imported.end()) {
        throw corpus::CorpusError("no candidates for user " + example.user);
      }
      candidates = it->second;
    } else {
      std::unordered_set<corpus::ItemId> exclude(example.history.begin(), example.history.end());
      Rng rng(stream_seed(config, "candidates", example.user));
      candidates = corpus::build_candidate_set(example.truth, data.log.catalog, config.m, exclude,
                                               rng);
    }
    data.instances.push_back(corpus::make_eval_instance(std::move(example), std::move(candidates)));
  }
  return data;
}

// ---------------------------------------------------------------------------
// Demonstrations
// ---------------------------------------------------------------------------

namespace {

const corpus::UserExample* find_pool_entry(const PreparedData& data, const corpus::UserId& user) {
  for (const auto& entry : data.split.train_pool) {
    if (entry.user == user) return &entry;
  }
  return nullptr;
}

/// The one demonstration user shared by every test instance: train users
/// sorted by id, shuffled with a seed from the master seed, first taken.
/// A test user never sees itself; it gets the next user instead.
const corpus::UserExample& fixed_member(const ExperimentConfig& config, const PreparedData& data,
                                        const corpus::UserId& test_user) {
  const auto& pool = data.split.train_pool;
  if (pool.size() < 2) throw demo::DemoError("fixed demonstration needs two training users");
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return pool[a].user < pool[b].user; });
  Rng rng(stream_seed(config, "fixed-demo"));
  shuffle(order, rng);
  const auto& first = pool[order[0]];
  return first.user == test_user ? pool[order[1]] : first;
}

}  // namespace

std::vector<prompts::AnyDemonstration> build_demonstrations(const ExperimentConfig& config,
                                                            const PreparedData& data,
                                                            const corpus::EvalInstance& test,
                                                            std::size_t repeat,
                                                            retrieval::Retriever* retriever) {
  const auto& catalog = data.log.catalog;
  const auto& pool = data.split.train_pool;
  Rng rng(stream_seed(config, "demo", test.user, repeat));
  std::vector<prompts::AnyDemonstration> demos;

  auto standard = [&](const corpus::UserExample& member) {
    demos.emplace_back(demo::build_standard_demo(member, config.task, config.m, catalog, rng,
                                                 config.demo_with_candidates));
  };

  switch (config.method) {
    case Method::kZeroShot:
      break;
    case Method::kOneShotFixed:
      standard(fixed_member(config, data, test.user));
      break;
    case Method::kOneShotHis: {
      const auto* own = find_pool_entry(data, test.user);
      if (!own) throw demo::DemoError("no training entry for user " + test.user);
      standard(*own);
      break;
    }
    case Method::kOneShotNearest: {
      if (!retriever) throw std::invalid_argument("one-shot-nearest needs a retriever");
      auto ranked = retriever->select(test.user, test.history, pool, 1);
      standard(*find_pool_entry(data, ranked.front().user));
      break;
    }
    case Method::kSyn: {
      if (!retriever) throw std::invalid_argument("syn needs a retriever");
      const std::size_t k = config.k_members;
      auto ranked = retriever->select(test.user, test.history, pool, k * config.n_aggregated_demos);
      for (std::size_t g = 0; g < config.n_aggregated_demos; ++g) {
        retrieval::RankedDemonstrations group(ranked.begin() + static_cast<std::ptrdiff_t>(g * k),
                                              ranked.begin() + static_cast<std::ptrdiff_t>((g + 1) * k));
        std::vector<corpus::UserExample> members;
        for (const auto& scored : group) members.push_back(*find_pool_entry(data, scored.user));
        demos.emplace_back(demo::aggregate_members(members, std::move(group), config.max_h,
                                                   config.m, catalog, rng, config.history_order));
      }
      break;
    }
  }
  return demos;
}

// ---------------------------------------------------------------------------
// Backends and services
// ---------------------------------------------------------------------------

namespace {

class OwningCachingBackend final : public llm::Backend {
 public:
  OwningCachingBackend(std::unique_ptr<llm::Backend> inner, fs::path path, bool bypass)
      : inner_(std::move(inner)), cache_(*inner_, std::move(path), bypass) {}
  std::string id() const override { return cache_.id(); }
  llm::BackendReply generate(const prompts::PromptBundle& bundle,
                             const llm::CompletionParams& params) override {
    return cache_.generate(bundle, params);
  }

 private:
  std::unique_ptr<llm::Backend> inner_;
  llm::CachingBackend cache_;
};

}  // namespace

std::unique_ptr<llm::Backend> make_backend(const BackendConfig& config) {
  std::unique_ptr<llm::Backend> backend;
  if (config.kind == "mock") {
    backend = std::make_unique<llm::MockBackend>(config.mock);
  } else if (config.kind == "openai") {
    backend = std::make_unique<llm::OpenAiChatBackend>(config.chat);
  } else {
    throw std::invalid_argument("unknown backend: " + config.kind);
  }
  if (config.response_cache) {
    return std::make_unique<OwningCachingBackend>(std::move(backend), *config.response_cache,
                                                  config.cache_bypass);
  }
  return backend;
}

Services make_services(const ExperimentConfig& config) {
  Services s;
  if (config.embedding.kind == "hash") {
    s.provider = std::make_unique<retrieval::HashEmbeddingProvider>(config.embedding.dim);
  } else if (config.embedding.kind == "openai") {
    s.provider = std::make_unique<retrieval::HttpEmbeddingProvider>(config.embedding.http);
  } else {
    throw std::invalid_argument("unknown embedding provider: " + config.embedding.kind);
  }
  s.cache = config.embedding.cache_path
                ? std::make_unique<retrieval::EmbeddingCache>(*config.embedding.cache_path)
                : std::make_unique<retrieval::EmbeddingCache>();
  return s;
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

namespace {

json metrics_json(const eval::MetricSet& m) {
  json j;
  for (const auto& [n, v] : m.ndcg) j["ndcg@" + std::to_string(n)] = v;
  j["cir"] = m.cir;
  j["truth_rank"] = m.truth_rank ? json(*m.truth_rank) : json(nullptr);
  return j;
}

eval::MetricSet metrics_from_json(const json& j) {
  eval::MetricSet m;
  for (const auto& [key, value] : j.items()) {
    if (key.rfind("ndcg@", 0) == 0) m.ndcg[std::stoi(key.substr(5))] = value.get<double>();
  }
  m.cir = j.value("cir", 0.0);
  if (j.contains("truth_rank") && !j.at("truth_rank").is_null()) {
    m.truth_rank = j.at("truth_rank").get<int>();
  }
  return m;
}

json summary_metrics_json(const eval::RunSummary& s) {
  json j = json::object();
  for (const auto& [name, ms] : s) j[name] = {{"mean", ms.mean}, {"std", ms.std}};
  return j;
}

}  // namespace

json to_json(const RunRecord& r) {
  json messages = json::array();
  for (const auto& m : r.prompt.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  json j{{"config_hash", r.config_hash},
         {"dataset", r.dataset},
         {"method", r.method},
         {"k", r.k},
         {"instance", r.instance},
         {"instance_index", r.instance_index},
         {"repeat", r.repeat},
         {"status", r.status},
         {"error", r.error},
         {"prompt", {{"messages", std::move(messages)}, {"token_estimate", r.prompt.token_estimate}}},
         {"completion", llm::to_json(r.completion)},
         {"truth", r.truth},
         {"candidates", r.candidates},
         {"candidate_titles", r.candidate_titles},
         {"metrics", metrics_json(r.metrics)}};
  if (r.parsed) {
    json lines = json::array();
    for (const auto& line : r.parsed->lines) {
      lines.push_back({{"text", line.text},
                       {"item", line.item ? json(*line.item) : json(nullptr)},
                       {"duplicate", line.duplicate}});
    }
    j["parsed"] = {{"n_output_lines", r.parsed->n_output_lines}, {"lines", std::move(lines)}};
  } else {
    j["parsed"] = nullptr;
  }
  return j;
}

RunRecord record_from_json(const json& j) {
  RunRecord r;
  r.config_hash = j.at("config_hash").get<std::string>();
  r.dataset = j.value("dataset", std::string());
  r.method = j.at("method").get<std::string>();
  r.k = j.value("k", std::size_t{0});
  r.instance = j.at("instance").get<std::string>();
  r.instance_index = j.value("instance_index", std::size_t{0});
  r.repeat = j.at("repeat").get<std::size_t>();
  r.status = j.at("status").get<std::string>();
  r.error = j.value("error", std::string());
  if (j.contains("prompt")) {
    for (const auto& m : j.at("prompt").at("messages")) {
      r.prompt.messages.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
    }
    r.prompt.token_estimate = j.at("prompt").value("token_estimate", std::size_t{0});
  }
  if (j.contains("completion") && !j.at("completion").is_null()) {
    r.completion = llm::completion_from_json(j.at("completion"));
  }
  r.truth = j.at("truth").get<std::string>();
  r.candidates = j.at("candidates").get<std::vector<std::string>>();
  r.candidate_titles = j.value("candidate_titles", std::vector<std::string>{});
  r.metrics = metrics_from_json(j.at("metrics"));
  return r;
}

json to_json(const ExperimentSummary& s) {
  json per_repeat = json::array();
  for (const auto& m : s.per_repeat) {
    json entry = metrics_json(m);
    entry.erase("truth_rank");
    per_repeat.push_back(std::move(entry));
  }
  return json{{"config_hash", s.config_hash}, {"dataset", s.dataset},
              {"method", s.method},           {"k", s.k},
              {"n_instances", s.n_instances}, {"repeats", s.repeats},
              {"failures", s.failures},       {"unparseable", s.unparseable},
              {"metrics", summary_metrics_json(s.metrics)},
              {"per_repeat", std::move(per_repeat)}};
}

// ---------------------------------------------------------------------------
// Experiment
// ---------------------------------------------------------------------------

namespace {

std::vector<corpus::Item> candidate_items(std::span<const corpus::ItemId> ids,
                                          std::span<const std::string> titles) {
  std::vector<corpus::Item> items;
  items.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) items.push_back({ids[i], titles[i]});
  return items;
}

void score_record(RunRecord& record, std::size_t m, const eval::ScoringOptions& scoring) {
  const auto items = candidate_items(record.candidates, record.candidate_titles);
  try {
    record.parsed = eval::parse_ranked_list(record.completion.response, items);
    record.metrics = eval::score(*record.parsed, record.truth, m, scoring);
    record.status = "ok";
  } catch (const eval::UnparseableResponse& e) {
    record.parsed.reset();
    record.metrics = eval::total_miss(scoring);
    record.status = "unparseable";
    record.error = e.what();
  }
}

/// Means per repeat over the records that reached scoring.
std::vector<eval::MetricSet> per_repeat_means(std::span<const RunRecord> records,
                                              std::size_t repeats) {
  std::vector<std::vector<eval::MetricSet>> buckets(repeats);
  for (const auto& r : records) {
    if (r.status == "failed") continue;
    if (r.repeat >= buckets.size()) buckets.resize(r.repeat + 1);
    buckets[r.repeat].push_back(r.metrics);
  }
  std::vector<eval::MetricSet> out;
  for (const auto& bucket : buckets) {
    if (!bucket.empty()) out.push_back(eval::average(bucket));
  }
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const PreparedData& data,
                                llm::Backend& backend, Services& services) {
  config.validate();
  const auto registry = registry_for(config);
  const std::string hash = config_hash(config);
  const auto& catalog = data.log.catalog;

  std::unique_ptr<retrieval::Retriever> retriever;
  if (needs_retriever(config.method)) {
    retrieval::SimilarityMethod sim{config.selection, stream_seed(config, "selection")};
    retriever = std::make_unique<retrieval::Retriever>(sim, catalog, services.provider.get(),
                                                       services.cache.get(), config.max_h);
    retriever->warm(data.split.train_pool, config.backend.max_in_flight);
  }

  const std::size_t k_reported =
      config.method == Method::kSyn ? config.k_members
      : config.method == Method::kZeroShot ? 0 : 1;

  std::vector<RunRecord> records;
  records.reserve(data.instances.size() * config.repeats);
  for (std::size_t i = 0; i < data.instances.size(); ++i) {
    const auto& test = data.instances[i];
    for (std::size_t r = 0; r < config.repeats; ++r) {
      RunRecord rec;
      rec.config_hash = hash;
      rec.dataset = config.dataset_name;
      rec.method = method_name(config.method);
      rec.k = k_reported;
      rec.instance = test.user;
      rec.instance_index = i;
      rec.repeat = r;
      rec.truth = test.truth;
      try {
        auto demos = build_demonstrations(config, data, test, r, retriever.get());
        prompts::PromptOptions options;
        options.max_history = config.max_h;
        rec.prompt = prompts::assemble_prompt(demos, test, config.variant,
                                              stream_seed(config, "shuffle", test.user, r), catalog,
                                              registry, options);
        rec.candidates = rec.prompt.meta.test_candidates;
        rec.candidate_titles = rec.prompt.meta.test_candidate_titles;
      } catch (const std::exception& e) {
        rec.status = "failed";
        rec.error = std::string("prompt: ") + e.what();
        rec.candidates = test.candidates;
        rec.candidate_titles = catalog.titles(test.candidates);
        rec.metrics = eval::total_miss(config.scoring);
      }
      records.push_back(std::move(rec));
    }
  }

  // Completions run concurrently; everything else stays in (instance, repeat)
  // order so the record log does not depend on scheduling.
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t idx = next++; idx < records.size(); idx = next++) {
      RunRecord& rec = records[idx];
      if (rec.status == "failed") continue;
      try {
        rec.completion = llm::complete(rec.prompt, config.backend.params, backend);
      } catch (const std::exception& e) {
        rec.status = "failed";
        rec.error = std::string("completion: ") + e.what();
        rec.completion.prompt_hash = llm::prompt_hash(rec.prompt);
        rec.completion.provider = backend.id();
      }
    }
  };
  const std::size_t n_workers = std::min(config.backend.max_in_flight, records.size());
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < n_workers; ++w) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  ExperimentResult result;
  auto& s = result.summary;
  s.config_hash = hash;
  s.dataset = config.dataset_name;
  s.method = method_name(config.method);
  s.k = k_reported;
  s.n_instances = data.instances.size();
  s.repeats = config.repeats;
  for (auto& rec : records) {
    if (rec.status == "failed") {
      rec.metrics = eval::total_miss(config.scoring);
      ++s.failures;
      continue;
    }
    score_record(rec, rec.candidates.size(), config.scoring);
    if (rec.status == "unparseable") ++s.unparseable;
  }
  s.per_repeat = per_repeat_means(records, config.repeats);
  if (!s.per_repeat.empty()) s.metrics = eval::aggregate_runs(s.per_repeat);
  result.records = std::move(records);
  return result;
}

std::vector<GridEntry> grid_search_k(const ExperimentConfig& config, std::span<const std::size_t> ks,
                                     const PreparedData& data, llm::Backend& backend,
                                     Services& services) {
  std::vector<std::size_t> sorted(ks.begin(), ks.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  if (sorted.empty()) throw std::invalid_argument("grid search needs at least one k");

  std::vector<GridEntry> entries;
  std::optional<std::size_t> best;
  double best_score = 0.0;
  for (std::size_t k : sorted) {
    ExperimentConfig cfg = config;
    cfg.method = Method::kSyn;
    cfg.k_members = k;
    GridEntry entry;
    entry.k = k;
    entry.summary = run_experiment(cfg, data, backend, services).summary;
    auto it = entry.summary.metrics.find("ndcg@10");
    if (it != entry.summary.metrics.end() && (!best || it->second.mean > best_score)) {
      best = entries.size();
      best_score = it->second.mean;
    }
    entries.push_back(std::move(entry));
  }
  if (best) entries[*best].best = true;
  return entries;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

void write_records(const fs::path& path, std::span<const RunRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

void write_summary(const fs::path& path, const ExperimentSummary& summary,
                   const ExperimentConfig& config) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  json j = to_json(summary);
  j["config"] = to_json(config);
  out << j.dump(2) << '\n';
}

namespace {

ReportRow row_from_summary(const ExperimentSummary& s, std::size_t n_records) {
  ReportRow row;
  row.dataset = s.dataset;
  row.method = s.method;
  row.config_hash = s.config_hash;
  row.k = s.k;
  row.records = n_records;
  row.failures = s.failures;
  row.metrics = s.metrics;
  return row;
}

std::vector<std::string> metric_columns(const Report& report) {
  std::set<std::string> names;
  for (const auto& row : report.rows) {
    for (const auto& [name, _] : row.metrics) names.insert(name);
  }
  // ndcg@5, ndcg@10, ndcg@20 read better in cutoff order than in string order.
  std::vector<std::string> ndcg, other;
  for (const auto& n : names) (n.rfind("ndcg@", 0) == 0 ? ndcg : other).push_back(n);
  std::sort(ndcg.begin(), ndcg.end(), [](const std::string& a, const std::string& b) {
    return std::stoi(a.substr(5)) < std::stoi(b.substr(5));
  });
  ndcg.insert(ndcg.end(), other.begin(), other.end());
  return ndcg;
}

std::string fixed4(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

}  // namespace

void write_outputs(const fs::path& dir, const ExperimentResult& result,
                   const ExperimentConfig& config) {
  fs::create_directories(dir);
  write_records(dir / "records.jsonl", result.records);
  write_summary(dir / "summary.json", result.summary, config);
  Report rep;
  rep.rows.push_back(row_from_summary(result.summary, result.records.size()));
  std::ofstream csv(dir / "table.csv", std::ios::binary | std::ios::trunc);
  csv << format_csv(rep);
}

Report report(const fs::path& records_path, bool rescore, const eval::ScoringOptions& scoring) {
  std::ifstream in(records_path);
  if (!in) throw std::runtime_error("cannot open records: " + records_path.string());

  struct Group {
    std::size_t k = 0;
    std::vector<RunRecord> records;
  };
  std::map<std::tuple<std::string, std::string, std::string>, Group> groups;
  Report rep;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    RunRecord r;
    try {
      r = record_from_json(json::parse(line));
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping record line " << lineno << ": " << e.what() << '\n';
      ++rep.skipped_lines;
      continue;
    }
    if (rescore && r.status != "failed") {
      if (r.candidate_titles.size() != r.candidates.size()) {
        std::cerr << "warning: record line " << lineno << " lacks candidate titles\n";
        ++rep.skipped_lines;
        continue;
      }
      r.error.clear();
      score_record(r, r.candidates.size(), scoring);
    }
    auto& g = groups[{r.dataset, r.method, r.config_hash}];
    g.k = r.k;
    g.records.push_back(std::move(r));
  }

  for (auto& [key, g] : groups) {
    ReportRow row;
    std::tie(row.dataset, row.method, row.config_hash) = key;
    row.k = g.k;
    row.records = g.records.size();
    std::size_t max_repeat = 0;
    for (const auto& r : g.records) {
      if (r.status == "failed") ++row.failures;
      max_repeat = std::max(max_repeat, r.repeat + 1);
    }
    auto per_repeat = per_repeat_means(g.records, max_repeat);
    if (!per_repeat.empty()) row.metrics = eval::aggregate_runs(per_repeat);
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

std::string format_table(const Report& report) {
  const auto columns = metric_columns(report);
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header = {"dataset", "method", "k", "config", "records", "failed"};
  header.insert(header.end(), columns.begin(), columns.end());
  cells.push_back(header);
  for (const auto& row : report.rows) {
    std::vector<std::string> line = {row.dataset, row.method, std::to_string(row.k),
                                     row.config_hash, std::to_string(row.records),
                                     std::to_string(row.failures)};
    for (const auto& c : columns) {
      auto it = row.metrics.find(c);
      line.push_back(it == row.metrics.end()
                         ? "-"
                         : fixed4(it->second.mean) + " +/- " + fixed4(it->second.std));
    }
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::ostringstream os;
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (i + 1 == line.size()) {
        os << line[i] << '\n';
      } else {
        os << std::left << std::setw(static_cast<int>(width[i])) << line[i] << "  ";
      }
    }
  }
  return os.str();
}

std::string format_csv(const Report& report) {
  const auto columns = metric_columns(report);
  std::ostringstream os;
  os << "dataset,method,k,config_hash,records,failures";
  for (const auto& c : columns) os << ',' << c << "_mean," << c << "_std";
  os << '\n';
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
      if (ch == '"') out += '"';
      out += ch;
    }
    return out + '"';
  };
  os << std::setprecision(17);
  for (const auto& row : report.rows) {
    os << quote(row.dataset) << ',' << quote(row.method) << ',' << row.k << ','
       << row.config_hash << ',' << row.records << ',' << row.failures;
    for (const auto& c : columns) {
      auto it = row.metrics.find(c);
      if (it == row.metrics.end()) {
        os << ",,";
      } else {
        os << ',' << it->second.mean << ',' << it->second.std;
      }
    }
    os << '\n';
  }
  return os.str();
}

llm::ReplayBackend replay_backend_from_records(const fs::path& records_path) {
  std::ifstream in(records_path);
  if (!in) throw std::runtime_error("cannot open records: " + records_path.string());
  std::unordered_map<std::string, std::string> responses;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    RunRecord r;
    try {
      r = record_from_json(json::parse(line));
    } catch (const std::exception&) {
      continue;
    }
    if (r.status == "failed" || r.completion.prompt_hash.empty()) continue;
    responses.emplace(r.completion.prompt_hash, r.completion.response);
  }
  return llm::ReplayBackend(std::move(responses));
}

}  // namespace llmsrec::runner
