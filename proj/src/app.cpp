#include "cmo/app.hpp"

#include <cmath>
#include <set>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "cmo/context.hpp"
#include "cmo/diff.hpp"
#include "cmo/errors.hpp"
#include "cmo/grammar.hpp"
#include "cmo/repo.hpp"
#include "cmo/util.hpp"

namespace cmo::app {

using nlohmann::json;

// ---- configuration -----------------------------------------------------------

void RunConfig::validate() const {
    optimizer.validate();
    if (k == 0) throw ConfigError("k must be at least 1");
    if (chat.max_concurrency < 1) throw ConfigError("chat.max_concurrency must be at least 1");
    if (chat.max_output_tokens < 1) throw ConfigError("chat.max_output_tokens must be at least 1");
    if (!(chat.timeout_seconds > 0) || !(embed.timeout_seconds > 0) || !(forge.timeout_seconds > 0))
        throw ConfigError("timeouts must be positive");
    if (embed.hash_dim < 8) throw ConfigError("embed.hash_dim must be at least 8");
    if (taxonomy.empty()) throw ConfigError("taxonomy must not be empty");
    if (mock) {
        if (fixtures && !std::filesystem::is_directory(*fixtures))
            throw ConfigError("fixture directory not found: " + fixtures->string());
        return;
    }
    if (chat.endpoint.empty())
        throw ConfigError("no chat endpoint configured; set chat.endpoint (or --chat-endpoint), or run with --mock");
    if (!env_var(chat.api_key_env.c_str()))
        throw ConfigError("environment variable " + chat.api_key_env + " is not set; it must hold the chat API key");
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw ConfigError("unknown config key '" + where + key + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void read_path(const json& j, const char* key, std::optional<std::filesystem::path>& out) {
    if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<std::string>();
}

}  // namespace

RunConfig RunConfig::from_json(std::string_view text) {
    RunConfig c;
    try {
        const json j = json::parse(text);
        reject_unknown(j,
                       {"chat", "embed", "forge", "optimizer", "k", "equation", "corpus", "weights", "mock",
                        "fixtures", "no_sim", "taxonomy"},
                       "");
        if (j.contains("chat")) {
            const auto& s = j.at("chat");
            reject_unknown(s, {"endpoint", "model", "api_key_env", "timeout_seconds", "max_concurrency",
                               "max_output_tokens"},
                           "chat.");
            read(s, "endpoint", c.chat.endpoint);
            read(s, "model", c.chat.model);
            read(s, "api_key_env", c.chat.api_key_env);
            read(s, "timeout_seconds", c.chat.timeout_seconds);
            read(s, "max_concurrency", c.chat.max_concurrency);
            read(s, "max_output_tokens", c.chat.max_output_tokens);
        }
        if (j.contains("embed")) {
            const auto& s = j.at("embed");
            reject_unknown(s, {"endpoint", "timeout_seconds", "hash_dim"}, "embed.");
            read(s, "endpoint", c.embed.endpoint);
            read(s, "timeout_seconds", c.embed.timeout_seconds);
            read(s, "hash_dim", c.embed.hash_dim);
        }
        if (j.contains("forge")) {
            const auto& s = j.at("forge");
            reject_unknown(s, {"base_url", "project_keys", "timeout_seconds"}, "forge.");
            read(s, "base_url", c.forge.base_url);
            read(s, "project_keys", c.forge.project_keys);
            read(s, "timeout_seconds", c.forge.timeout_seconds);
        }
        if (j.contains("optimizer")) {
            const auto& s = j.at("optimizer");
            reject_unknown(s, {"step_limit", "p", "base_temperature", "escalated_temperature"}, "optimizer.");
            read(s, "step_limit", c.optimizer.step_limit);
            read(s, "p", c.optimizer.p);
            read(s, "base_temperature", c.optimizer.base_temperature);
            read(s, "escalated_temperature", c.optimizer.escalated_temperature);
        }
        read(j, "k", c.k);
        if (j.contains("equation") && !j.at("equation").is_null())
            c.equation = eval::parse_equation(j.at("equation").get<std::string>());
        read_path(j, "corpus", c.corpus);
        read_path(j, "weights", c.weights);
        read(j, "mock", c.mock);
        read_path(j, "fixtures", c.fixtures);
        read(j, "no_sim", c.no_sim);
        read(j, "taxonomy", c.taxonomy);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) throw ConfigError("config file not found: " + path.string());
    RunConfig c = from_json(read_file(path));
    const auto base = path.parent_path();
    for (auto* p : {&c.corpus, &c.weights, &c.fixtures})
        if (*p && p->value().is_relative()) *p = base / p->value();
    return c;
}

std::string RunConfig::to_json() const {
    const auto path_or_null = [](const std::optional<std::filesystem::path>& p) {
        return p ? json(p->string()) : json(nullptr);
    };
    json j = {
        {"chat",
         {{"endpoint", chat.endpoint},
          {"model", chat.model},
          {"api_key_env", chat.api_key_env},
          {"timeout_seconds", chat.timeout_seconds},
          {"max_concurrency", chat.max_concurrency},
          {"max_output_tokens", chat.max_output_tokens}}},
        {"embed",
         {{"endpoint", embed.endpoint}, {"timeout_seconds", embed.timeout_seconds}, {"hash_dim", embed.hash_dim}}},
        {"forge",
         {{"base_url", forge.base_url},
          {"project_keys", forge.project_keys},
          {"timeout_seconds", forge.timeout_seconds}}},
        {"optimizer",
         {{"step_limit", optimizer.step_limit},
          {"p", optimizer.p},
          {"base_temperature", optimizer.base_temperature},
          {"escalated_temperature", optimizer.escalated_temperature}}},
        {"k", k},
        {"equation", equation ? json(std::string(eval::to_string(*equation))) : json(nullptr)},
        {"corpus", path_or_null(corpus)},
        {"weights", path_or_null(weights)},
        {"mock", mock},
        {"fixtures", path_or_null(fixtures)},
        {"no_sim", no_sim},
        {"taxonomy", taxonomy},
    };
    return j.dump(2) + "\n";
}

// ---- services ----------------------------------------------------------------

Services::Services(RunConfig config, std::shared_ptr<llm::ChatClient> chat_override) : config_(std::move(config)) {
    std::shared_ptr<llm::ChatClient> client = std::move(chat_override);
    if (!client) {
        if (config_.mock)
            client = std::make_shared<llm::MockChatClient>(config_.fixtures, llm::heuristic_response);
        else
            client = std::make_shared<llm::HttpChatClient>(
                llm::HttpChatConfig{config_.chat.endpoint, config_.chat.api_key_env, config_.chat.timeout_seconds});
    }
    gateway_ = std::make_unique<llm::Gateway>(client, config_.chat.max_concurrency);

    if (config_.mock || config_.embed.endpoint.empty()) {
        if (!config_.mock) spdlog::info("no embedding endpoint configured; using the hash embedder");
        embedder_ = std::make_unique<embed::HashEmbedder>(config_.embed.hash_dim);
    } else {
        embedder_ = std::make_unique<embed::HttpEmbedClient>(config_.embed.endpoint, config_.embed.timeout_seconds);
    }

    if (!config_.mock && !config_.forge.base_url.empty()) {
        forge::ForgeConfig fc;
        fc.base_url = config_.forge.base_url;
        fc.project_keys = config_.forge.project_keys;
        fc.timeout_seconds = config_.forge.timeout_seconds;
        forge_ = std::make_unique<forge::ForgeClient>(fc);
    }
}

const corpus::CorpusIndex* Services::index() {
    if (config_.no_sim) return nullptr;
    if (index_) return &*index_;
    if (!config_.corpus)
        throw ConfigError("similarity scoring needs a corpus index: pass --corpus <file> (build one with "
                          "`cmo corpus build`) or disable it with --no-sim");
    if (!std::filesystem::is_regular_file(*config_.corpus))
        throw ConfigError("corpus index not found at " + config_.corpus->string() +
                          ": build one with `cmo corpus build --out <file>` or run with --no-sim");
    index_ = corpus::CorpusIndex::load(*config_.corpus);
    const auto& meta = index_->metadata();
    const std::string diff_model = embedder_->model_id(embed::EmbedKind::code_diff);
    const std::string text_model = embedder_->model_id(embed::EmbedKind::text);
    if (meta.diff_model_id != diff_model || meta.message_model_id != text_model)
        throw ConfigError("corpus index was built with models (" + meta.diff_model_id + ", " + meta.message_model_id +
                          ") but the configured embedder provides (" + diff_model + ", " + text_model +
                          "); rebuild the index");
    return &*index_;
}

eval::RetrievalScorer* Services::retrieval() {
    if (retrieval_) return retrieval_.get();
    const corpus::CorpusIndex* idx = index();
    if (!idx) return nullptr;
    retrieval_ = std::make_shared<eval::RetrievalScorer>(*idx, *embedder_, config_.k);
    return retrieval_.get();
}

eval::LlmScorer& Services::llm_scorer() {
    if (!llm_) {
        llm::PromptSettings ps;
        ps.model = config_.chat.model;
        ps.max_output_tokens = config_.chat.max_output_tokens;
        llm_ = std::make_shared<eval::LlmScorer>(*gateway_, ps);
    }
    return *llm_;
}

eval::EvaluatorWeights Services::weights() const {
    eval::EvaluatorWeights w = config_.weights ? eval::EvaluatorWeights::load(*config_.weights) : eval::default_weights();
    if (config_.equation) w.equation = *config_.equation;
    w.validate();
    return w;
}

eval::Evaluator& Services::evaluator() {
    if (!evaluator_) {
        llm_scorer();
        retrieval();
        evaluator_ = std::make_unique<eval::Evaluator>(llm_, retrieval_, weights());
    }
    return *evaluator_;
}

// ---- inputs ------------------------------------------------------------------

CommitInput commit_input(const std::filesystem::path& repo_path, const std::string& rev,
                         std::optional<std::string> message_override) {
    repo::GitRepo repo(repo_path);
    const std::string id = repo.resolve(rev);
    CommitInput in;
    in.diff_text = repo.diff(id);
    in.human_message = message_override ? std::move(*message_override) : repo.message(id);
    in.tree = std::make_shared<code::GitRevisionTree>(repo, id);
    in.label = "commit:" + id;
    return in;
}

CommitInput diff_input(const std::filesystem::path& diff_file, const std::filesystem::path& worktree,
                       std::string human_message) {
    if (!std::filesystem::is_regular_file(diff_file)) throw ConfigError("diff file not found: " + diff_file.string());
    if (!std::filesystem::is_directory(worktree)) throw ConfigError("worktree not found: " + worktree.string());
    CommitInput in;
    in.diff_text = read_file(diff_file);
    in.human_message = std::move(human_message);
    in.tree = std::make_shared<code::DirectoryTree>(worktree);
    in.label = "diff:" + diff_file.string();
    return in;
}

Ablation parse_ablation(std::string_view mode) {
    Ablation a;
    if (mode.empty() || mode == "none") return a;
    if (mode == "no-search") {
        a.no_search = true;
        return a;
    }
    constexpr std::string_view prefix = "disable-tool:";
    if (mode.substr(0, prefix.size()) == prefix) {
        const std::string name(mode.substr(prefix.size()));
        const auto kind = parse_context_kind(name);
        if (!kind) throw UnknownTool(name);
        a.disabled.insert(*kind);
        return a;
    }
    throw ConfigError("unknown ablation mode '" + std::string(mode) + "' (expected no-search or disable-tool:<Kind>)");
}

// ---- optimize ----------------------------------------------------------------

std::string evaluation_json(const eval::Evaluation& e) {
    json j = json::object();
    for (Metric m : kMetrics) j[std::string(to_string(m))] = e.metrics[m];
    j["opt_score"] = e.opt.value;
    json llm = json::object();
    for (Metric m : kMetrics) llm[std::string(to_string(m))] = e.llm[m];
    j["llm"] = llm;
    j["sim"] = e.sim ? json(*e.sim) : json(nullptr);
    return j.dump(2) + "\n";
}

OptimizeOutcome run_optimize(Services& services, const CommitInput& input, const Ablation& ablation) {
    const RunConfig& cfg = services.config();
    if (trim(input.human_message).empty()) throw PreconditionError("the human-written message is empty");
    const diff::CodeDiff diff = diff::parse_unified_diff(input.diff_text);
    if (diff.empty()) throw PreconditionError("the commit has no textual changes");

    OptimizeOutcome out;
    llm::PromptSettings ps;
    ps.model = cfg.chat.model;
    ps.max_output_tokens = cfg.chat.max_output_tokens;

    try {
        out.commit_type = context::classify_commit_type(services.gateway(), input.diff_text, input.human_message,
                                                        cfg.taxonomy, ps);
    } catch (const Error& e) {
        out.commit_type = CommitType{"unknown"};
        out.warnings.push_back(std::string("commit type: ") + e.what());
        spdlog::warn("{}", out.warnings.back());
    }

    code::ProjectIndex project(input.tree, code::make_grammar("java"));
    context::CollectOptions co;
    co.human_message = input.human_message;
    co.forge = services.forge();
    co.summaries.settings = ps;
    co.disabled = ablation.disabled;
    auto collected = context::collect_contexts(diff, project, services.gateway(), co);
    for (auto& w : collected.warnings) out.warnings.push_back(std::move(w));
    for (const auto& item : collected.items) out.contexts.push_back(item.kind);

    opt::UpdateSettings us;
    us.prompt = ps;
    us.commit_type = out.commit_type;
    if (auto* retrieval = services.retrieval())
        for (const auto& n : retrieval->neighbors(input.diff_text))
            us.similar.push_back({n.entry->diff_text, n.entry->message_text});
    opt::GatewayUpdater updater(services.gateway(), input.diff_text, us);
    eval::Evaluator& evaluator = services.evaluator();

    if (ablation.no_search) {
        const auto r = opt::optimize_no_search(input.diff_text, input.human_message, collected.items, evaluator,
                                               updater, cfg.optimizer);
        out.message = r.message.text;
        out.scores = r.message.scores;
        out.opt_score = r.message.opt_score.value;
        out.initial_score = r.initial.opt_score.value;
        out.stop_reason = "no_search";
        out.steps_used = 1;
        out.result_json = r.result_json();
        out.trace_text = json{{"event", "no_search"},
                              {"initial", r.initial.text},
                              {"initial_opt", r.initial.opt_score.value},
                              {"message", r.message.text},
                              {"opt", r.message.opt_score.value}}
                             .dump() +
                         "\n";
        return out;
    }

    const auto r =
        opt::optimize(input.diff_text, input.human_message, collected.items, evaluator, updater, cfg.optimizer);
    out.message = r.best.text;
    out.scores = r.best.scores;
    out.opt_score = r.best.opt_score.value;
    out.initial_score = r.initial.opt_score.value;
    out.stop_reason = std::string(opt::to_string(r.stop_reason));
    out.steps_used = r.steps_used;
    out.result_json = r.result_json();
    out.trace_text = r.trace_text();
    return out;
}

}  // namespace cmo::app
