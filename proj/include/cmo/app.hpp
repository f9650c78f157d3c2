#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cmo/corpus.hpp"
#include "cmo/embed.hpp"
#include "cmo/evaluators.hpp"
#include "cmo/forge.hpp"
#include "cmo/gateway.hpp"
#include "cmo/optimizer.hpp"
#include "cmo/source_tree.hpp"
#include "cmo/types.hpp"

namespace cmo::app {

struct ChatSettings {
    std::string endpoint;
    std::string model = "gpt-4";
    std::string api_key_env = "CHAT_API_KEY";
    double timeout_seconds = 60.0;
    int max_concurrency = 4;
    int max_output_tokens = 1024;
};

struct EmbedSettings {
    /// Sidecar base URL; the hash embedder is used when empty or in mock mode.
    std::string endpoint;
    double timeout_seconds = 30.0;
    int hash_dim = 256;
};

struct ForgeSettings {
    /// Issue-title lookups are disabled when empty or in mock mode.
    std::string base_url;
    std::vector<std::string> project_keys;
    double timeout_seconds = 10.0;
};

/// Everything a command needs. Loaded from one JSON document; every field has a flag.
struct RunConfig {
    ChatSettings chat;
    EmbedSettings embed;
    ForgeSettings forge;
    opt::OptimizerConfig optimizer;
    std::size_t k = 10;
    /// Overrides the equation stored in the weights file.
    std::optional<eval::Equation> equation;
    std::optional<std::filesystem::path> corpus;
    std::optional<std::filesystem::path> weights;
    bool mock = false;
    std::optional<std::filesystem::path> fixtures;
    bool no_sim = false;
    std::vector<std::string> taxonomy = default_commit_taxonomy();

    /// Throws ConfigError. Live mode needs a chat endpoint and its key in the environment.
    void validate() const;

    /// Unknown keys are rejected. Throws ConfigError.
    static RunConfig from_json(std::string_view text);
    static RunConfig load(const std::filesystem::path& path);
    std::string to_json() const;
};

/// Clients and scorers built from a RunConfig on first use.
class Services {
public:
    /// `chat_override` replaces the configured chat client (used by tests).
    explicit Services(RunConfig config, std::shared_ptr<llm::ChatClient> chat_override = nullptr);

    const RunConfig& config() const noexcept { return config_; }
    llm::Gateway& gateway() { return *gateway_; }
    embed::Embedder& embedder() { return *embedder_; }
    /// nullptr in mock mode or without a forge URL.
    const forge::ForgeClient* forge() const noexcept { return forge_.get(); }

    /// nullptr with no_sim. Throws ConfigError when the index is missing or was built
    /// with a different embedding model.
    const corpus::CorpusIndex* index();
    eval::RetrievalScorer* retrieval();
    eval::LlmScorer& llm_scorer();
    eval::EvaluatorWeights weights() const;
    eval::Evaluator& evaluator();

private:
    RunConfig config_;
    std::unique_ptr<llm::Gateway> gateway_;
    std::unique_ptr<embed::Embedder> embedder_;
    std::unique_ptr<forge::ForgeClient> forge_;
    std::optional<corpus::CorpusIndex> index_;
    std::shared_ptr<eval::RetrievalScorer> retrieval_;
    std::shared_ptr<eval::LlmScorer> llm_;
    std::unique_ptr<eval::Evaluator> evaluator_;
};

struct CommitInput {
    std::string diff_text;
    std::string human_message;
    std::shared_ptr<const code::SourceTree> tree;
    /// "commit:<id>" or "diff:<path>".
    std::string label;
};

/// The diff and message of `rev` in the repository at `repo_path`. Throws RepoUnavailable.
CommitInput commit_input(const std::filesystem::path& repo_path, const std::string& rev,
                         std::optional<std::string> message_override = std::nullopt);

/// A diff file applied to a checked-out working tree. Throws ConfigError when the file is missing.
CommitInput diff_input(const std::filesystem::path& diff_file, const std::filesystem::path& worktree,
                       std::string human_message);

struct Ablation {
    bool no_search = false;
    ContextKindSet disabled;
};

/// "none", "no-search" or "disable-tool:<Kind>". Throws UnknownTool or ConfigError.
Ablation parse_ablation(std::string_view mode);

struct OptimizeOutcome {
    std::string message;
    MetricScores scores;
    double opt_score = 0.0;
    double initial_score = 0.0;
    std::string stop_reason;
    int steps_used = 0;
    CommitType commit_type;
    std::vector<ContextKind> contexts;
    std::vector<std::string> warnings;
    std::string result_json;
    std::string trace_text;
};

/// Classifies the commit, collects contexts, then searches (or runs the single combined
/// update under no-search).
OptimizeOutcome run_optimize(Services& services, const CommitInput& input, const Ablation& ablation = {});

/// {rationality, comprehensiveness, conciseness, expressiveness, opt_score, llm, sim}
std::string evaluation_json(const eval::Evaluation& e);

}  // namespace cmo::app
