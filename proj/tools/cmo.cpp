// cmo: optimize commit messages with software context and quality feedback.
//
// Exit status: 0 success, 1 configuration or usage error, 2 failure while running.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cmo/app.hpp"
#include "cmo/corpus.hpp"
#include "cmo/errors.hpp"
#include "cmo/evaluators.hpp"
#include "cmo/metrics.hpp"
#include "cmo/util.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRun = 2;

struct GlobalFlags {
    std::optional<std::string> config;
    bool mock = false;
    std::optional<std::string> fixtures;
    std::optional<std::string> corpus;
    std::optional<std::string> weights;
    std::optional<std::string> equation;
    std::optional<std::size_t> k;
    std::optional<double> p;
    std::optional<int> step_limit;
    std::optional<double> escalated_temperature;
    std::optional<std::string> chat_endpoint;
    std::optional<std::string> model;
    std::optional<std::string> embed_endpoint;
    std::optional<std::string> forge_url;
    bool no_sim = false;
    std::optional<std::string> journal_out;
    int verbose = 0;
};

struct InputFlags {
    std::string repo = ".";
    std::string commit = "HEAD";
    std::optional<std::string> diff;
    std::string worktree = ".";
    std::optional<std::string> message;
    std::optional<std::string> message_file;
};

struct OutputFlags {
    std::optional<std::string> trace_out;
    std::optional<std::string> result_out;
};

cmo::app::RunConfig resolve_config(const GlobalFlags& g) {
    cmo::app::RunConfig c = g.config ? cmo::app::RunConfig::load(*g.config) : cmo::app::RunConfig{};
    if (g.mock) c.mock = true;
    if (g.fixtures) c.fixtures = *g.fixtures;
    if (g.corpus) c.corpus = *g.corpus;
    if (g.weights) c.weights = *g.weights;
    if (g.equation) c.equation = cmo::eval::parse_equation(*g.equation);
    if (g.k) c.k = *g.k;
    if (g.p) c.optimizer.p = *g.p;
    if (g.step_limit) c.optimizer.step_limit = *g.step_limit;
    if (g.escalated_temperature) c.optimizer.escalated_temperature = *g.escalated_temperature;
    if (g.chat_endpoint) c.chat.endpoint = *g.chat_endpoint;
    if (g.model) c.chat.model = *g.model;
    if (g.embed_endpoint) c.embed.endpoint = *g.embed_endpoint;
    if (g.forge_url) c.forge.base_url = *g.forge_url;
    if (g.no_sim) c.no_sim = true;
    c.validate();
    return c;
}

void add_input_flags(CLI::App* cmd, InputFlags& in) {
    cmd->add_option("--repo", in.repo, "Git repository holding the commit")->capture_default_str();
    cmd->add_option("--commit", in.commit, "Commit to optimize")->capture_default_str();
    cmd->add_option("--diff", in.diff, "Unified diff file to use instead of a commit");
    cmd->add_option("--worktree", in.worktree, "Post-change source tree for --diff")->capture_default_str();
    auto* m = cmd->add_option("--message", in.message, "Human-written message (defaults to the commit's)");
    cmd->add_option("--message-file", in.message_file, "Read the human-written message from a file")->excludes(m);
}

void add_output_flags(CLI::App* cmd, OutputFlags& out) {
    cmd->add_option("--trace-out", out.trace_out, "Write the search trace (JSON lines)");
    cmd->add_option("--result-out", out.result_out, "Write the result JSON");
}

cmo::app::CommitInput load_input(const InputFlags& in) {
    std::optional<std::string> message = in.message;
    if (in.message_file) {
        if (!fs::is_regular_file(*in.message_file)) throw cmo::ConfigError("message file not found: " + *in.message_file);
        message = cmo::read_file(*in.message_file);
    }
    if (in.diff) {
        if (!message) throw cmo::ConfigError("--diff needs --message or --message-file");
        return cmo::app::diff_input(*in.diff, in.worktree, *message);
    }
    try {
        return cmo::app::commit_input(in.repo, in.commit, message);
    } catch (const cmo::RepoUnavailable& e) {
        throw cmo::ConfigError(e.what());
    }
}

void write_journal(const GlobalFlags& g, cmo::app::Services& services) {
    if (!g.journal_out) return;
    std::string out;
    for (const auto& e : services.gateway().journal())
        out += json{{"template", e.template_id},
                    {"prompt_hash", e.prompt_hash},
                    {"temperature", e.temperature},
                    {"attempts", e.attempts},
                    {"ok", e.ok}}
                   .dump() +
               "\n";
    cmo::write_file_atomic(*g.journal_out, out);
}

int run_optimize(const GlobalFlags& g, const InputFlags& in, const OutputFlags& o, const std::string& mode) {
    const auto ablation = cmo::app::parse_ablation(mode);
    const auto cfg = resolve_config(g);
    const auto input = load_input(in);
    cmo::app::Services services(cfg);
    services.evaluator();  // surfaces a missing corpus before any model call
    const auto outcome = cmo::app::run_optimize(services, input, ablation);
    if (o.trace_out) cmo::write_file_atomic(*o.trace_out, outcome.trace_text);
    if (o.result_out) cmo::write_file_atomic(*o.result_out, outcome.result_json);
    write_journal(g, services);
    std::cout << outcome.result_json;
    spdlog::info("{} -> {:.3f} ({}, {} steps, {} gateway calls)", outcome.initial_score, outcome.opt_score,
                 outcome.stop_reason, outcome.steps_used, services.gateway().total_calls());
    return 0;
}

std::vector<std::string> read_messages(const std::string& path) {
    if (!fs::is_regular_file(path)) throw cmo::ConfigError("file not found: " + path);
    std::vector<std::string> out;
    const bool jsonl = fs::path(path).extension() == ".jsonl";
    for (const auto& line : cmo::split_lines(cmo::read_file(path))) {
        if (!jsonl) {
            out.push_back(line);
            continue;
        }
        if (cmo::trim(line).empty()) continue;
        try {
            const json j = json::parse(line);
            out.push_back(j.is_string() ? j.get<std::string>() : j.at("message").get<std::string>());
        } catch (const json::exception& e) {
            throw cmo::ConfigError(path + ": " + e.what());
        }
    }
    return out;
}

int run_evaluate(const std::string& candidates_path, const std::string& references_path,
                 const std::optional<std::string>& out_path) {
    const auto candidates = read_messages(candidates_path);
    const auto references = read_messages(references_path);
    if (candidates.size() != references.size())
        throw cmo::ConfigError("candidate and reference counts differ (" + std::to_string(candidates.size()) + " vs " +
                               std::to_string(references.size()) + ")");
    std::vector<cmo::metrics::MetricReport> reports;
    json pairs = json::array();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto r = cmo::metrics::evaluate(candidates[i], references[i]);
        reports.push_back(r);
        pairs.push_back({{"bleu", r.bleu}, {"meteor", r.meteor}, {"rouge_l", r.rouge_l}});
    }
    const auto m = cmo::metrics::mean(reports);
    const std::string doc =
        json{{"pairs", pairs}, {"mean", {{"bleu", m.bleu}, {"meteor", m.meteor}, {"rouge_l", m.rouge_l}}}}.dump(2) +
        "\n";
    if (out_path) cmo::write_file_atomic(*out_path, doc);
    std::cout << doc;
    return 0;
}

json metadata_json(const cmo::corpus::CorpusIndex& index) {
    const auto& m = index.metadata();
    return {{"entries", index.size()},
            {"diff_model_id", m.diff_model_id},
            {"message_model_id", m.message_model_id},
            {"diff_dim", m.diff_dim},
            {"message_dim", m.message_dim},
            {"built_at", m.built_at},
            {"sources", m.sources},
            {"filter", m.filter}};
}

}  // namespace

int main(int argc, char** argv) {
    auto logger = spdlog::stderr_color_mt("cmo");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("%^%l%$: %v");
    spdlog::set_level(spdlog::level::warn);

    CLI::App app{"Optimize commit messages with software context and quality feedback"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", "cmo 1.0.0");

    GlobalFlags g;
    app.add_option("--config", g.config, "JSON configuration file");
    app.add_flag("--mock", g.mock, "Answer every model call offline (no network)");
    app.add_option("--fixtures", g.fixtures, "Directory of recorded chat replies for --mock");
    app.add_option("--corpus", g.corpus, "Corpus index file");
    app.add_option("--weights", g.weights, "Evaluator weights JSON");
    app.add_option("--equation", g.equation, "Combined score: even or correlation");
    app.add_option("--k", g.k, "Neighbours used for the similarity score and exemplars");
    app.add_option("--p", g.p, "Initial improvement threshold as a percentage of the starting score");
    app.add_option("--step-limit", g.step_limit, "Maximum search steps");
    app.add_option("--escalated-temperature", g.escalated_temperature, "Temperature after the first stall");
    app.add_option("--chat-endpoint", g.chat_endpoint, "OpenAI-compatible API base URL");
    app.add_option("--model", g.model, "Chat model id");
    app.add_option("--embed-endpoint", g.embed_endpoint, "Embedding service base URL");
    app.add_option("--forge-url", g.forge_url, "Issue tracker API base URL");
    app.add_flag("--no-sim", g.no_sim, "Score with the LLM evaluator only (no corpus needed)");
    app.add_option("--journal-out", g.journal_out, "Write one JSON line per chat call");
    app.add_flag("-v,--verbose", g.verbose, "More logging (repeat for debug)");

    InputFlags in;
    OutputFlags out;
    std::string ablate_mode = "none";

    auto* optimize = app.add_subcommand("optimize", "Optimize the message of one commit");
    add_input_flags(optimize, in);
    add_output_flags(optimize, out);
    optimize->add_option("--ablate", ablate_mode, "no-search or disable-tool:<Kind>");

    auto* ablate = app.add_subcommand("ablate", "Run an ablation variant: no-search or disable-tool:<Kind>");
    ablate->add_option("mode", ablate_mode, "Ablation mode")->required();
    add_input_flags(ablate, in);
    add_output_flags(ablate, out);

    auto* corpus_cmd = app.add_subcommand("corpus", "Build or inspect the corpus index");
    corpus_cmd->require_subcommand(1);
    std::vector<std::string> sources;
    std::string index_out;
    std::size_t max_commits = 0;
    std::string filter_name = "llm";
    std::optional<std::string> timestamp;
    std::optional<std::string> clone_dir;
    auto* build = corpus_cmd->add_subcommand("build", "Mine repositories and embed their commits");
    build->add_option("--source", sources, "Repository path or clone URL (repeatable)")->required();
    build->add_option("--out", index_out, "Index file to write")->required();
    build->add_option("--max-commits", max_commits, "Per-repository commit cap (0 = all)");
    build->add_option("--filter", filter_name, "Message filter: llm or accept-all")
        ->check(CLI::IsMember({"llm", "accept-all"}))
        ->capture_default_str();
    build->add_option("--timestamp", timestamp, "built_at value to record (default: now)");
    build->add_option("--clone-dir", clone_dir, "Where URL sources are cloned");
    auto* info = corpus_cmd->add_subcommand("info", "Print index metadata");

    auto* calibrate = app.add_subcommand("calibrate", "Fit evaluator weights on a labeled set");
    std::string set_path, weights_out;
    double alpha = 0.05;
    calibrate->add_option("--set", set_path, "Calibration set (JSON lines)")->required();
    calibrate->add_option("--out", weights_out, "Weights file to write")->required();
    calibrate->add_option("--alpha", alpha, "Significance level")->capture_default_str();

    auto* score = app.add_subcommand("score", "Score a commit message");
    add_input_flags(score, in);

    auto* evaluate = app.add_subcommand("evaluate", "BLEU, METEOR and ROUGE-L against references");
    std::string candidates_path, references_path;
    std::optional<std::string> evaluate_out;
    evaluate->add_option("--candidates", candidates_path, "One message per line, or .jsonl")->required();
    evaluate->add_option("--references", references_path, "One message per line, or .jsonl")->required();
    evaluate->add_option("--out", evaluate_out, "Write the report here as well");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }
    if (g.verbose == 1) spdlog::set_level(spdlog::level::info);
    if (g.verbose >= 2) spdlog::set_level(spdlog::level::debug);

    try {
        if (optimize->parsed()) return run_optimize(g, in, out, ablate_mode);
        if (ablate->parsed()) return run_optimize(g, in, out, ablate_mode);

        if (build->parsed()) {
            const auto cfg = resolve_config(g);
            cmo::app::Services services(cfg);
            cmo::corpus::MineOptions mo;
            mo.max_commits_per_repo = max_commits;
            if (clone_dir) mo.clone_dir = *clone_dir;
            auto mined = cmo::corpus::mine_commits(sources, mo);
            for (const auto& e : mined.errors) spdlog::warn("{}", e);
            std::unique_ptr<cmo::corpus::GoodMessageFilter> filter;
            if (filter_name == "accept-all") {
                filter = std::make_unique<cmo::corpus::AcceptAllFilter>();
            } else {
                cmo::llm::PromptSettings ps;
                ps.model = cfg.chat.model;
                filter = std::make_unique<cmo::corpus::LlmGoodFilter>(services.gateway(), ps);
            }
            const auto filtered = cmo::corpus::filter_good(std::move(mined.records), *filter);
            cmo::corpus::BuildOptions bo;
            bo.timestamp = timestamp;
            bo.sources = sources;
            bo.filter = filter->name();
            const auto index = cmo::corpus::build_index(filtered.kept, services.embedder(), bo);
            index.save(index_out);
            write_journal(g, services);
            json report = metadata_json(index);
            report["mined"] = filtered.kept.size() + filtered.rejected + filtered.failed;
            report["rejected"] = filtered.rejected;
            report["filter_failures"] = filtered.failed;
            report["skipped"] = {{"merges", mined.merges},
                                 {"empty_messages", mined.empty_messages},
                                 {"non_textual", mined.non_textual},
                                 {"unparseable", mined.unparseable},
                                 {"duplicates", mined.duplicates}};
            report["source_errors"] = mined.errors;
            std::cout << report.dump(2) << "\n";
            return 0;
        }
        if (info->parsed()) {
            if (!g.corpus) throw cmo::ConfigError("corpus info needs --corpus <file>");
            if (!fs::is_regular_file(*g.corpus)) throw cmo::ConfigError("corpus index not found: " + *g.corpus);
            std::cout << metadata_json(cmo::corpus::CorpusIndex::load(*g.corpus)).dump(2) << "\n";
            return 0;
        }
        if (calibrate->parsed()) {
            auto cfg = resolve_config(g);
            if (cfg.no_sim) throw cmo::ConfigError("calibrate needs the similarity score; drop --no-sim");
            const auto items = cmo::eval::load_calibration_set(set_path);
            cmo::app::Services services(cfg);
            auto* sim = services.retrieval();
            const auto weights = cmo::eval::calibrate(items, services.llm_scorer(), *sim, alpha);
            weights.save(weights_out);
            write_journal(g, services);
            std::cout << weights.to_json() << "\n";
            return 0;
        }
        if (score->parsed()) {
            const auto cfg = resolve_config(g);
            const auto input = load_input(in);
            cmo::app::Services services(cfg);
            const auto e = services.evaluator().evaluate(input.diff_text, input.human_message);
            write_journal(g, services);
            std::cout << cmo::app::evaluation_json(e);
            return 0;
        }
        if (evaluate->parsed()) return run_evaluate(candidates_path, references_path, evaluate_out);
    } catch (const cmo::ConfigError& e) {
        spdlog::error("{}", e.what());
        return kExitConfig;
    } catch (const cmo::UnknownTool& e) {
        spdlog::error("{}", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitRun;
    }
    return kExitConfig;
}
