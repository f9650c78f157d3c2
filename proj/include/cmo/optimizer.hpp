#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "cmo/evaluators.hpp"
#include "cmo/gateway.hpp"
#include "cmo/prompts.hpp"
#include "cmo/types.hpp"

namespace cmo::opt {

struct OptimizerConfig {
    int step_limit = 50;
    /// Percentage of the initial score used as the first improvement threshold.
    double p = 5.0;
    double base_temperature = 0.0;
    double escalated_temperature = 1.0;

    /// Throws ConfigError.
    void validate() const;
};

/// One decay step: max(t_prev * (1 - step/N), min_threshold).
double threshold_schedule(double t_prev, int step, int step_limit, double min_threshold);

/// Produces revised message text. Implementations may throw GatewayError.
class Updater {
public:
    virtual ~Updater() = default;
    virtual std::string update(const MessageCandidate& current, const ContextItem& context, double temperature) = 0;
    virtual std::string update_all(const MessageCandidate& current, const std::vector<ContextItem>& contexts,
                                   double temperature) = 0;
};

struct UpdateSettings {
    llm::PromptSettings prompt;
    CommitType commit_type{"chore"};
    std::vector<llm::Exemplar> similar;
};

/// Updater backed by the chat gateway and the update prompts.
class GatewayUpdater final : public Updater {
public:
    GatewayUpdater(llm::Gateway& gateway, std::string diff_text, UpdateSettings settings);
    std::string update(const MessageCandidate& current, const ContextItem& context, double temperature) override;
    std::string update_all(const MessageCandidate& current, const std::vector<ContextItem>& contexts,
                           double temperature) override;

private:
    llm::Gateway& gateway_;
    std::string diff_text_;
    UpdateSettings settings_;
};

/// Max-first queue ordered by optimization score, then fewer considered contexts,
/// then insertion order.
class CandidateQueue {
public:
    void push(const MessageCandidate& candidate);
    const MessageCandidate& head() const;
    MessageCandidate pop();
    bool empty() const noexcept { return heap_.empty(); }
    std::size_t size() const noexcept { return heap_.size(); }
    /// Candidate ids from head to tail.
    std::vector<std::size_t> order() const;

    /// True when `a` should be dequeued before `b`.
    static bool before(const MessageCandidate& a, std::size_t seq_a, const MessageCandidate& b, std::size_t seq_b);

private:
    struct Slot {
        MessageCandidate candidate;
        std::size_t seq;
    };
    std::vector<Slot> heap_;
    std::size_t next_seq_ = 0;
};

/// Child of `current` with `context` added: text from the updater, scores from the
/// evaluator. Throws PreconditionError when the kind was already considered and
/// UnparseableResponse for an empty reply; updater and evaluator errors propagate.
MessageCandidate update_candidate(const MessageCandidate& current, const ContextItem& context,
                                  std::string_view diff_text, eval::CandidateEvaluator& evaluator, Updater& updater,
                                  double temperature);

enum class StopReason { step_limit, threshold, queue_exhausted };
std::string_view to_string(StopReason reason);

struct OptimizationResult {
    MessageCandidate best;
    MessageCandidate initial;
    StopReason stop_reason = StopReason::step_limit;
    int steps_used = 0;
    std::size_t update_calls = 0;
    /// Every candidate ever generated, by id; id 0 is the human message.
    std::vector<MessageCandidate> candidates;
    /// highest_score after initialization and after each update.
    std::vector<double> highest_history;
    /// JSON lines: an init record, one record per step, and a stop record.
    std::vector<std::string> trace;

    std::string trace_text() const;
    /// {message, metric_scores, opt_score, stop_reason, steps_used}
    std::string result_json() const;
};

/// Best-first search over candidates, adding one context per update. Throws NoContexts
/// when `contexts` is empty; evaluator failures propagate and update failures skip
/// the candidate.
OptimizationResult optimize(std::string_view diff_text, std::string_view human_message,
                            const std::vector<ContextItem>& contexts, eval::CandidateEvaluator& evaluator,
                            Updater& updater, const OptimizerConfig& config = {});

struct NoSearchResult {
    MessageCandidate initial;
    MessageCandidate message;
    std::string result_json() const;
};

/// One update with every context in the prompt, then one evaluation.
NoSearchResult optimize_no_search(std::string_view diff_text, std::string_view human_message,
                                  const std::vector<ContextItem>& contexts, eval::CandidateEvaluator& evaluator,
                                  Updater& updater, const OptimizerConfig& config = {});

/// Serves the messages and scores recorded in a trace so a run can be repeated offline.
class TraceReplay final : public Updater, public eval::CandidateEvaluator {
public:
    /// Throws ConfigError on a malformed trace.
    static std::shared_ptr<TraceReplay> parse(std::string_view trace_text);

    std::string update(const MessageCandidate& current, const ContextItem& context, double temperature) override;
    std::string update_all(const MessageCandidate&, const std::vector<ContextItem>&, double) override;
    eval::Evaluation evaluate(std::string_view diff_text, std::string_view message) override;

    const std::string& human_message() const noexcept { return human_message_; }

private:
    std::string human_message_;
    TraceReplay() = default;

    using Key = std::tuple<std::string, ContextKind, double>;
    std::map<Key, std::string> updates_;
    std::map<Key, std::string> failures_;
    std::map<std::string, eval::Evaluation> scores_;
};

}  // namespace cmo::opt
