#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cmo/gateway.hpp"
#include "cmo/types.hpp"

namespace cmo::llm {

/// Text with `{{slot}}` placeholders.
class PromptTemplate {
public:
    PromptTemplate(std::string id, std::string text);

    const std::string& id() const noexcept { return id_; }
    /// Distinct slot names in order of first appearance.
    std::vector<std::string> slots() const;
    /// Throws SlotMissing for the first placeholder without a value.
    std::string render(const std::map<std::string, std::string>& values) const;

private:
    std::string id_;
    std::string text_;
};

struct PromptSettings {
    std::string model;
    double temperature = 0.0;
    int max_output_tokens = 1024;
};

std::string_view rubric(Metric metric);

struct Exemplar {
    std::string diff_text;
    std::string message;
};

struct UpdateInputs {
    std::string diff_text;
    std::string previous_message;
    ContextItem new_context;
    ContextKindSet considered;
    MetricScores scores;
    CommitType commit_type;
    std::vector<Exemplar> similar;
};

/// Throws PreconditionError when the new context was already considered.
ChatRequest build_update_prompt(const UpdateInputs& in, const PromptSettings& settings);

struct UpdateAllInputs {
    std::string diff_text;
    std::string previous_message;
    std::vector<ContextItem> contexts;
    MetricScores scores;
    CommitType commit_type;
    std::vector<Exemplar> similar;
};

/// Every context in one prompt, in kind order.
ChatRequest build_update_all_prompt(const UpdateAllInputs& in, const PromptSettings& settings);

/// Throws PreconditionError on an empty message.
ChatRequest build_score_prompt(std::string_view diff_text, std::string_view message, Metric metric,
                               const PromptSettings& settings);
/// The follow-up sent once when a score reply cannot be parsed.
ChatRequest build_score_reprompt(const ChatRequest& original, std::string_view bad_reply);

ChatRequest build_classify_prompt(std::string_view diff_text, std::string_view message,
                                  const std::vector<std::string>& taxonomy, const PromptSettings& settings);

enum class SummaryTarget { method, class_body };
ChatRequest build_summary_prompt(std::string_view body, SummaryTarget target, std::size_t token_budget,
                                 const PromptSettings& settings);

ChatRequest build_filter_prompt(std::string_view message, const PromptSettings& settings);

/// First standalone integer in [0, 4]; decimals and larger numbers are skipped.
std::optional<int> parse_score(std::string_view reply);

/// Strips code fences and surrounding blank lines from a generated commit message.
std::string clean_message(std::string_view reply);

}  // namespace cmo::llm
