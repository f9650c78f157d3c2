#include "cmo/prompts.hpp"

#include <fmt/format.h>

#include <cctype>

#include "cmo/errors.hpp"
#include "cmo/util.hpp"

namespace cmo::llm {

PromptTemplate::PromptTemplate(std::string id, std::string text) : id_(std::move(id)), text_(std::move(text)) {}

std::vector<std::string> PromptTemplate::slots() const {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while ((pos = text_.find("{{", pos)) != std::string::npos) {
        const auto end = text_.find("}}", pos + 2);
        if (end == std::string::npos) break;
        std::string name = text_.substr(pos + 2, end - pos - 2);
        if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(std::move(name));
        pos = end + 2;
    }
    return out;
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
    std::string out;
    out.reserve(text_.size());
    std::size_t pos = 0;
    while (true) {
        const auto open = text_.find("{{", pos);
        if (open == std::string::npos) break;
        const auto close = text_.find("}}", open + 2);
        if (close == std::string::npos) break;
        const std::string name = text_.substr(open + 2, close - open - 2);
        const auto it = values.find(name);
        if (it == values.end()) throw SlotMissing(name);
        out.append(text_, pos, open - pos);
        out += it->second;
        pos = close + 2;
    }
    out.append(text_, pos, std::string::npos);
    return out;
}

namespace {

constexpr std::size_t kExemplarDiffBytes = 4000;

constexpr const char* kDiffDefinition =
    "A git diff lists a code change in unified format. Each file section starts with a header naming "
    "the old and new path. Each hunk starts with \"@@ -a,b +c,d @@\" giving the line ranges before and "
    "after the change; lines starting with '-' were removed, lines starting with '+' were added, and "
    "lines starting with a space are unchanged context.";

constexpr const char* kExpectedFormat =
    "<type>(<optional scope>): <one-line summary of what changed>\n"
    "\n"
    "<body: why the change was needed and what it affects, wrapped at 72 columns>";

const PromptTemplate kUpdate{
    "update",
    "{{diff_definition}}\n"
    "\n"
    "### Git diff\n"
    "{{diff}}\n"
    "\n"
    "### Expected commit message format\n"
    "{{format}}\n"
    "\n"
    "The commit type of this change is: {{commit_type}}\n"
    "\n"
    "### Quality metrics (each scored from 0 to 4)\n"
    "{{rubrics}}\n"
    "\n"
    "### Similar changes and their commit messages\n"
    "{{exemplars}}\n"
    "\n"
    "### Current commit message\n"
    "{{previous_message}}\n"
    "\n"
    "### Contexts already considered\n"
    "{{considered}}\n"
    "\n"
    "### Current scores\n"
    "{{scores}}\n"
    "\n"
    "### New context: {{context_name}}\n"
    "{{context_payload}}\n"
    "\n"
    "### Task\n"
    "Revise the current commit message using the new context where it is relevant. Edit the existing "
    "message instead of writing a new one from scratch, keep what already works, and aim for higher "
    "scores than the current ones. Reply with the revised commit message only.\n"};

const PromptTemplate kUpdateAll{
    "update_all",
    "{{diff_definition}}\n"
    "\n"
    "### Git diff\n"
    "{{diff}}\n"
    "\n"
    "### Expected commit message format\n"
    "{{format}}\n"
    "\n"
    "The commit type of this change is: {{commit_type}}\n"
    "\n"
    "### Quality metrics (each scored from 0 to 4)\n"
    "{{rubrics}}\n"
    "\n"
    "### Similar changes and their commit messages\n"
    "{{exemplars}}\n"
    "\n"
    "### Current commit message\n"
    "{{previous_message}}\n"
    "\n"
    "### Current scores\n"
    "{{scores}}\n"
    "\n"
    "### Contexts\n"
    "{{contexts}}\n"
    "\n"
    "### Task\n"
    "Revise the current commit message using the contexts above where they are relevant. Edit the "
    "existing message instead of writing a new one from scratch, keep what already works, and aim for "
    "higher scores than the current ones. Reply with the revised commit message only.\n"};

const PromptTemplate kScore{
    "score",
    "{{diff_definition}}\n"
    "\n"
    "### Git diff\n"
    "{{diff}}\n"
    "\n"
    "### Commit message\n"
    "{{message}}\n"
    "\n"
    "### Metric: {{metric_name}}\n"
    "{{rubric}}\n"
    "\n"
    "Rate the commit message on this metric only. Reply with a single integer from 0 to 4.\n"};

const PromptTemplate kClassify{
    "classify",
    "{{diff_definition}}\n"
    "\n"
    "### Git diff\n"
    "{{diff}}\n"
    "\n"
    "### Commit message written by the developer\n"
    "{{message}}\n"
    "\n"
    "### Allowed commit types\n"
    "{{taxonomy}}\n"
    "\n"
    "Which commit type describes this change? Reply with exactly one type from the list.\n"};

const PromptTemplate kSummary{
    "summarize",
    "Summarize what the following {{target}} does in one paragraph of at most {{budget}} tokens. "
    "Describe its purpose and observable behaviour, not its syntax.\n"
    "\n"
    "```\n"
    "{{body}}\n"
    "```\n"};

const PromptTemplate kFilter{
    "filter_good",
    "Does the commit message below state both what was changed and why it was changed? "
    "Reply with yes or no.\n"
    "\n"
    "### Commit message\n"
    "{{message}}\n"};

constexpr const char* kUpdateSystem =
    "You revise git commit messages. Reply with the commit message text only, without commentary or "
    "code fences.";
constexpr const char* kScoreSystem = "You rate git commit messages. Reply with one integer from 0 to 4.";
constexpr const char* kClassifySystem = "You classify git commits by type. Reply with the type only.";
constexpr const char* kSummarySystem = "You summarize source code for commit message writers.";
constexpr const char* kFilterSystem = "You judge git commit messages. Reply with yes or no.";

std::string display_metric(Metric m) {
    std::string s(to_string(m));
    s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

std::string all_rubrics() {
    std::string out;
    for (Metric m : kMetrics) {
        if (!out.empty()) out += "\n";
        out += "- " + display_metric(m) + ": " + std::string(rubric(m));
    }
    return out;
}

std::string format_scores(const MetricScores& s) {
    std::string out;
    double total = 0.0;
    for (Metric m : kMetrics) {
        out += fmt::format("- {}: {:.2f}\n", display_metric(m), s[m]);
        total += s[m];
    }
    out += fmt::format("- Total: {:.2f} of 16", total);
    return out;
}

std::string format_exemplars(const std::vector<Exemplar>& ex) {
    if (ex.empty()) return "(none available)";
    std::string out;
    for (std::size_t i = 0; i < ex.size(); ++i) {
        std::string d = ex[i].diff_text;
        if (d.size() > kExemplarDiffBytes) d = d.substr(0, kExemplarDiffBytes) + "\n[diff truncated]";
        while (!d.empty() && d.back() == '\n') d.pop_back();
        if (i) out += "\n\n";
        out += fmt::format("#### Example {}\nDiff:\n{}\nCommit message:\n{}", i + 1, d, trim(ex[i].message));
    }
    return out;
}

std::string format_considered(const ContextKindSet& considered) {
    if (considered.empty()) return "(none)";
    std::string out;
    for (ContextKind k : considered.kinds()) {
        if (!out.empty()) out += "\n";
        out += "- " + std::string(display_name(k));
    }
    return out;
}

std::string strip_trailing_newlines(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
}

ChatRequest make_request(const PromptTemplate& tpl, const char* system, std::map<std::string, std::string> slots,
                         const PromptSettings& settings) {
    ChatRequest r;
    r.system = system;
    r.user = tpl.render(slots);
    r.temperature = settings.temperature;
    r.max_output_tokens = settings.max_output_tokens;
    r.model = settings.model;
    r.template_id = tpl.id();
    slots.erase("diff_definition");
    slots.erase("format");
    slots.erase("rubrics");
    r.slots = std::move(slots);
    return r;
}

}  // namespace

std::string_view rubric(Metric metric) {
    switch (metric) {
        case Metric::rationality:
            return "Does the message explain why the change was made (\"Why\" information: the motivation, the "
                   "problem being solved, or the reasoning behind the approach) and does it state the commit "
                   "type? 0 = no reason and no type given; 4 = a specific, convincing reason plus the commit type.";
        case Metric::comprehensiveness:
            return "Does the message summarize what was changed (\"What\" information) and account for every "
                   "changed file? 0 = no summary of the change; 4 = an accurate summary covering all changed files.";
        case Metric::conciseness:
            return "Is the message succinct, free of redundancy and padding, with good readability so a "
                   "reader grasps it quickly? 0 = rambling or repetitive; 4 = every sentence carries information.";
        case Metric::expressiveness:
            return "Is the message grammatically correct and fluent? 0 = hard to read or ungrammatical; "
                   "4 = fluent, well-formed sentences.";
    }
    return "";
}

ChatRequest build_update_prompt(const UpdateInputs& in, const PromptSettings& settings) {
    if (in.considered.contains(in.new_context.kind))
        throw PreconditionError("context already considered: " + std::string(to_string(in.new_context.kind)));
    if (in.considered.size() >= kContextKindCount) throw PreconditionError("every context kind already considered");
    std::map<std::string, std::string> slots{
        {"diff_definition", kDiffDefinition},
        {"diff", strip_trailing_newlines(in.diff_text)},
        {"format", kExpectedFormat},
        {"commit_type", in.commit_type.label},
        {"rubrics", all_rubrics()},
        {"exemplars", format_exemplars(in.similar)},
        {"previous_message", trim(in.previous_message)},
        {"considered", format_considered(in.considered)},
        {"scores", format_scores(in.scores)},
        {"context_name", std::string(display_name(in.new_context.kind))},
        {"context_kind", std::string(to_string(in.new_context.kind))},
        {"context_payload", strip_trailing_newlines(in.new_context.payload)},
    };
    return make_request(kUpdate, kUpdateSystem, std::move(slots), settings);
}

ChatRequest build_update_all_prompt(const UpdateAllInputs& in, const PromptSettings& settings) {
    std::string contexts;
    for (ContextKind k : kContextKinds)
        for (const auto& c : in.contexts)
            if (c.kind == k) {
                if (!contexts.empty()) contexts += "\n\n";
                contexts += "#### " + std::string(display_name(k)) + "\n" + strip_trailing_newlines(c.payload);
            }
    std::map<std::string, std::string> slots{
        {"diff_definition", kDiffDefinition},
        {"diff", strip_trailing_newlines(in.diff_text)},
        {"format", kExpectedFormat},
        {"commit_type", in.commit_type.label},
        {"rubrics", all_rubrics()},
        {"exemplars", format_exemplars(in.similar)},
        {"previous_message", trim(in.previous_message)},
        {"scores", format_scores(in.scores)},
        {"contexts", contexts},
    };
    return make_request(kUpdateAll, kUpdateSystem, std::move(slots), settings);
}

ChatRequest build_score_prompt(std::string_view diff_text, std::string_view message, Metric metric,
                               const PromptSettings& settings) {
    if (trim(message).empty()) throw PreconditionError("cannot score an empty commit message");
    std::map<std::string, std::string> slots{
        {"diff_definition", kDiffDefinition},
        {"diff", strip_trailing_newlines(std::string(diff_text))},
        {"message", trim(message)},
        {"metric", std::string(to_string(metric))},
        {"metric_name", display_metric(metric)},
        {"rubric", std::string(rubric(metric))},
    };
    return make_request(kScore, kScoreSystem, std::move(slots), settings);
}

ChatRequest build_score_reprompt(const ChatRequest& original, std::string_view bad_reply) {
    ChatRequest r = original;
    r.user += "\n### Your previous reply\n" + trim(bad_reply) +
              "\n\nThat reply could not be read as a score. Reply with only one integer from 0 to 4.\n";
    r.slots["reprompt"] = "1";
    return r;
}

ChatRequest build_classify_prompt(std::string_view diff_text, std::string_view message,
                                  const std::vector<std::string>& taxonomy, const PromptSettings& settings) {
    if (trim(message).empty()) throw PreconditionError("cannot classify with an empty commit message");
    std::string list;
    for (const auto& t : taxonomy) list += (list.empty() ? "" : ", ") + t;
    std::map<std::string, std::string> slots{
        {"diff_definition", kDiffDefinition},
        {"diff", strip_trailing_newlines(std::string(diff_text))},
        {"message", trim(message)},
        {"taxonomy", list},
    };
    return make_request(kClassify, kClassifySystem, std::move(slots), settings);
}

ChatRequest build_summary_prompt(std::string_view body, SummaryTarget target, std::size_t token_budget,
                                 const PromptSettings& settings) {
    if (trim(body).empty()) throw PreconditionError("cannot summarize an empty body");
    std::map<std::string, std::string> slots{
        {"target", target == SummaryTarget::method ? "method" : "class"},
        {"budget", std::to_string(token_budget)},
        {"body", strip_trailing_newlines(std::string(body))},
    };
    ChatRequest r = make_request(kSummary, kSummarySystem, std::move(slots), settings);
    r.template_id = target == SummaryTarget::method ? "summarize_method" : "summarize_class";
    return r;
}

ChatRequest build_filter_prompt(std::string_view message, const PromptSettings& settings) {
    if (trim(message).empty()) throw PreconditionError("cannot judge an empty commit message");
    return make_request(kFilter, kFilterSystem, {{"message", trim(message)}}, settings);
}

std::optional<int> parse_score(std::string_view reply) {
    const auto is_digit = [](char c) { return c >= '0' && c <= '9'; };
    const auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
    std::size_t i = 0;
    while (i < reply.size()) {
        if (!is_digit(reply[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < reply.size() && is_digit(reply[j])) ++j;
        const bool word_before = i > 0 && is_word(reply[i - 1]);
        const bool word_after = j < reply.size() && is_word(reply[j]);
        const bool decimal_before = i >= 2 && reply[i - 1] == '.' && is_digit(reply[i - 2]);
        const bool decimal_after = j + 1 < reply.size() && reply[j] == '.' && is_digit(reply[j + 1]);
        if (!word_before && !word_after && !decimal_before && !decimal_after && j - i == 1) {
            const int v = reply[i] - '0';
            if (v <= 4) return v;
        }
        i = j;
    }
    return std::nullopt;
}

std::string clean_message(std::string_view reply) {
    std::vector<std::string> lines = split_lines(reply);
    if (!lines.empty() && trim(lines.front()).rfind("```", 0) == 0) lines.erase(lines.begin());
    if (!lines.empty() && trim(lines.back()) == "```") lines.pop_back();
    std::string out;
    for (const auto& l : lines) {
        std::string r = l;
        while (!r.empty() && (r.back() == ' ' || r.back() == '\t')) r.pop_back();
        out += r + "\n";
    }
    return trim(out);
}

}  // namespace cmo::llm
