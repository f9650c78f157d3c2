#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cmo/diff.hpp"
#include "cmo/forge.hpp"
#include "cmo/gateway.hpp"
#include "cmo/prompts.hpp"
#include "cmo/source_tree.hpp"
#include "cmo/types.hpp"

namespace cmo::context {

/// Extractor output plus the files that could not be parsed along the way.
template <typename T>
struct Extraction {
    std::vector<T> items;
    std::vector<code::FileFailure> failures;
};

struct InvokedMethod {
    std::string path;
    std::string owner_type;
    std::string signature;
    diff::LineRange lines;
    std::string body;
};

struct VariableType {
    std::string name;
    std::string type;
    std::vector<std::string> modifiers;
    bool field = false;
    std::string path;
    int declared_line = 0;
};

struct EnclosingBlock {
    diff::ChangedRegion region;
    std::string path;
    /// Statement keyword ("if", "try", ...), "method", or the type kind ("class", ...).
    std::string kind;
    diff::LineRange lines;
    std::string text;
};

/// Project-defined methods called on added lines, resolved by name and arity.
/// Calls into types outside the project are skipped.
Extraction<InvokedMethod> extract_invoked_methods(const diff::CodeDiff& diff, code::ProjectIndex& project);

/// Declarations of the variables referenced on added lines; the innermost visible
/// declaration wins and unresolved names are dropped.
Extraction<VariableType> extract_variable_types(const diff::CodeDiff& diff, code::ProjectIndex& project);

/// Per changed region of a surviving file, the smallest statement, method or type that
/// spans it in the post-change file. Pure deletions are located by the lines around them.
Extraction<EnclosingBlock> extract_enclosing_block(const diff::CodeDiff& diff, code::ProjectIndex& project);

struct FileChurn {
    std::string path;
    int added = 0;
    int removed = 0;
    int churn() const noexcept { return added + removed; }
};

std::vector<FileChurn> file_churn(const diff::CodeDiff& diff);

/// Churn per file with the largest flagged; ties go to the lexicographically first path.
/// Throws PreconditionError for a diff without files.
ContextItem important_file_info(const diff::CodeDiff& diff);

struct SummaryOptions {
    std::size_t summary_token_budget = 120;
    /// Bodies longer than this are cut at a line boundary before prompting.
    std::size_t input_token_budget = 3000;
    llm::PromptSettings settings;
};

/// Body text cut to `token_budget`, whole lines only, with a marker for what was dropped.
std::string fit_to_budget(std::string_view body, std::size_t token_budget);

/// Summaries are requested at temperature 0. Throws PreconditionError on an empty body.
std::string summarize_method_body(llm::Gateway& gateway, std::string_view body, const SummaryOptions& options = {});
std::string summarize_class_body(llm::Gateway& gateway, std::string_view body, const SummaryOptions& options = {});

/// Asks up to three times for a label in `taxonomy`; throws UnparseableResponse after that.
CommitType classify_commit_type(llm::Gateway& gateway, std::string_view diff_text, std::string_view human_message,
                                const std::vector<std::string>& taxonomy = default_commit_taxonomy(),
                                const llm::PromptSettings& settings = {});

struct CollectOptions {
    std::string human_message;
    /// Absent disables the issue/pull-request tool.
    const forge::ForgeClient* forge = nullptr;
    SummaryOptions summaries;
    std::size_t max_methods = 5;
    std::size_t max_classes = 3;
    std::size_t max_invoked = 5;
    /// Tools that are not run at all.
    ContextKindSet disabled;
};

struct Collected {
    std::vector<ContextItem> items;
    std::vector<std::string> warnings;

    const ContextItem* find(ContextKind kind) const;
    ContextKindSet kinds() const;
};

/// At most one item per applicable kind, in kind order. Tool failures become warnings.
/// Throws PreconditionError for an empty diff.
Collected collect_contexts(const diff::CodeDiff& diff, code::ProjectIndex& project, llm::Gateway& gateway,
                           const CollectOptions& options = {});

}  // namespace cmo::context
