#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cmo/embed.hpp"
#include "cmo/gateway.hpp"
#include "cmo/prompts.hpp"

namespace cmo::corpus {

struct CommitRecord {
    std::string commit_id;
    std::string repo;
    std::string diff_text;
    std::string message;
};

struct MineOptions {
    /// 0 means every reachable commit.
    std::size_t max_commits_per_repo = 0;
    /// Where URL sources are cloned; a temporary directory when unset.
    std::optional<std::filesystem::path> clone_dir;
};

struct MineReport {
    std::vector<CommitRecord> records;
    /// One line per repository that could not be read.
    std::vector<std::string> errors;
    std::size_t merges = 0;
    std::size_t empty_messages = 0;
    /// Binary-only or empty diffs.
    std::size_t non_textual = 0;
    std::size_t unparseable = 0;
    std::size_t duplicates = 0;
};

/// Non-merge commits with a message and a textual diff, deduplicated by commit id.
/// Sources are local paths or clone URLs; an unreadable source is reported and skipped.
MineReport mine_commits(const std::vector<std::string>& sources, const MineOptions& options = {});

class GoodMessageFilter {
public:
    virtual ~GoodMessageFilter() = default;
    virtual std::string name() const = 0;
    /// Throws GatewayError for classifier failures.
    virtual bool accept(const CommitRecord& record) = 0;
};

class AcceptAllFilter final : public GoodMessageFilter {
public:
    std::string name() const override { return "accept-all"; }
    bool accept(const CommitRecord&) override { return true; }
};

class PredicateFilter final : public GoodMessageFilter {
public:
    PredicateFilter(std::string name, std::function<bool(const CommitRecord&)> pred)
        : name_(std::move(name)), pred_(std::move(pred)) {}
    std::string name() const override { return name_; }
    bool accept(const CommitRecord& record) override { return pred_(record); }

private:
    std::string name_;
    std::function<bool(const CommitRecord&)> pred_;
};

/// Asks the chat model whether a message states both what changed and why.
class LlmGoodFilter final : public GoodMessageFilter {
public:
    LlmGoodFilter(llm::Gateway& gateway, llm::PromptSettings settings);
    std::string name() const override { return "llm"; }
    bool accept(const CommitRecord& record) override;

private:
    llm::Gateway& gateway_;
    llm::PromptSettings settings_;
};

struct FilterReport {
    std::vector<CommitRecord> kept;
    std::size_t rejected = 0;
    std::size_t failed = 0;
};

FilterReport filter_good(std::vector<CommitRecord> records, GoodMessageFilter& filter);

struct CorpusEntry {
    std::string commit_id;
    std::string repo;
    std::string diff_text;
    std::string message_text;
    std::vector<double> diff_embedding;
    std::vector<double> message_embedding;
};

struct IndexMetadata {
    std::string diff_model_id;
    std::string message_model_id;
    int diff_dim = 0;
    int message_dim = 0;
    std::string built_at;
    std::vector<std::string> sources;
    std::string filter;
};

struct Neighbor {
    const CorpusEntry* entry = nullptr;
    double similarity = 0.0;
};

class CorpusIndex {
public:
    CorpusIndex() = default;
    CorpusIndex(IndexMetadata metadata, std::vector<CorpusEntry> entries);

    const IndexMetadata& metadata() const noexcept { return metadata_; }
    const std::vector<CorpusEntry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    /// Top min(k, size) entries by cosine similarity to `diff_embedding`, descending,
    /// ties broken by ascending commit id. Throws EmptyIndex, PreconditionError.
    std::vector<Neighbor> retrieve_similar(const std::vector<double>& diff_embedding, std::size_t k) const;

    /// Layout is described in docs/index-format.md.
    void save(const std::filesystem::path& path) const;
    static CorpusIndex load(const std::filesystem::path& path);

private:
    IndexMetadata metadata_;
    std::vector<CorpusEntry> entries_;
};

struct BuildOptions {
    /// Recorded as built_at; current UTC time when unset.
    std::optional<std::string> timestamp;
    std::vector<std::string> sources;
    std::string filter;
};

/// Embeds every record's diff and message. Throws BuildError when `records` is empty and
/// lets EmbedServiceError abort the build.
CorpusIndex build_index(const std::vector<CommitRecord>& records, embed::Embedder& embedder,
                        const BuildOptions& options = {});

}  // namespace cmo::corpus
