#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cmo/grammar.hpp"
#include "cmo/repo.hpp"

namespace cmo::code {

/// Pre- and post-change views of a project's files.
class SourceTree {
public:
    virtual ~SourceTree() = default;
    virtual std::optional<std::string> read_post(const std::string& path) const = 0;
    virtual std::optional<std::string> read_pre(const std::string& path) const = 0;
    virtual std::vector<std::string> list_post_files() const = 0;
    /// Short provenance label, e.g. "worktree:/src/app" or "commit:1a2b3c".
    virtual std::string describe() const = 0;
};

/// A checked-out working directory; only the post-change side is available.
class DirectoryTree final : public SourceTree {
public:
    explicit DirectoryTree(std::filesystem::path root);
    std::optional<std::string> read_post(const std::string& path) const override;
    std::optional<std::string> read_pre(const std::string&) const override { return std::nullopt; }
    std::vector<std::string> list_post_files() const override;
    std::string describe() const override { return "worktree:" + root_.string(); }

private:
    std::filesystem::path root_;
};

/// A commit in a git repository; the pre side is its first parent.
class GitRevisionTree final : public SourceTree {
public:
    GitRevisionTree(repo::GitRepo repo, std::string commit);
    std::optional<std::string> read_post(const std::string& path) const override;
    std::optional<std::string> read_pre(const std::string& path) const override;
    std::vector<std::string> list_post_files() const override;
    std::string describe() const override { return "commit:" + commit_; }

private:
    repo::GitRepo repo_;
    std::string commit_;
    std::optional<std::string> parent_;
};

class MemoryTree final : public SourceTree {
public:
    std::map<std::string, std::string> post;
    std::map<std::string, std::string> pre;

    std::optional<std::string> read_post(const std::string& path) const override;
    std::optional<std::string> read_pre(const std::string& path) const override;
    std::vector<std::string> list_post_files() const override;
    std::string describe() const override { return "memory"; }
};

struct FileFailure {
    std::string path;
    std::string message;
};

/// Lazily parses files of a source tree with one grammar and caches the models.
class ProjectIndex {
public:
    ProjectIndex(std::shared_ptr<const SourceTree> tree, std::shared_ptr<const Grammar> grammar);

    const SourceTree& tree() const noexcept { return *tree_; }
    const Grammar& grammar() const noexcept { return *grammar_; }

    /// nullptr when the file is absent or not handled by the grammar; throws UnparseableFile.
    const SyntaxModel* post(const std::string& path);
    const SyntaxModel* pre(const std::string& path);

    /// Every parseable post-change file handled by the grammar; failures are recorded.
    std::vector<const SyntaxModel*> all_post();
    const std::vector<FileFailure>& failures() const noexcept { return failures_; }

private:
    const SyntaxModel* load(std::map<std::string, std::optional<SyntaxModel>>& cache, const std::string& path,
                            bool post_side);

    std::shared_ptr<const SourceTree> tree_;
    std::shared_ptr<const Grammar> grammar_;
    std::map<std::string, std::optional<SyntaxModel>> post_;
    std::map<std::string, std::optional<SyntaxModel>> pre_;
    std::map<std::string, std::string> parse_errors_;
    std::vector<FileFailure> failures_;
    bool all_loaded_ = false;
    std::recursive_mutex mu_;
};

}  // namespace cmo::code
