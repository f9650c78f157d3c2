#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cmo::repo {

/// Thin wrapper over the `git` command line for one repository.
class GitRepo {
public:
    /// Throws RepoUnavailable if `path` is not inside a git work tree.
    explicit GitRepo(std::filesystem::path path);

    const std::filesystem::path& path() const noexcept { return path_; }

    /// Runs git with `args`; throws RepoUnavailable on a non-zero exit.
    std::string run(const std::vector<std::string>& args) const;

    bool has_head() const;
    std::string resolve(const std::string& rev) const;
    /// Raw commit message body (%B), trailing newlines trimmed.
    std::string message(const std::string& rev) const;
    /// Unified diff of `rev` against its first parent (or the empty tree for root commits).
    std::string diff(const std::string& rev) const;
    std::vector<std::string> parents(const std::string& rev) const;
    /// Newest-first commit ids reachable from HEAD.
    std::vector<std::string> commits(std::size_t limit = 0) const;
    std::optional<std::string> file_at(const std::string& rev, const std::string& file) const;
    std::vector<std::string> files_at(const std::string& rev) const;

private:
    std::filesystem::path path_;
};

bool looks_like_url(const std::string& spec);

/// Clones `url` into `dest` (shallow history is not used: mining needs all commits).
std::filesystem::path clone(const std::string& url, const std::filesystem::path& dest);

}  // namespace cmo::repo
