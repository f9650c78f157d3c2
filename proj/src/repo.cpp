#include "cmo/repo.hpp"

#include <sstream>

#include "cmo/errors.hpp"
#include "cmo/util.hpp"

namespace cmo::repo {

namespace {

const char* const kEmptyTree = "4b825dc642cb6eb9a060e54bf8d69288fbee4904";

std::vector<std::string> git_argv(const std::filesystem::path& repo, const std::vector<std::string>& args) {
    std::vector<std::string> argv = {"git", "-C", repo.string(), "-c", "core.quotepath=off"};
    argv.insert(argv.end(), args.begin(), args.end());
    return argv;
}

}  // namespace

GitRepo::GitRepo(std::filesystem::path path) : path_(std::move(path)) {
    if (!std::filesystem::is_directory(path_)) throw RepoUnavailable("not a directory: " + path_.string());
    auto r = run_process(git_argv(path_, {"rev-parse", "--is-inside-work-tree"}));
    if (r.exit_code != 0) throw RepoUnavailable("not a git repository: " + path_.string());
}

std::string GitRepo::run(const std::vector<std::string>& args) const {
    auto r = run_process(git_argv(path_, args));
    if (r.exit_code != 0) {
        std::string cmd;
        for (const auto& a : args) cmd += " " + a;
        throw RepoUnavailable("git" + cmd + " failed in " + path_.string() + ": " + trim(r.err));
    }
    return std::move(r.out);
}

bool GitRepo::has_head() const {
    return run_process(git_argv(path_, {"rev-parse", "--verify", "--quiet", "HEAD"})).exit_code == 0;
}

std::string GitRepo::resolve(const std::string& rev) const {
    return trim(run({"rev-parse", "--verify", rev + "^{commit}"}));
}

std::string GitRepo::message(const std::string& rev) const {
    std::string msg = run({"log", "-1", "--format=%B", rev});
    while (!msg.empty() && (msg.back() == '\n' || msg.back() == '\r')) msg.pop_back();
    return msg;
}

std::vector<std::string> GitRepo::parents(const std::string& rev) const {
    std::istringstream in(run({"log", "-1", "--format=%P", rev}));
    std::vector<std::string> out;
    for (std::string p; in >> p;) out.push_back(p);
    return out;
}

std::string GitRepo::diff(const std::string& rev) const {
    auto ps = parents(rev);
    const std::string base = ps.empty() ? kEmptyTree : ps.front();
    return run({"diff", "--no-color", "--no-ext-diff", "-M", base, rev});
}

std::vector<std::string> GitRepo::commits(std::size_t limit) const {
    if (!has_head()) return {};
    std::vector<std::string> args = {"rev-list", "HEAD"};
    if (limit > 0) args.push_back("--max-count=" + std::to_string(limit));
    std::istringstream in(run(args));
    std::vector<std::string> out;
    for (std::string id; in >> id;) out.push_back(id);
    return out;
}

std::optional<std::string> GitRepo::file_at(const std::string& rev, const std::string& file) const {
    auto r = run_process(git_argv(path_, {"show", rev + ":" + file}));
    if (r.exit_code != 0) return std::nullopt;
    return std::move(r.out);
}

std::vector<std::string> GitRepo::files_at(const std::string& rev) const {
    return split_lines(run({"ls-tree", "-r", "--name-only", rev}));
}

bool looks_like_url(const std::string& spec) {
    return spec.find("://") != std::string::npos || spec.rfind("git@", 0) == 0;
}

std::filesystem::path clone(const std::string& url, const std::filesystem::path& dest) {
    auto r = run_process({"git", "clone", "--quiet", url, dest.string()});
    if (r.exit_code != 0) throw RepoUnavailable("cannot clone " + url + ": " + trim(r.err));
    return dest;
}

}  // namespace cmo::repo
