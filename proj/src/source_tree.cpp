#include "cmo/source_tree.hpp"

#include <algorithm>

#include "cmo/errors.hpp"
#include "cmo/util.hpp"

namespace cmo::code {

DirectoryTree::DirectoryTree(std::filesystem::path root) : root_(std::move(root)) {
    if (!std::filesystem::is_directory(root_)) throw ConfigError("source tree is not a directory: " + root_.string());
}

std::optional<std::string> DirectoryTree::read_post(const std::string& path) const {
    const auto full = root_ / path;
    if (!std::filesystem::is_regular_file(full)) return std::nullopt;
    return read_file(full);
}

std::vector<std::string> DirectoryTree::list_post_files() const {
    std::vector<std::string> out;
    for (auto it = std::filesystem::recursive_directory_iterator(root_); it != std::filesystem::end(it); ++it) {
        if (it->is_directory() && it->path().filename() == ".git") {
            it.disable_recursion_pending();
            continue;
        }
        if (it->is_regular_file()) out.push_back(std::filesystem::relative(it->path(), root_).generic_string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

GitRevisionTree::GitRevisionTree(repo::GitRepo repo, std::string commit)
    : repo_(std::move(repo)), commit_(std::move(commit)) {
    auto ps = repo_.parents(commit_);
    if (!ps.empty()) parent_ = ps.front();
}

std::optional<std::string> GitRevisionTree::read_post(const std::string& path) const {
    return repo_.file_at(commit_, path);
}

std::optional<std::string> GitRevisionTree::read_pre(const std::string& path) const {
    if (!parent_) return std::nullopt;
    return repo_.file_at(*parent_, path);
}

std::vector<std::string> GitRevisionTree::list_post_files() const {
    return repo_.files_at(commit_);
}

std::optional<std::string> MemoryTree::read_post(const std::string& path) const {
    auto it = post.find(path);
    if (it == post.end()) return std::nullopt;
    return it->second;
}

std::optional<std::string> MemoryTree::read_pre(const std::string& path) const {
    auto it = pre.find(path);
    if (it == pre.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> MemoryTree::list_post_files() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : post) out.push_back(k);
    return out;
}

ProjectIndex::ProjectIndex(std::shared_ptr<const SourceTree> tree, std::shared_ptr<const Grammar> grammar)
    : tree_(std::move(tree)), grammar_(std::move(grammar)) {}

const SyntaxModel* ProjectIndex::load(std::map<std::string, std::optional<SyntaxModel>>& cache,
                                      const std::string& path, bool post_side) {
    std::lock_guard lock(mu_);
    const std::string key = (post_side ? "post:" : "pre:") + path;
    if (auto f = parse_errors_.find(key); f != parse_errors_.end()) throw UnparseableFile(path, f->second);
    if (auto it = cache.find(path); it != cache.end()) {
        return it->second ? &*it->second : nullptr;
    }
    if (!grammar_->handles(path)) {
        cache.emplace(path, std::nullopt);
        return nullptr;
    }
    auto text = post_side ? tree_->read_post(path) : tree_->read_pre(path);
    if (!text) {
        cache.emplace(path, std::nullopt);
        return nullptr;
    }
    try {
        auto [it, _] = cache.emplace(path, grammar_->parse(path, std::move(*text)));
        return &*it->second;
    } catch (const UnparseableFile& e) {
        parse_errors_.emplace(key, e.detail());
        throw;
    }
}

const SyntaxModel* ProjectIndex::post(const std::string& path) { return load(post_, path, true); }

const SyntaxModel* ProjectIndex::pre(const std::string& path) { return load(pre_, path, false); }

std::vector<const SyntaxModel*> ProjectIndex::all_post() {
    std::lock_guard lock(mu_);
    std::vector<const SyntaxModel*> out;
    for (const auto& path : tree_->list_post_files()) {
        if (!grammar_->handles(path)) continue;
        try {
            if (const auto* m = post(path)) out.push_back(m);
        } catch (const UnparseableFile& e) {
            if (!all_loaded_) failures_.push_back({path, e.what()});
        }
    }
    all_loaded_ = true;
    return out;
}

}  // namespace cmo::code
