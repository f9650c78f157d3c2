#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cmo/types.hpp"

namespace cmo::forge {

struct ForgeConfig {
    /// Issue lookups go to GET <base_url>/issues/<id>, answered with {"title": ...}.
    std::string base_url;
    std::string token_env = "FORGE_API_TOKEN";
    double timeout_seconds = 10.0;
    /// Accepted issue-key prefixes such as "HADOOP"; any upper-case key when empty.
    std::vector<std::string> project_keys;
};

struct ArtifactRef {
    /// "123" for #123 and numeric URLs, "PROJ-45" for issue keys.
    std::string id;
    /// The text that matched in the message.
    std::string text;
};

/// References in first-occurrence order, deduplicated by id.
std::vector<ArtifactRef> find_artifact_refs(std::string_view message, const std::vector<std::string>& project_keys = {});

class ForgeClient {
public:
    explicit ForgeClient(ForgeConfig config);

    /// Absent on 404. Throws AuthFailure on 401/403 and ForgeUnreachable otherwise.
    std::optional<std::string> title(const ArtifactRef& ref) const;
    std::string url_for(const ArtifactRef& ref) const;
    const ForgeConfig& config() const noexcept { return config_; }

private:
    ForgeConfig config_;
};

/// The PullRequestIssueTitle item for the references in `message`, or absent when
/// none is found or none resolves.
std::optional<ContextItem> fetch_linked_artifact_titles(std::string_view message, const ForgeClient& client);

}  // namespace cmo::forge
