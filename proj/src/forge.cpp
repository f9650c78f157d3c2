#include "cmo/forge.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <nlohmann/json.hpp>
#include <regex>
#include <set>

#include "cmo/errors.hpp"
#include "cmo/http.hpp"
#include "cmo/util.hpp"

namespace cmo::forge {

namespace {

// Upper-case tokens that look like issue keys but name standards.
const std::set<std::string> kNotProjects = {"UTF", "ISO", "SHA", "RFC", "CVE", "JSR", "JEP", "HTTP", "TLS", "MD", "X"};

}  // namespace

std::vector<ArtifactRef> find_artifact_refs(std::string_view message, const std::vector<std::string>& project_keys) {
    static const std::regex pattern(
        R"((https?://[^\s/]+(?:/[^\s/]+)*?/(?:issues|pull|pulls|merge_requests)/(\d+)))"
        R"(|(https?://[^\s]+/browse/([A-Z][A-Z0-9_]+-\d+)))"
        R"(|(?:^|[^\w&/])(#(\d+))\b)"
        R"(|\b(([A-Z][A-Z0-9_]+)-(\d+))\b)");
    std::vector<ArtifactRef> out;
    std::set<std::string> seen;
    const std::string text(message);
    for (auto it = std::sregex_iterator(text.begin(), text.end(), pattern); it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        ArtifactRef ref;
        if (m[1].matched) {
            ref = {m[2].str(), m[1].str()};
        } else if (m[3].matched) {
            ref = {m[4].str(), m[3].str()};
        } else if (m[5].matched) {
            ref = {m[6].str(), m[5].str()};
        } else {
            const std::string key = m[8].str();
            const bool allowed = project_keys.empty()
                                     ? !kNotProjects.count(key)
                                     : std::find(project_keys.begin(), project_keys.end(), key) != project_keys.end();
            if (!allowed) continue;
            ref = {m[7].str(), m[7].str()};
        }
        if (seen.insert(ref.id).second) out.push_back(std::move(ref));
    }
    return out;
}

ForgeClient::ForgeClient(ForgeConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty()) throw ConfigError("forge base URL is not configured");
}

std::string ForgeClient::url_for(const ArtifactRef& ref) const {
    std::string base = config_.base_url;
    while (!base.empty() && base.back() == '/') base.pop_back();
    return base + "/issues/" + ref.id;
}

std::optional<std::string> ForgeClient::title(const ArtifactRef& ref) const {
    http::Headers headers{{"Accept", "application/json"}};
    if (auto token = env_var(config_.token_env.c_str())) headers["Authorization"] = "Bearer " + *token;
    http::Response res;
    try {
        http::Client client(config_.base_url, config_.timeout_seconds);
        res = client.get("/issues/" + ref.id, headers);
    } catch (const http::TransportError& e) {
        throw ForgeUnreachable(fmt::format("forge unreachable for {}: {}", ref.text, e.what()));
    }
    if (res.status == 404) {
        spdlog::warn("forge has no artifact {} ({})", ref.id, ref.text);
        return std::nullopt;
    }
    if (res.status == 401 || res.status == 403)
        throw AuthFailure(fmt::format("forge rejected credentials (HTTP {}); check {}", res.status, config_.token_env));
    if (res.status != 200) throw ForgeUnreachable(fmt::format("forge returned HTTP {} for {}", res.status, ref.text));
    try {
        const auto j = nlohmann::json::parse(res.body);
        std::string t = trim(j.at("title").get<std::string>());
        if (t.empty()) return std::nullopt;
        return t;
    } catch (const nlohmann::json::exception& e) {
        spdlog::warn("forge reply for {} has no title: {}", ref.id, e.what());
        return std::nullopt;
    }
}

std::optional<ContextItem> fetch_linked_artifact_titles(std::string_view message, const ForgeClient& client) {
    const auto refs = find_artifact_refs(message, client.config().project_keys);
    std::string payload, provenance;
    for (const auto& ref : refs) {
        const auto t = client.title(ref);
        if (!t) continue;
        const std::string label = std::all_of(ref.id.begin(), ref.id.end(), ::isdigit) ? "#" + ref.id : ref.id;
        payload += (payload.empty() ? "" : "\n") + label + ": " + *t;
        provenance += (provenance.empty() ? "" : ", ") + client.url_for(ref);
    }
    if (payload.empty()) return std::nullopt;
    return ContextItem{ContextKind::PullRequestIssueTitle, std::move(payload), std::move(provenance)};
}

}  // namespace cmo::forge
