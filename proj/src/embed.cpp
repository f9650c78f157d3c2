#include "cmo/embed.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>

#include "cmo/errors.hpp"
#include "cmo/http.hpp"

namespace cmo::embed {

using nlohmann::json;

std::string_view to_string(EmbedKind kind) { return kind == EmbedKind::code_diff ? "code_diff" : "text"; }

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw PreconditionError("vector dimensions differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const std::vector<double>& v) { return std::sqrt(dot(v, v)); }

std::vector<double> normalized(std::vector<double> v) {
    const double n = norm(v);
    if (n == 0.0) throw PreconditionError("cannot normalize a zero vector");
    for (double& x : v) x /= n;
    return v;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    const double na = norm(a), nb = norm(b);
    if (na == 0.0 || nb == 0.0) throw PreconditionError("cosine of a zero vector");
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

// ---- hash embedder ---------------------------------------------------------

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
    std::uint64_t h = 1469598103934665603ULL ^ seed;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::vector<std::string> hash_tokens(std::string_view body) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : body) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

}  // namespace

HashEmbedder::HashEmbedder(int dim, std::size_t max_body_bytes) : dim_(dim), max_body_bytes_(max_body_bytes) {
    if (dim_ < 8) throw ConfigError("hash embedder dimension must be at least 8");
}

std::string HashEmbedder::model_id(EmbedKind kind) const {
    return fmt::format("hash-bow-{}-{}", to_string(kind), dim_);
}

Embedding HashEmbedder::embed(EmbedKind kind, std::string_view body) {
    if (body.empty()) throw EmbedServiceError("embed request has an empty body");
    Embedding e;
    e.truncated = body.size() > max_body_bytes_;
    if (e.truncated) body = body.substr(0, max_body_bytes_);
    // Separate hash seeds per kind.
    const std::uint64_t seed = kind == EmbedKind::code_diff ? 0x9e3779b97f4a7c15ULL : 0x2545f4914f6cdd1dULL;
    std::vector<double> v(static_cast<std::size_t>(dim_), 0.0);
    const auto toks = hash_tokens(body);
    auto add = [&](std::string_view feature, double weight) {
        const std::uint64_t h = fnv1a(feature, seed);
        const double sign = (h >> 63) ? -1.0 : 1.0;
        v[h % static_cast<std::uint64_t>(dim_)] += sign * weight;
    };
    for (std::size_t i = 0; i < toks.size(); ++i) {
        add(toks[i], 1.0);
        if (i + 1 < toks.size()) add(toks[i] + "\x1f" + toks[i + 1], 0.5);
    }
    if (norm(v) == 0.0) add(std::string(body), 1.0);
    if (norm(v) == 0.0) v[0] = 1.0;
    e.vector = normalized(std::move(v));
    e.dim = dim_;
    e.model_id = model_id(kind);
    return e;
}

// ---- HTTP client -----------------------------------------------------------

HttpEmbedClient::HttpEmbedClient(std::string base_url, double timeout_seconds)
    : base_url_(std::move(base_url)), timeout_seconds_(timeout_seconds) {
    if (base_url_.empty()) throw ConfigError("embed service URL is not configured");
}

Embedding HttpEmbedClient::embed(EmbedKind kind, std::string_view body) {
    if (body.empty()) throw EmbedServiceError("embed request has an empty body");
    http::Response res;
    try {
        http::Client client(base_url_, timeout_seconds_);
        res = client.post_json("/embed", json{{"kind", to_string(kind)}, {"body", std::string(body)}}.dump());
    } catch (const http::TransportError& e) {
        throw EmbedServiceError(std::string("embed service unreachable: ") + e.what());
    }
    if (res.status != 200) throw EmbedServiceError(fmt::format("embed service returned HTTP {}", res.status));
    try {
        const json j = json::parse(res.body);
        Embedding e;
        e.vector = j.at("vector").get<std::vector<double>>();
        e.dim = j.at("dim").get<int>();
        e.model_id = j.at("model_id").get<std::string>();
        e.truncated = j.value("truncated", false);
        if (static_cast<int>(e.vector.size()) != e.dim)
            throw EmbedServiceError(fmt::format("embed response dim {} but vector has {} values", e.dim, e.vector.size()));
        e.vector = normalized(std::move(e.vector));
        return e;
    } catch (const json::exception& ex) {
        throw EmbedServiceError(std::string("malformed embed response: ") + ex.what());
    } catch (const PreconditionError&) {
        throw EmbedServiceError("embed service returned a zero vector");
    }
}

ServiceHealth HttpEmbedClient::health() const {
    http::Response res;
    try {
        http::Client client(base_url_, timeout_seconds_);
        res = client.get("/health");
    } catch (const http::TransportError& e) {
        throw EmbedServiceError(std::string("embed service unreachable: ") + e.what());
    }
    if (res.status != 200) throw EmbedServiceError(fmt::format("embed health returned HTTP {}", res.status));
    try {
        const json j = json::parse(res.body);
        ServiceHealth h;
        h.status = j.at("status").get<std::string>();
        if (j.contains("models")) h.models = j["models"].get<std::map<std::string, std::string>>();
        if (j.contains("dims")) h.dims = j["dims"].get<std::map<std::string, int>>();
        return h;
    } catch (const json::exception& ex) {
        throw EmbedServiceError(std::string("malformed health response: ") + ex.what());
    }
}

std::string HttpEmbedClient::model_id(EmbedKind kind) const {
    const auto h = health();
    auto it = h.models.find(std::string(to_string(kind)));
    if (it == h.models.end()) throw EmbedServiceError("embed service reports no model for " + std::string(to_string(kind)));
    return it->second;
}

}  // namespace cmo::embed
