#include "cmo/gateway.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <thread>

#include "cmo/errors.hpp"
#include "cmo/http.hpp"
#include "cmo/util.hpp"

namespace cmo::llm {

using nlohmann::json;

std::string ChatRequest::prompt_hash() const { return sha256_hex(system + "\n\n" + user); }

void validate(const ChatRequest& request) {
    if (!(request.temperature >= 0.0 && request.temperature <= 2.0))
        throw PreconditionError(fmt::format("temperature {} outside [0, 2]", request.temperature));
    if (request.max_output_tokens <= 0) throw PreconditionError("max_output_tokens must be positive");
}

// ---- HTTP client -----------------------------------------------------------

HttpChatClient::HttpChatClient(HttpChatConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw ConfigError("chat endpoint is not configured");
    auto key = env_var(config_.api_key_env.c_str());
    if (!key || key->empty()) throw ConfigError("environment variable " + config_.api_key_env + " is not set");
    api_key_ = *key;
}

std::string HttpChatClient::complete(const ChatRequest& request) {
    json messages = json::array();
    if (!request.system.empty()) messages.push_back({{"role", "system"}, {"content", request.system}});
    messages.push_back({{"role", "user"}, {"content", request.user}});
    const json body{{"model", request.model},
                    {"messages", messages},
                    {"temperature", request.temperature},
                    {"max_tokens", request.max_output_tokens}};

    http::Response res;
    try {
        http::Client client(config_.endpoint, config_.timeout_seconds);
        res = client.post_json("/chat/completions", body.dump(), {{"Authorization", "Bearer " + api_key_}});
    } catch (const http::TransportError& e) {
        throw GatewayError(e.timed_out() ? GatewayError::Kind::timeout : GatewayError::Kind::transport, 0, e.what());
    }
    if (res.status == 429) throw GatewayError(GatewayError::Kind::rate_limit, 429, "chat endpoint rate limited");
    if (res.status == 408) throw GatewayError(GatewayError::Kind::timeout, 408, "chat endpoint timed out");
    if (res.status < 200 || res.status >= 300)
        throw GatewayError(GatewayError::Kind::http_status, res.status,
                           fmt::format("chat endpoint returned HTTP {}", res.status));
    try {
        const json j = json::parse(res.body);
        const auto& content = j.at("choices").at(0).at("message").at("content");
        return content.is_null() ? std::string() : content.get<std::string>();
    } catch (const json::exception& e) {
        throw GatewayError(GatewayError::Kind::http_status, res.status,
                           std::string("unexpected chat response shape: ") + e.what());
    }
}

// ---- mock client -----------------------------------------------------------

MockChatClient::MockChatClient(std::optional<std::filesystem::path> fixtures, Responder responder)
    : fixtures_(std::move(fixtures)), responder_(std::move(responder)) {}

std::string MockChatClient::fixture_name(const ChatRequest& request) {
    return fmt::format("{}_t{:.2f}.txt", request.prompt_hash(), request.temperature);
}

std::string MockChatClient::complete(const ChatRequest& request) {
    if (fixtures_) {
        const auto path = *fixtures_ / fixture_name(request);
        if (std::filesystem::is_regular_file(path)) return read_file(path);
    }
    if (responder_) return responder_(request);
    throw GatewayError(GatewayError::Kind::unconfigured, 0,
                       "no mock fixture " + fixture_name(request) + " for template " + request.template_id);
}

// ---- gateway ---------------------------------------------------------------

Gateway::Gateway(std::shared_ptr<ChatClient> client, int max_concurrency, RetryPolicy retry)
    : client_(std::move(client)), retry_(retry), slots_(std::max(1, max_concurrency)) {
    if (!client_) throw ConfigError("gateway needs a chat client");
    if (retry_.max_attempts < 1) throw ConfigError("retry policy needs at least one attempt");
}

std::string Gateway::chat(const ChatRequest& request) {
    validate(request);
    JournalEntry entry;
    entry.prompt_hash = request.prompt_hash();
    entry.template_id = request.template_id;
    entry.temperature = request.temperature;

    const auto started = std::chrono::steady_clock::now();
    auto backoff = retry_.initial_backoff;
    for (int attempt = 1;; ++attempt) {
        entry.attempts = attempt;
        try {
            slots_.acquire();
            std::string out;
            try {
                out = client_->complete(request);
            } catch (...) {
                slots_.release();
                throw;
            }
            slots_.release();
            entry.ok = true;
            entry.latency_ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
            record(entry);
            return out;
        } catch (const GatewayError& e) {
            if (!e.retryable() || attempt >= retry_.max_attempts) {
                entry.latency_ms =
                    std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
                record(entry);
                throw;
            }
            spdlog::warn("chat attempt {} failed ({}); retrying in {} ms", attempt, e.what(), backoff.count());
            std::this_thread::sleep_for(backoff);
            backoff = std::chrono::milliseconds(
                static_cast<long long>(static_cast<double>(backoff.count()) * retry_.backoff_factor));
        }
    }
}

void Gateway::record(JournalEntry entry) {
    std::function<void(const JournalEntry&)> sink;
    {
        std::lock_guard lock(mu_);
        ++counts_[entry.template_id];
        journal_.push_back(entry);
        sink = sink_;
    }
    if (sink) sink(entry);
}

std::vector<JournalEntry> Gateway::journal() const {
    std::lock_guard lock(mu_);
    return journal_;
}

std::size_t Gateway::calls(const std::string& template_id) const {
    std::lock_guard lock(mu_);
    auto it = counts_.find(template_id);
    return it == counts_.end() ? 0 : it->second;
}

std::size_t Gateway::total_calls() const {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& [k, v] : counts_) n += v;
    return n;
}

void Gateway::set_sink(std::function<void(const JournalEntry&)> sink) {
    std::lock_guard lock(mu_);
    sink_ = std::move(sink);
}

}  // namespace cmo::llm
