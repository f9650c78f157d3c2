#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

namespace cmo::llm {

struct ChatRequest {
    std::string system;
    std::string user;
    double temperature = 0.0;
    int max_output_tokens = 1024;
    std::string model;
    /// Which prompt family produced the request ("score", "update", ...).
    std::string template_id;
    /// Slot values the prompt was rendered from; lets offline responders act on content.
    std::map<std::string, std::string> slots;

    /// sha256 over system and user text; temperature is keyed separately.
    std::string prompt_hash() const;
};

/// Throws PreconditionError unless temperature ∈ [0, 2] and max_output_tokens > 0.
void validate(const ChatRequest& request);

class ChatClient {
public:
    virtual ~ChatClient() = default;
    /// One attempt; throws GatewayError.
    virtual std::string complete(const ChatRequest& request) = 0;
};

struct HttpChatConfig {
    /// Base URL of an OpenAI-compatible API, e.g. "https://api.example.com/v1".
    std::string endpoint;
    std::string api_key_env = "CHAT_API_KEY";
    double timeout_seconds = 60.0;
};

/// POSTs {model, messages, temperature, max_tokens} to <endpoint>/chat/completions.
class HttpChatClient final : public ChatClient {
public:
    explicit HttpChatClient(HttpChatConfig config);
    std::string complete(const ChatRequest& request) override;

private:
    HttpChatConfig config_;
    std::string api_key_;
};

/// Offline responses: "<fixtures>/<prompt_hash>_t<temperature %.2f>.txt" wins,
/// otherwise the responder (if any) answers.
class MockChatClient final : public ChatClient {
public:
    using Responder = std::function<std::string(const ChatRequest&)>;

    MockChatClient(std::optional<std::filesystem::path> fixtures, Responder responder);
    std::string complete(const ChatRequest& request) override;

    static std::string fixture_name(const ChatRequest& request);

private:
    std::optional<std::filesystem::path> fixtures_;
    Responder responder_;
};

/// Deterministic content-based answers for every prompt family, used as the default mock.
std::string heuristic_response(const ChatRequest& request);

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{500};
    double backoff_factor = 2.0;
};

struct JournalEntry {
    std::string prompt_hash;
    std::string template_id;
    double temperature = 0.0;
    double latency_ms = 0.0;
    int attempts = 0;
    bool ok = false;
};

/// Shared front door to a chat client: retries, a concurrency cap, and a call journal.
class Gateway {
public:
    Gateway(std::shared_ptr<ChatClient> client, int max_concurrency = 4, RetryPolicy retry = {});

    /// Retries timeouts and rate limits only; other failures propagate at once.
    std::string chat(const ChatRequest& request);

    std::vector<JournalEntry> journal() const;
    std::size_t calls(const std::string& template_id) const;
    std::size_t total_calls() const;
    /// Receives every journal entry as it is recorded.
    void set_sink(std::function<void(const JournalEntry&)> sink);

private:
    void record(JournalEntry entry);

    std::shared_ptr<ChatClient> client_;
    RetryPolicy retry_;
    std::counting_semaphore<> slots_;
    mutable std::mutex mu_;
    std::vector<JournalEntry> journal_;
    std::map<std::string, std::size_t> counts_;
    std::function<void(const JournalEntry&)> sink_;
};

}  // namespace cmo::llm
