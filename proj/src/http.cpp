#include "cmo/http.hpp"

#include <httplib.h>

#include <regex>

namespace cmo::http {

struct Client::Impl {
    std::string prefix;
    std::unique_ptr<httplib::Client> cli;
};

namespace {

httplib::Headers to_httplib(const Headers& h) {
    httplib::Headers out;
    for (const auto& [k, v] : h) out.emplace(k, v);
    return out;
}

Response from_result(httplib::Result&& res, const std::string& what) {
    if (!res) {
        const auto err = res.error();
        const bool timed_out = err == httplib::Error::Read || err == httplib::Error::Write ||
                               err == httplib::Error::ConnectionTimeout;
        throw TransportError(timed_out, what + ": " + httplib::to_string(err));
    }
    Response out;
    out.status = res->status;
    out.body = std::move(res->body);
    for (const auto& [k, v] : res->headers) out.headers.emplace(k, v);
    return out;
}

}  // namespace

Client::Client(const std::string& base_url, double timeout_seconds) : base_url_(base_url), impl_(std::make_unique<Impl>()) {
    static const std::regex re(R"(^(https?)://([^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(base_url, m, re)) throw ConfigError("not an http(s) URL: " + base_url);
    std::string prefix = m[3].matched ? m[3].str() : "";
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    impl_->prefix = prefix;
    impl_->cli = std::make_unique<httplib::Client>(m[1].str() + "://" + m[2].str());
    const auto secs = static_cast<time_t>(timeout_seconds);
    const auto usecs = static_cast<time_t>((timeout_seconds - static_cast<double>(secs)) * 1e6);
    impl_->cli->set_connection_timeout(secs, usecs);
    impl_->cli->set_read_timeout(secs, usecs);
    impl_->cli->set_write_timeout(secs, usecs);
}

Client::~Client() = default;
Client::Client(Client&&) noexcept = default;
Client& Client::operator=(Client&&) noexcept = default;

Response Client::get(const std::string& path, const Headers& headers) {
    const std::string full = impl_->prefix + path;
    return from_result(impl_->cli->Get(full, to_httplib(headers)), "GET " + base_url_ + path);
}

Response Client::post_json(const std::string& path, const std::string& body, const Headers& headers) {
    const std::string full = impl_->prefix + path;
    return from_result(impl_->cli->Post(full, to_httplib(headers), body, "application/json"),
                       "POST " + base_url_ + path);
}

}  // namespace cmo::http
