#pragma once

#include <map>
#include <memory>
#include <string>

#include "cmo/errors.hpp"

namespace cmo::http {

/// The request never produced an HTTP status (refused, reset, timed out).
class TransportError : public Error {
public:
    TransportError(bool timed_out, const std::string& what) : Error(what), timed_out_(timed_out) {}
    bool timed_out() const noexcept { return timed_out_; }

private:
    bool timed_out_;
};

struct Response {
    int status = 0;
    std::string body;
    std::map<std::string, std::string> headers;
};

using Headers = std::map<std::string, std::string>;

/// Blocking JSON-over-HTTP client bound to one origin ("http://host:port" or "https://...").
/// Paths given to requests are appended to any path prefix of the base URL.
class Client {
public:
    Client(const std::string& base_url, double timeout_seconds);
    ~Client();
    Client(Client&&) noexcept;
    Client& operator=(Client&&) noexcept;

    Response get(const std::string& path, const Headers& headers = {});
    Response post_json(const std::string& path, const std::string& body, const Headers& headers = {});

    const std::string& base_url() const noexcept { return base_url_; }

private:
    struct Impl;
    std::string base_url_;
    std::unique_ptr<Impl> impl_;
};

}  // namespace cmo::http
