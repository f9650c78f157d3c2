#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cmo {

/// Base of every error raised by the toolchain.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition (empty input, invalid k, ...).
class PreconditionError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class MalformedDiff : public Error {
public:
    MalformedDiff(std::size_t line, const std::string& what)
        : Error("malformed diff at line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class UnparseableFile : public Error {
public:
    UnparseableFile(std::string path, const std::string& what)
        : Error("cannot parse " + path + ": " + what), path_(std::move(path)), detail_(what) {}

    const std::string& path() const noexcept { return path_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    std::string path_;
    std::string detail_;
};

class GatewayError : public Error {
public:
    enum class Kind { timeout, rate_limit, http_status, transport, unconfigured };

    GatewayError(Kind kind, int status, const std::string& what)
        : Error(what), kind_(kind), status_(status) {}

    Kind kind() const noexcept { return kind_; }
    int status() const noexcept { return status_; }
    bool retryable() const noexcept { return kind_ == Kind::timeout || kind_ == Kind::rate_limit; }

private:
    Kind kind_;
    int status_;
};

class UnparseableResponse : public Error {
public:
    using Error::Error;
};

class SlotMissing : public Error {
public:
    explicit SlotMissing(const std::string& slot)
        : Error("prompt slot not filled: " + slot), slot_(slot) {}

    const std::string& slot() const noexcept { return slot_; }

private:
    std::string slot_;
};

class ForgeUnreachable : public Error {
public:
    using Error::Error;
};

class AuthFailure : public Error {
public:
    using Error::Error;
};

class RepoUnavailable : public Error {
public:
    using Error::Error;
};

class EmbedServiceError : public Error {
public:
    using Error::Error;
};

class BuildError : public Error {
public:
    using Error::Error;
};

class EmptyIndex : public Error {
public:
    EmptyIndex() : Error("corpus index is empty") {}
};

class DegenerateInput : public Error {
public:
    using Error::Error;
};

class NoContexts : public Error {
public:
    NoContexts() : Error("no software contexts available to optimize with") {}
};

class UnknownTool : public Error {
public:
    explicit UnknownTool(const std::string& name) : Error("unknown context tool: " + name) {}
};

class EmptyReference : public Error {
public:
    EmptyReference() : Error("reference text has no tokens") {}
};

}  // namespace cmo
