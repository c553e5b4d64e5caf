#pragma once

#include <stdexcept>
#include <string>

namespace mrfault {

// Invalid physical argument (negative temperature delta, zero resonance order, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Inconsistent or missing configuration. Maps to CLI exit code 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller broke an operation's precondition (length mismatch, unmapped layer).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

enum class FormatErrc {
    bad_magic,
    truncated,
    trailing_data,
    duplicate_name,
    version_mismatch,
    count_mismatch,
    bad_manifest,
    bad_label,
    io,
};

const char* to_string(FormatErrc code);

// Malformed weights archive or IDX file. Each failure mode carries a distinct code.
class FormatError : public std::runtime_error {
public:
    FormatError(FormatErrc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    FormatErrc code() const noexcept { return code_; }

private:
    FormatErrc code_;
};

}  // namespace mrfault
