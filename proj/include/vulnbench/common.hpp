#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vulnbench {

/// Base class for all harness errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Bad user input: malformed config, violated precondition, inconsistent data.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Malformed file content. Carries a location string ("line 12", JSON pointer).
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::string location)
        : Error(location.empty() ? what : what + " (" + location + ")"),
          location_(std::move(location)) {}
    const std::string& location() const { return location_; }

private:
    std::string location_;
};

/// Missing file, unwritable directory, absent credentials.
class EnvironmentError : public Error {
public:
    using Error::Error;
};

/// Provider/transport failure after retries were exhausted.
class GatewayError : public Error {
public:
    using Error::Error;
};

/// Hex-encoded SHA-256 of the input bytes. Stable across platforms; used for
/// cache keys, derived sample ids, and mock transcript lookups.
std::string sha256_hex(std::string_view data);

std::string read_file(const std::filesystem::path& path);
std::optional<std::string> read_file_if_exists(const std::filesystem::path& path);

/// Write via temp file + rename so concurrent readers never see partial content.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split_lines(std::string_view text);
bool starts_with(std::string_view s, std::string_view prefix);

/// Locale-independent fixed-point formatting, used everywhere numbers are
/// written to reports so that re-emission is byte-identical.
std::string format_fixed(double value, int decimals);

/// Round to the given number of decimals (half away from zero).
double round_to(double value, int decimals);

/// Resolution order: $VULNBENCH_DATA_DIR, then the build-time default.
std::filesystem::path data_dir();

}  // namespace vulnbench
