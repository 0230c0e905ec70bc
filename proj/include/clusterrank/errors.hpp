#pragma once

#include <stdexcept>
#include <string>

namespace clusterrank {

/// Model parameters do not cover the data they are evaluated on.
class model_mismatch_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A partition does not match the clusters present in the data.
class invalid_partition_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Non-finite value escaped a numeric routine.
class numeric_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file; carries a 1-based line number when known.
class parse_error : public std::runtime_error {
public:
    parse_error(const std::string& msg, long line)
        : std::runtime_error(line > 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
          line_(line) {}
    explicit parse_error(const std::string& msg) : parse_error(msg, 0) {}

    long line() const noexcept { return line_; }

private:
    long line_ = 0;
};

}  // namespace clusterrank
