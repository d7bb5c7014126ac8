#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace lmue {

// Bad or inconsistent input data (parse failures, schema violations,
// unmatched ids). Carries the location when one is known.
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string & what, std::optional<std::size_t> line = std::nullopt,
                        std::optional<std::string> record_id = std::nullopt);

    std::optional<std::size_t> line() const noexcept { return line_; }
    const std::optional<std::string> & record_id() const noexcept { return record_id_; }

private:
    std::optional<std::size_t> line_;
    std::optional<std::string> record_id_;
};

// A metric that has no value on the given samples (e.g. AUROC on a
// single-class set). Raised instead of returning a sentinel.
class UndefinedMetricError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Numerical failure during training or simulation (non-finite values).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace lmue
