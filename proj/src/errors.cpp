#include "lmue/errors.hpp"

namespace lmue {

namespace {

std::string decorate(const std::string & what, const std::optional<std::size_t> & line,
                     const std::optional<std::string> & record_id) {
    std::string out;
    if (line) {
        out += "line " + std::to_string(*line);
    }
    if (record_id) {
        out += (out.empty() ? "" : ", ") + std::string("record '") + *record_id + "'";
    }
    if (!out.empty()) {
        out += ": ";
    }
    return out + what;
}

}  // namespace

InputError::InputError(const std::string & what, std::optional<std::size_t> line,
                       std::optional<std::string> record_id)
    : std::runtime_error(decorate(what, line, record_id)), line_(line), record_id_(std::move(record_id)) {}

}  // namespace lmue
