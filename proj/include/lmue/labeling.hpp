#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lmue/stream.hpp"

namespace lmue {

// Lowercases ASCII letters, splits on Unicode whitespace and strips leading
// and trailing ASCII punctuation from each token. Tokens that end up empty
// are dropped.
std::vector<std::string> rouge_tokenize(std::string_view text);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

// ROUGE-L F-measure over `rouge_tokenize` tokens. beta = 1 gives plain F1.
// Returns 0 when either side tokenizes to nothing or the LCS is empty.
double rouge_l(std::string_view candidate, std::string_view reference, double beta = 1.0);

struct LabeledRecord {
    std::string record_id;
    double rouge_l = 0.0;
    bool correct = false;

    bool unreliable() const noexcept { return !correct; }
    bool operator==(const LabeledRecord &) const = default;
};

inline constexpr double kDefaultRougeThreshold = 0.3;

// correct = rouge_l(answer, reference) > threshold. Throws InputError when
// the record has no reference.
LabeledRecord label(const GenerationRecord & record, double threshold = kDefaultRougeThreshold,
                    double beta = 1.0);

std::string serialize_label(const LabeledRecord & label);
LabeledRecord parse_label(std::string_view line, std::size_t line_number = 1);
std::vector<LabeledRecord> read_labels(const std::filesystem::path & path);

}  // namespace lmue
