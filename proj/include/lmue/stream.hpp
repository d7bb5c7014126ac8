#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lmue {

// One generated token together with the top-K slice of the logit vector
// that produced it. The top-K arrays are kept in file order.
struct TokenStep {
    std::int64_t token_id = 0;
    std::string token_text;
    std::vector<double> topk_logits;
    std::vector<std::int64_t> topk_token_ids;
    bool is_eos = false;

    bool operator==(const TokenStep &) const = default;
};

// A prompt and its recorded generation. `reference` is absent for
// unlabeled data.
struct GenerationRecord {
    std::string id;
    std::string prompt;
    std::string answer_text;
    std::optional<std::string> reference;
    std::vector<TokenStep> steps;

    std::size_t length() const noexcept { return steps.size(); }

    bool operator==(const GenerationRecord &) const = default;
};

// Parses and validates one JSONL line. `line_number` is only used for
// error reporting (1-based).
GenerationRecord parse_record(std::string_view line, std::size_t line_number = 1);

// Serializes a record to a single JSON line (no trailing newline).
std::string serialize_record(const GenerationRecord & record);

// Parses records one at a time, skipping an optional leading {"_header": ...}
// line and rejecting duplicate ids. `fn` receives each record and its line.
void for_each_record(std::istream & in, const std::function<void(GenerationRecord &&, std::size_t)> & fn);

std::vector<GenerationRecord> read_split(std::istream & in);
std::vector<GenerationRecord> read_split(const std::filesystem::path & path);

void write_split(std::ostream & out, const std::vector<GenerationRecord> & records);

// Calls `fn(line, line_number)` for every non-blank line of a JSONL stream.
void for_each_jsonl_line(std::istream & in,
                         const std::function<void(std::string_view, std::size_t)> & fn);

std::ifstream open_input(const std::filesystem::path & path);

// Locations of the three data splits plus optional embedding files.
struct SplitManifest {
    std::filesystem::path train_path;
    std::filesystem::path val_path;
    std::filesystem::path test_path;
    std::optional<std::filesystem::path> train_embeddings;
    std::optional<std::filesystem::path> val_embeddings;
    std::optional<std::filesystem::path> test_embeddings;
};

// Reads a split manifest (JSON). Relative paths resolve against the
// manifest's directory; every referenced file must exist and parse.
SplitManifest read_manifest(const std::filesystem::path & path);
void write_manifest(const std::filesystem::path & path, const SplitManifest & manifest);

}  // namespace lmue
