#include "lmue/labeling.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include <json.hpp>

#include "lmue/errors.hpp"

namespace lmue {

using nlohmann::json;

namespace {

bool is_unicode_space(char32_t cp) {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

// Decodes one code point starting at text[i]; returns its byte length.
// Malformed sequences decode as a single opaque byte.
std::size_t decode_utf8(std::string_view text, std::size_t i, char32_t & cp) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (b0 >= 0xF0 && b0 < 0xF8) {
        len = 4;
        cp = b0 & 0x07;
    } else if (b0 >= 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if (b0 >= 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else {
        cp = b0;
        return 1;
    }
    if (i + len > text.size()) {
        cp = 0xFFFD;
        return 1;
    }
    for (std::size_t k = 1; k < len; ++k) {
        const auto b = static_cast<unsigned char>(text[i + k]);
        if ((b & 0xC0) != 0x80) {
            cp = 0xFFFD;
            return 1;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    return len;
}

bool is_ascii_punct(char c) {
    const auto u = static_cast<unsigned char>(c);
    return u < 0x80 && std::ispunct(u);
}

void flush(std::string & current, std::vector<std::string> & out) {
    std::size_t b = 0;
    std::size_t e = current.size();
    while (b < e && is_ascii_punct(current[b])) ++b;
    while (e > b && is_ascii_punct(current[e - 1])) --e;
    if (e > b) {
        out.emplace_back(current.substr(b, e - b));
    }
    current.clear();
}

}  // namespace

std::vector<std::string> rouge_tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    for (std::size_t i = 0; i < text.size();) {
        char32_t cp = 0;
        const std::size_t len = decode_utf8(text, i, cp);
        if (is_unicode_space(cp)) {
            flush(current, out);
        } else if (len == 1) {
            const char c = text[i];
            current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
        } else {
            current.append(text.substr(i, len));
        }
        i += len;
    }
    flush(current, out);
    return out;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
    if (a.empty() || b.empty()) {
        return 0;
    }
    std::vector<std::size_t> prev(b.size() + 1, 0);
    std::vector<std::size_t> cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l(std::string_view candidate, std::string_view reference, double beta) {
    if (!(beta > 0.0) || !std::isfinite(beta)) {
        throw std::invalid_argument("ROUGE-L beta must be positive and finite");
    }
    const auto cand = rouge_tokenize(candidate);
    const auto ref = rouge_tokenize(reference);
    const std::size_t lcs = lcs_length(cand, ref);
    if (lcs == 0) {
        return 0.0;
    }
    // (1 + b^2) P R / (R + b^2 P) with P = L/|c|, R = L/|r| reduces to
    // (1 + b^2) L / (|c| + b^2 |r|); the reduced form keeps F1 = 2L/(|c|+|r|) exact.
    const double b2 = beta * beta;
    return (1.0 + b2) * static_cast<double>(lcs) /
           (static_cast<double>(cand.size()) + b2 * static_cast<double>(ref.size()));
}

LabeledRecord label(const GenerationRecord & record, double threshold, double beta) {
    if (!record.reference) {
        throw InputError("no reference answer; correctness label unavailable", std::nullopt, record.id);
    }
    LabeledRecord out;
    out.record_id = record.id;
    out.rouge_l = rouge_l(record.answer_text, *record.reference, beta);
    out.correct = out.rouge_l > threshold;
    return out;
}

std::string serialize_label(const LabeledRecord & l) {
    return json{{"id", l.record_id}, {"rouge_l", l.rouge_l}, {"correct", l.correct ? 1 : 0}}.dump();
}

LabeledRecord parse_label(std::string_view line, std::size_t line_number) {
    try {
        const json j = json::parse(line);
        LabeledRecord l;
        l.record_id = j.at("id").get<std::string>();
        l.rouge_l = j.contains("rouge_l") ? j.at("rouge_l").get<double>() : 0.0;
        if (!(l.rouge_l >= 0.0 && l.rouge_l <= 1.0)) {
            throw InputError("rouge_l outside [0, 1]", line_number, l.record_id);
        }
        const json & c = j.at("correct");
        if (c.is_boolean()) {
            l.correct = c.get<bool>();
        } else {
            const auto v = c.get<std::int64_t>();
            if (v != 0 && v != 1) {
                throw InputError("'correct' must be 0 or 1", line_number, l.record_id);
            }
            l.correct = v == 1;
        }
        return l;
    } catch (const json::exception & e) {
        throw InputError(std::string("bad label line: ") + e.what(), line_number);
    }
}

std::vector<LabeledRecord> read_labels(const std::filesystem::path & path) {
    auto in = open_input(path);
    std::vector<LabeledRecord> out;
    for_each_jsonl_line(in, [&](std::string_view line, std::size_t n) { out.push_back(parse_label(line, n)); });
    return out;
}

}  // namespace lmue
