#include "lmue/stream.hpp"

#include <cmath>
#include <unordered_set>

#include <json.hpp>

#include "lmue/errors.hpp"

namespace lmue {

using nlohmann::json;

namespace {

struct Ctx {
    std::size_t line;
    std::optional<std::string> id;

    [[noreturn]] void fail(const std::string & what) const { throw InputError(what, line, id); }
};

const json & require(const json & obj, const char * key, const Ctx & ctx) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        ctx.fail(std::string("missing required field '") + key + "'");
    }
    return *it;
}

std::string require_string(const json & obj, const char * key, const Ctx & ctx) {
    const json & v = require(obj, key, ctx);
    if (!v.is_string()) {
        ctx.fail(std::string("field '") + key + "' must be a string");
    }
    return v.get<std::string>();
}

std::int64_t as_integer(const json & v, const std::string & what, const Ctx & ctx) {
    if (!v.is_number_integer()) {
        ctx.fail(what + " must be an integer");
    }
    return v.get<std::int64_t>();
}

double as_finite(const json & v, const std::string & what, const Ctx & ctx) {
    if (v.is_string()) {
        // "NaN" / "Infinity" style encodings of non-finite values.
        ctx.fail(what + " is non-finite (" + v.get<std::string>() + ")");
    }
    if (!v.is_number()) {
        ctx.fail(what + " must be a number");
    }
    const double x = v.get<double>();
    if (!std::isfinite(x)) {
        ctx.fail(what + " is non-finite");
    }
    return x;
}

TokenStep parse_step(const json & j, std::size_t index, const Ctx & ctx) {
    const std::string where = "steps[" + std::to_string(index) + "]";
    if (!j.is_object()) {
        ctx.fail(where + " must be an object");
    }
    TokenStep step;
    step.token_id = as_integer(require(j, "token_id", ctx), where + ".token_id", ctx);
    step.token_text = require_string(j, "token_text", ctx);

    const json & logits = require(j, "topk_logits", ctx);
    const json & ids = require(j, "topk_token_ids", ctx);
    if (!logits.is_array() || !ids.is_array()) {
        ctx.fail(where + ": topk_logits and topk_token_ids must be arrays");
    }
    if (logits.size() != ids.size()) {
        ctx.fail(where + ": topk_logits has " + std::to_string(logits.size()) + " entries but topk_token_ids has " +
                 std::to_string(ids.size()));
    }
    if (logits.empty()) {
        ctx.fail(where + ": top-K arrays are empty");
    }
    step.topk_logits.reserve(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) {
        step.topk_logits.push_back(as_finite(logits[k], where + ".topk_logits[" + std::to_string(k) + "]", ctx));
    }
    step.topk_token_ids.reserve(ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k) {
        step.topk_token_ids.push_back(as_integer(ids[k], where + ".topk_token_ids[" + std::to_string(k) + "]", ctx));
    }

    const json & eos = require(j, "is_eos", ctx);
    if (!eos.is_boolean()) {
        ctx.fail(where + ".is_eos must be a boolean");
    }
    step.is_eos = eos.get<bool>();
    return step;
}

bool is_header(const json & j) { return j.is_object() && j.contains("_header") && !j.contains("steps"); }

}  // namespace

GenerationRecord parse_record(std::string_view line, std::size_t line_number) {
    Ctx ctx{line_number, std::nullopt};
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception & e) {
        // parse_error, or out_of_range for numbers such as 1e999
        ctx.fail(std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) {
        ctx.fail("record must be a JSON object");
    }

    GenerationRecord rec;
    rec.id = require_string(j, "id", ctx);
    ctx.id = rec.id;
    rec.prompt = require_string(j, "prompt", ctx);
    rec.answer_text = require_string(j, "answer_text", ctx);
    if (auto it = j.find("reference"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) {
            ctx.fail("field 'reference' must be a string");
        }
        rec.reference = it->get<std::string>();
    }

    const json & steps = require(j, "steps", ctx);
    if (!steps.is_array()) {
        ctx.fail("field 'steps' must be an array");
    }
    if (steps.empty()) {
        ctx.fail("record has no steps");
    }
    rec.steps.reserve(steps.size());
    for (std::size_t t = 0; t < steps.size(); ++t) {
        rec.steps.push_back(parse_step(steps[t], t, ctx));
        if (rec.steps.back().is_eos && t + 1 != steps.size()) {
            ctx.fail("end-of-sequence flag on non-final step " + std::to_string(t));
        }
    }
    return rec;
}

std::string serialize_record(const GenerationRecord & record) {
    json steps = json::array();
    for (const auto & s : record.steps) {
        steps.push_back(json{{"token_id", s.token_id},
                             {"token_text", s.token_text},
                             {"topk_logits", s.topk_logits},
                             {"topk_token_ids", s.topk_token_ids},
                             {"is_eos", s.is_eos}});
    }
    json j{{"id", record.id}, {"prompt", record.prompt}, {"answer_text", record.answer_text}};
    if (record.reference) {
        j["reference"] = *record.reference;
    }
    j["steps"] = std::move(steps);
    return j.dump();
}

void for_each_jsonl_line(std::istream & in, const std::function<void(std::string_view, std::size_t)> & fn) {
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        fn(line, number);
    }
    if (in.bad()) {
        throw InputError("I/O failure while reading line " + std::to_string(number + 1));
    }
}

std::ifstream open_input(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("cannot open '" + path.string() + "'");
    }
    return in;
}

void for_each_record(std::istream & in,
                     const std::function<void(GenerationRecord &&, std::size_t)> & fn) {
    std::unordered_set<std::string> seen;
    bool first = true;
    for_each_jsonl_line(in, [&](std::string_view line, std::size_t number) {
        if (first) {
            first = false;
            // Extractors may prepend one metadata line: {"_header": {...}}.
            auto j = json::parse(line, nullptr, false);
            if (!j.is_discarded() && is_header(j)) {
                return;
            }
        }
        GenerationRecord rec = parse_record(line, number);
        if (!seen.insert(rec.id).second) {
            throw InputError("duplicate id", number, rec.id);
        }
        fn(std::move(rec), number);
    });
}

std::vector<GenerationRecord> read_split(std::istream & in) {
    std::vector<GenerationRecord> out;
    for_each_record(in, [&](GenerationRecord && rec, std::size_t) { out.push_back(std::move(rec)); });
    return out;
}

std::vector<GenerationRecord> read_split(const std::filesystem::path & path) {
    auto in = open_input(path);
    try {
        return read_split(in);
    } catch (const InputError & e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

void write_split(std::ostream & out, const std::vector<GenerationRecord> & records) {
    for (const auto & r : records) {
        out << serialize_record(r) << '\n';
    }
}

SplitManifest read_manifest(const std::filesystem::path & path) {
    auto in = open_input(path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception & e) {
        throw InputError(path.string() + ": malformed JSON: " + e.what());
    }
    const auto base = path.parent_path();
    auto resolve = [&](const char * key, bool required) -> std::optional<std::filesystem::path> {
        auto it = j.find(key);
        if (it == j.end() || it->is_null()) {
            if (required) {
                throw InputError(path.string() + ": missing '" + key + "'");
            }
            return std::nullopt;
        }
        std::filesystem::path p = it->get<std::string>();
        if (p.is_relative()) {
            p = base / p;
        }
        if (!std::filesystem::exists(p)) {
            throw InputError(path.string() + ": '" + key + "' refers to missing file " + p.string());
        }
        return p;
    };

    SplitManifest m;
    m.train_path = *resolve("train_path", true);
    m.val_path = *resolve("val_path", true);
    m.test_path = *resolve("test_path", true);
    m.train_embeddings = resolve("train_embeddings", false);
    m.val_embeddings = resolve("val_embeddings", false);
    m.test_embeddings = resolve("test_embeddings", false);
    for (const auto & p : {m.train_path, m.val_path, m.test_path}) {
        (void)read_split(p);
    }
    return m;
}

void write_manifest(const std::filesystem::path & path, const SplitManifest & m) {
    json j{{"train_path", m.train_path.string()},
           {"val_path", m.val_path.string()},
           {"test_path", m.test_path.string()}};
    if (m.train_embeddings) j["train_embeddings"] = m.train_embeddings->string();
    if (m.val_embeddings) j["val_embeddings"] = m.val_embeddings->string();
    if (m.test_embeddings) j["test_embeddings"] = m.test_embeddings->string();
    std::ofstream out(path, std::ios::binary);
    out << j.dump(2) << '\n';
}

}  // namespace lmue
