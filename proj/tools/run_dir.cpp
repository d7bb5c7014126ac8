#include "run_dir.hpp"

#include <algorithm>
#include <cstdio>
#include <memory>
#include <stdexcept>

#include <json.hpp>
#include <openssl/evp.h>

#include "lmue/errors.hpp"

namespace lmue::cli {

namespace {

struct Hasher {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx{EVP_MD_CTX_new(), &EVP_MD_CTX_free};

    Hasher() {
        if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
            throw std::runtime_error("cannot initialise SHA-256");
        }
    }
    void update(const void * data, std::size_t n) { EVP_DigestUpdate(ctx.get(), data, n); }
    std::string hex() {
        unsigned char md[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        EVP_DigestFinal_ex(ctx.get(), md, &len);
        std::string out;
        char buf[3];
        for (unsigned int i = 0; i < len; ++i) {
            std::snprintf(buf, sizeof buf, "%02x", md[i]);
            out += buf;
        }
        return out;
    }
};

}  // namespace

std::string sha256_hex(std::string_view bytes) {
    Hasher h;
    h.update(bytes.data(), bytes.size());
    return h.hex();
}

std::string sha256_file(const std::filesystem::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("cannot open " + path.string());
    }
    Hasher h;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        h.update(buf, static_cast<std::size_t>(in.gcount()));
    }
    return h.hex();
}

RunDir::RunDir(std::filesystem::path dir, std::string command) : dir_(std::move(dir)), command_(std::move(command)) {
    std::filesystem::create_directories(dir_);
}

std::filesystem::path RunDir::output_path(const std::string & name) {
    if (std::find(outputs_.begin(), outputs_.end(), name) == outputs_.end()) {
        outputs_.push_back(name);
    }
    return dir_ / name;
}

std::ofstream RunDir::open(const std::string & name) {
    std::ofstream out(output_path(name), std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + (dir_ / name).string());
    }
    return out;
}

void RunDir::write(const std::string & name, std::string_view content) {
    auto out = open(name);
    out << content;
}

void RunDir::add_input(const std::filesystem::path & path) {
    inputs_.push_back(path);
}

void RunDir::finish(std::string_view config_echo) {
    write("config.toml", config_echo);

    nlohmann::ordered_json manifest;
    manifest["command"] = command_;
    auto inputs = nlohmann::ordered_json::array();
    for (const auto & p : inputs_) {
        inputs.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
    }
    manifest["inputs"] = inputs;
    auto names = outputs_;
    std::sort(names.begin(), names.end());
    auto outputs = nlohmann::ordered_json::array();
    for (const auto & name : names) {
        const auto p = dir_ / name;
        outputs.push_back({{"file", name}, {"bytes", std::filesystem::file_size(p)}, {"sha256", sha256_file(p)}});
    }
    manifest["outputs"] = outputs;

    std::ofstream out(dir_ / "run_manifest.json", std::ios::binary | std::ios::trunc);
    out << manifest.dump(2) << '\n';
}

}  // namespace lmue::cli
