#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace lmue::cli {

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path & path);

// One output directory per run. Every file written through it is listed,
// with its hash, in run_manifest.json by finish().
class RunDir {
public:
    RunDir(std::filesystem::path dir, std::string command);

    const std::filesystem::path & dir() const noexcept { return dir_; }

    // Opens `name` inside the run directory for writing and registers it.
    std::ofstream open(const std::string & name);
    void write(const std::string & name, std::string_view content);

    // Registers `name` as an output written by other code; returns its path.
    std::filesystem::path output_path(const std::string & name);

    void add_input(const std::filesystem::path & path);

    // Writes the config echo and the manifest. Call once, last.
    void finish(std::string_view config_echo);

private:
    std::filesystem::path dir_;
    std::string command_;
    std::vector<std::string> outputs_;
    std::vector<std::filesystem::path> inputs_;
};

}  // namespace lmue::cli
