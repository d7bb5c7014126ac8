#pragma once

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"

namespace oracle {

// Runs the command-line tool in-process with stdout and stderr captured.
struct CliResult {
    int code;
    std::string out;
    std::string err;
};

inline CliResult run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "lmue");
    std::ostringstream out, err;
    auto * old_out = std::cout.rdbuf(out.rdbuf());
    auto * old_err = std::cerr.rdbuf(err.rdbuf());
    int code = 0;
    try {
        code = lmue::cli::run(args);
    } catch (...) {
        std::cout.rdbuf(old_out);
        std::cerr.rdbuf(old_err);
        throw;
    }
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    return {code, out.str(), err.str()};
}

}  // namespace oracle
