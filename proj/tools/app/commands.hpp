// Command implementations behind the xfer executable.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "app/config.hpp"

namespace xfer::app {

/// Tool version recorded in every manifest.
const char* version();

struct RunOptions {
    std::filesystem::path out;
    std::size_t workers = 1;
    bool quiet = false;
};

/// Names accepted by run_command.
const std::vector<std::string>& command_names();

/// Runs one command and writes its artifacts plus manifest.json into opts.out.
/// Returns the artifact paths relative to opts.out, manifest last.
std::vector<std::string> run_command(const std::string& command, const ExperimentConfig& cfg, const RunOptions& opts);

/// Full command-line entry point; returns the process exit code.
int main_entry(int argc, char** argv);

}  // namespace xfer::app
