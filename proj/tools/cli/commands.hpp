#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace pdda::cli {

inline const std::vector<std::string> kCommands = {
    "gen-data", "train-score", "train-classifier", "purify", "evaluate", "diagnose"};

/// Flags of one invocation, before they are folded into a RunConfig.
struct Invocation {
  std::string command;
  std::optional<std::string> config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::optional<std::string> out;
  std::optional<std::string> input;
  std::optional<std::uint64_t> index;
};

/// defaults < PDDA_OUT < --config file < --set < dedicated flags.
RunConfig resolve(const Invocation& inv);

/// Runs one command with a resolved configuration. The configuration is
/// echoed to <out>/config.txt before any work starts. Throws pdda::Error.
void run_command(const Invocation& inv, const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Full command line handling; returns the process exit code.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int main_entry(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pdda::cli
