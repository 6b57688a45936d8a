#pragma once

#include <optional>
#include <string>

#include "mvsde/config.hpp"

namespace mvsde {

struct DispatchOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> threads;
};

// Runs the configured experiment and writes its artifacts (canonical config
// echo plus experiment outputs) into the output directory.
// Exit status: 0 complete/PASS, 2 verdict not PASS, 1 runtime error.
int dispatch(const Config& cfg, const DispatchOverrides& overrides = {});

// Convenience: parse text, report errors to `error_out`, dispatch.
int run_config_text(const std::string& text, const DispatchOverrides& overrides,
                    std::string* error_out);

// Human-readable schema of the config format (the `describe` subcommand).
std::string describe_schema();

}  // namespace mvsde
