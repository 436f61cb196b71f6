#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "lfp/config.hpp"

namespace lfp::app {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kError = 1,
  kUsage = 2,
  kConfig = 3,     // ConfigError, ParameterError
  kGeometry = 4,   // DimensionError, GeometryError
  kIo = 5,
  kData = 6,
  kCheckFailed = 7,
  kResource = 8,
};

struct PropertyResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct CheckResult {
  std::vector<PropertyResult> properties;

  bool passed() const;
};

/// Gradient and oracle self-test suite. Writes check.log (JSON lines,
/// byte-identical for identical inputs) and check.lfpckpt into out_dir.
CheckResult run_check(const config::AppConfig& cfg, const std::string& out_dir,
                      std::ostream& console);

/// Writes the resolved configuration as JSON.
void write_config_echo(const std::string& path, const config::AppConfig& cfg);

/// Full command line without the program name; returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lfp::app
