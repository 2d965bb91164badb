#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace apa::cli {

// Runs one `apa` invocation. args[0] is the program name. Returns the
// process exit code: 0 on success, 1 on a runtime failure, 2 on a usage
// error. Failures print {"error": {"code": ..., "message": ...}} to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

// Reproducibility manifest written next to every command's outputs.
struct Manifest {
  std::string subcommand;
  std::vector<std::string> args;
  std::uint64_t seed = 0;
  nlohmann::json config;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
};

std::string sha256_file(const std::filesystem::path& path);
nlohmann::json manifest_json(const Manifest& manifest);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

}  // namespace apa::cli
