#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <memory>

#include "apa/cli.hpp"
#include "apa/error.hpp"

#ifndef APA_VERSION
#define APA_VERSION "0.0.0"
#endif

namespace apa::cli {

using nlohmann::json;

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw Error("internal", "sha256 initialisation failed");
  }
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

json manifest_json(const Manifest& m) {
  json inputs = json::array();
  for (const auto& p : m.inputs) inputs.push_back(json{{"path", p.string()}, {"sha256", sha256_file(p)}});
  json outputs = json::array();
  for (const auto& p : m.outputs) {
    outputs.push_back(json{{"file", p.filename().string()}, {"sha256", sha256_file(p)}});
  }
  return json{{"tool", "apa"},
              {"version", APA_VERSION},
              {"subcommand", m.subcommand},
              {"args", m.args},
              {"seed", m.seed},
              {"config", m.config},
              {"inputs", inputs},
              {"outputs", outputs}};
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  const json j = manifest_json(manifest);
  std::ofstream out(path);
  if (!out) throw Error("io", "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace apa::cli
