#include "manifest.hpp"

#include <array>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include <openssl/evp.h>

#include "cli.hpp"
#include "scorefilter/error.hpp"

namespace scorefilter::cli {

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 initialisation failed");
  }
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  }
  return hex.str();
}

void RunManifest::add_input(const std::filesystem::path& path) {
  inputs[path.string()] = sha256_file(path);
}

void RunManifest::add_output(const std::filesystem::path& dir, const std::string& name) {
  outputs[name] = sha256_file(dir / name);
}

void RunManifest::write(const std::filesystem::path& dir) const {
  Json obj = {{"tool", "scorefilter"},
              {"version", kVersion},
              {"command", command},
              {"config", config},
              {"seeds", seeds},
              {"inputs", inputs},
              {"outputs", outputs}};
  const auto path = dir / "manifest.json";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError("cannot open for writing: " + path.string());
  out << obj.dump(2) << '\n';
}

}  // namespace scorefilter::cli
