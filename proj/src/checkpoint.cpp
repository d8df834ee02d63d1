#include "audeform/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "audeform/config.hpp"
#include "audeform/error.hpp"

namespace audeform {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  require(static_cast<bool>(is.read(reinterpret_cast<char*>(b), 4)), Err::TruncatedFile,
          "checkpoint truncated at " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::ifstream open_and_check(const std::string& path, std::string& config_text) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), Err::IoError, "cannot open " + path);
  char magic[4];
  require(static_cast<bool>(is.read(magic, 4)), Err::TruncatedFile, path + ": no header");
  require(std::memcmp(magic, "DCKP", 4) == 0, Err::BadMagic, path + ": not a checkpoint");
  const std::uint32_t version = get_u32(is, "version");
  require(version == 1, Err::IoError, path + ": unsupported checkpoint version");
  const std::uint32_t cfg_len = get_u32(is, "config length");
  config_text.resize(cfg_len);
  require(static_cast<bool>(is.read(config_text.data(), cfg_len)), Err::TruncatedFile,
          path + ": truncated config");
  return is;
}

}  // namespace

void save_checkpoint(Model& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), Err::IoError, "cannot open " + path + " for writing");
  os.write("DCKP", 4);
  put_u32(os, 1);
  const std::string cfg = model.cfg().serialize();
  put_u32(os, static_cast<std::uint32_t>(cfg.size()));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  for (Parameter* p : model.parameters()) {
    put_u32(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put_u32(os, static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t e : p->value.shape) put_u32(os, static_cast<std::uint32_t>(e));
    for (double v : p->value.data) {
      const float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(os, bits);
    }
  }
  require(os.good(), Err::IoError, "write failed for " + path);
}

ModelConfig read_checkpoint_config(const std::string& path) {
  std::string cfg_text;
  open_and_check(path, cfg_text);
  return parse_model_config(cfg_text);
}

void load_checkpoint(Model& model, const std::string& path) {
  std::string cfg_text;
  std::ifstream is = open_and_check(path, cfg_text);
  for (Parameter* p : model.parameters()) {
    const std::uint32_t name_len = get_u32(is, "parameter name length");
    std::string name(name_len, '\0');
    require(static_cast<bool>(is.read(name.data(), name_len)), Err::TruncatedFile,
            path + ": truncated parameter name");
    require(name == p->name, Err::ConfigMismatch,
            path + ": expected parameter " + p->name + ", found " + name);
    const std::uint32_t rank = get_u32(is, name + " rank");
    require(rank == p->value.rank(), Err::ConfigMismatch, name + ": rank mismatch");
    for (std::size_t i = 0; i < rank; ++i) {
      const std::uint32_t e = get_u32(is, name + " extent");
      require(e == p->value.shape[i], Err::ConfigMismatch, name + ": extent mismatch");
    }
    for (double& v : p->value.data) {
      const std::uint32_t bits = get_u32(is, name + " payload");
      float f;
      std::memcpy(&f, &bits, 4);
      v = static_cast<double>(f);
    }
  }
}

}  // namespace audeform
