#include "apn/checkpoint.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>

#include "apn/error.hpp"

namespace apn {
namespace {

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw std::runtime_error("checkpoint " + path.string() + ": truncated");
  }
  return v;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << kCheckpointMagic << '\n';
  put<std::uint64_t>(os, ckpt.model_json.size());
  os.write(ckpt.model_json.data(), static_cast<std::streamsize>(ckpt.model_json.size()));
  put<std::uint64_t>(os, ckpt.params.size());
  for (const auto& [name, t] : ckpt.params) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Shape& s = t.shape();
    put<std::int32_t>(os, s.n);
    put<std::int32_t>(os, s.c);
    put<std::int32_t>(os, s.h);
    put<std::int32_t>(os, s.w);
    os.write(reinterpret_cast<const char*>(t.raw()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string magic;
  std::getline(is, magic);
  if (magic != kCheckpointMagic) {
    throw std::runtime_error("checkpoint " + path.string() + ": bad magic '" + magic + "'");
  }
  Checkpoint ckpt;
  const auto json_len = get<std::uint64_t>(is, path);
  ckpt.model_json.resize(json_len);
  if (!is.read(ckpt.model_json.data(), static_cast<std::streamsize>(json_len))) {
    throw std::runtime_error("checkpoint " + path.string() + ": truncated");
  }
  const auto count = get<std::uint64_t>(is, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(is, path);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw std::runtime_error("checkpoint " + path.string() + ": truncated");
    Shape s;
    s.n = get<std::int32_t>(is, path);
    s.c = get<std::int32_t>(is, path);
    s.h = get<std::int32_t>(is, path);
    s.w = get<std::int32_t>(is, path);
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
      throw std::runtime_error("checkpoint " + path.string() + ": bad shape for " + name);
    }
    std::vector<double> values(s.numel());
    if (!is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)))) {
      throw std::runtime_error("checkpoint " + path.string() + ": truncated in " + name);
    }
    ckpt.params.emplace_back(std::move(name), Tensor(s, std::move(values)));
  }
  return ckpt;
}

}  // namespace apn
