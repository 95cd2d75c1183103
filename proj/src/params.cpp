#include "spectra/params.h"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "spectra/errors.h"

namespace spectra {

ParamStore::Slice ParamStore::add(const std::string& name,
                                  std::size_t length) {
  if (has(name)) throw ValueError("duplicate parameter slice: " + name);
  Slice s{values.size(), length};
  values.resize(values.size() + length, 0.0);
  grad.resize(values.size(), 0.0);
  slices.emplace_back(name, s);
  return s;
}

bool ParamStore::has(const std::string& name) const {
  for (const auto& [n, s] : slices) {
    if (n == name) return true;
  }
  return false;
}

ParamStore::Slice ParamStore::slice(const std::string& name) const {
  for (const auto& [n, s] : slices) {
    if (n == name) return s;
  }
  throw ValueError("unknown parameter slice: " + name);
}

std::span<double> ParamStore::view(const std::string& name) {
  const Slice s = slice(name);
  return std::span<double>(values.data() + s.offset, s.length);
}

std::span<const double> ParamStore::view(const std::string& name) const {
  const Slice s = slice(name);
  return std::span<const double>(values.data() + s.offset, s.length);
}

std::span<double> ParamStore::grad_view(const std::string& name) {
  const Slice s = slice(name);
  return std::span<double>(grad.data() + s.offset, s.length);
}

void ParamStore::zero_grad() {
  std::fill(grad.begin(), grad.end(), 0.0);
}

namespace {

constexpr char kMagic[4] = {'M', 'S', 'N', 'M'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

bool read_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) |
      (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) |
      (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

void write_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(out, bits);
}

bool read_f32(std::istream& in, float& v) {
  std::uint32_t bits;
  if (!read_u32(in, bits)) return false;
  std::memcpy(&v, &bits, 4);
  return true;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  for (const auto& [name, s] : params.slices) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(s.length));
    for (std::size_t i = 0; i < s.length; ++i) {
      write_f32(out, static_cast<float>(params.values[s.offset + i]));
    }
  }
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

ParamStore load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("checkpoint magic mismatch in " + path);
  }
  std::uint32_t version = 0;
  if (!read_u32(in, version) || version != kVersion) {
    throw FormatError("unsupported checkpoint version in " + path);
  }
  ParamStore params;
  std::uint32_t name_len = 0;
  while (read_u32(in, name_len)) {
    if (name_len > 4096) throw FormatError("checkpoint slice name too long");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) {
      throw FormatError("truncated checkpoint slice name");
    }
    std::uint32_t count = 0;
    if (!read_u32(in, count)) throw FormatError("truncated checkpoint slice");
    const auto s = params.add(name, count);
    for (std::uint32_t i = 0; i < count; ++i) {
      float v = 0.0f;
      if (!read_f32(in, v)) throw FormatError("truncated checkpoint data");
      params.values[s.offset + i] = static_cast<double>(v);
    }
  }
  return params;
}

void round_through_f32(ParamStore& params) {
  for (double& v : params.values) {
    v = static_cast<double>(static_cast<float>(v));
  }
}

}  // namespace spectra
