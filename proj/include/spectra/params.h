#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace spectra {

// Flat parameter vector with named slices. Slice order is insertion order
// and defines the checkpoint layout.
struct ParamStore {
  struct Slice {
    std::size_t offset = 0;
    std::size_t length = 0;
  };

  std::vector<double> values;
  std::vector<double> grad;
  std::vector<std::pair<std::string, Slice>> slices;

  Slice add(const std::string& name, std::size_t length);
  bool has(const std::string& name) const;
  Slice slice(const std::string& name) const;  // throws ValueError if absent

  std::span<double> view(const std::string& name);
  std::span<const double> view(const std::string& name) const;
  std::span<double> grad_view(const std::string& name);

  void zero_grad();
};

// Checkpoint container: magic "MSNM", u32 version, then per slice
// (u32 name length, name bytes, u32 element count, float32 values),
// little-endian throughout.
void save_checkpoint(const std::string& path, const ParamStore& params);
ParamStore load_checkpoint(const std::string& path);

// Rounds every value through float32, matching what a save/load does.
void round_through_f32(ParamStore& params);

}  // namespace spectra
