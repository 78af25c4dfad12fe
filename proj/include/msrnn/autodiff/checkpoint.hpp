#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "msrnn/autodiff/tape.hpp"

namespace msrnn::ad {

/// Binary checkpoint: a versioned header, an opaque metadata string (JSON by
/// convention) and a list of named tensors. Byte layout is documented in
/// docs/formats.md; all integers and doubles are little-endian.
struct Checkpoint {
  static constexpr char kMagic[8] = {'M', 'S', 'R', 'N', 'C', 'K', 'P', 'T'};
  static constexpr std::uint32_t kVersion = 1;

  struct Entry {
    std::string name;
    Tensor value;
  };

  std::string metadata;
  std::vector<Entry> tensors;

  static Checkpoint capture(std::span<Parameter* const> params, std::string metadata = {});
  /// Copies stored tensors into `params` by name; every parameter must be
  /// present with an identical shape, otherwise ArtifactError.
  void restore(std::span<Parameter* const> params) const;

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace msrnn::ad
