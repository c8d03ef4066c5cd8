#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "metaview/seqmodel.hpp"

namespace metaview {

/// A checkpoint is `<stem>.bin` (little-endian IEEE-754 doubles, no header)
/// plus `<stem>.json` holding the architecture, seed and value count.
struct Checkpoint {
  SequenceModelParams params;
  std::uint64_t seed = 0;
};

void save_checkpoint(const std::filesystem::path& stem, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& stem);

/// FNV-1a over the little-endian byte image of the values.
std::uint64_t params_hash(const SequenceModelParams& params);
std::string hex64(std::uint64_t value);

}  // namespace metaview
