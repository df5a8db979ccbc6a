#pragma once

#include <cstdint>
#include <filesystem>

#include "ctcforge/emissions.hpp"
#include "ctcforge/tokens.hpp"

namespace ctcforge {

// Binary layout: "CTCE", u32 version, u32 frames, u32 vocab, then
// frames*vocab little-endian f32 values, frame-major.
inline constexpr char kEmissionMagic[4] = {'C', 'T', 'C', 'E'};
inline constexpr std::uint32_t kEmissionVersion = 1;

enum class EmissionFormat { kBinary, kTsv };

struct LoadOptions {
  bool strict_validation = true;
};

/// Reads a binary or TSV emission file; the format is detected from the
/// leading magic bytes.
EmissionMatrix load_emissions(const std::filesystem::path& path,
                              const TokenDictionary& tokens,
                              const LoadOptions& options = {});

/// Reads without a token dictionary (no column-count check).
EmissionMatrix load_emissions(const std::filesystem::path& path,
                              const LoadOptions& options = {});

void write_emissions(const std::filesystem::path& path,
                     const EmissionMatrix& emissions,
                     EmissionFormat format = EmissionFormat::kBinary);

}  // namespace ctcforge
