#pragma once

#include <cstdint>
#include <string>

#include "fakegaze/model.hpp"

namespace fakegaze {

// Binary weight container.
//
// Layout (all integers little-endian):
//   bytes 0..3   magic "FGWT"
//   bytes 4..5   format version (u16), currently 1
//   bytes 6..13  model fingerprint (u64) — FNV-1a hash of the canonical
//                architecture string; loaders refuse mismatched models
//   bytes 14..17 tensor count (u32)
//   per tensor:  name length (u32), name bytes,
//                rank (u32), dims (u32 each),
//                raw IEEE-754 binary32 values, little-endian
//
// Every structural violation (short file, bad magic, absurd sizes, trailing
// bytes, non-finite values) raises WeightsError; nothing is ever partially
// applied to a model.
inline constexpr std::uint16_t kWeightsFormatVersion = 1;

void save_weights(const std::string& path, const ModelWeights& weights);
ModelWeights load_weights(const std::string& path);

// Serialized bytes without touching the filesystem (used for byte-identity
// checks and atomic writes).
std::string encode_weights(const ModelWeights& weights);
ModelWeights decode_weights(const std::string& bytes, const std::string& origin);

}  // namespace fakegaze
