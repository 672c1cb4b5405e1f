#pragma once

// "ANCP" checkpoints. Layout, all little-endian:
//   "ANCP", u32 version
//   u32 length + architecture string, u32 classes, u32 input channels,
//   u32 input size, f64 batchnorm epsilon, f64 batchnorm momentum,
//   u32 C + C f32 input means + C f32 input stds, u8 statistics ready
//   u32 entry count, then per entry: u32 name length, name, u32 rank,
//   rank x u64 dims, f32 payload
// Entries: parameters in registration order, then "velocity/<name>" for each
// parameter when optimizer state is stored, then running statistics.

#include <optional>
#include <span>
#include <string>

#include "advnet/data.hpp"
#include "advnet/model.hpp"
#include "advnet/parameters.hpp"

namespace advnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

Bytes encode_checkpoint(const Wrn<float>& model, const ParameterSet<float>* velocity = nullptr);
void save_checkpoint(const std::string& path, const Wrn<float>& model,
                     const ParameterSet<float>* velocity = nullptr);

struct LoadedCheckpoint {
  Wrn<float> model;
  std::optional<ParameterSet<float>> velocity;
};

// MagicError, VersionError, ParseError (truncation, bad sizes),
// ParameterMismatchError (entry name/shape inconsistent with the header's
// architecture).
LoadedCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
LoadedCheckpoint load_checkpoint(const std::string& path);

// Loads into an existing model; ArchitectureMismatchError if the stored
// architecture differs from the model's.
void load_into(Wrn<float>& model, const std::string& path,
               std::optional<ParameterSet<float>>* velocity = nullptr);

// "wrn-10-1-adaptive/classes=4/input=1x16x16"
std::string describe(const WrnSpec& spec);

}  // namespace advnet
