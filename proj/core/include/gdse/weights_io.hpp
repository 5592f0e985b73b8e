#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gdse/diffusion.hpp"
#include "gdse/noise_model.hpp"
#include "gdse/numerics/tape.hpp"
#include "gdse/schedules.hpp"

namespace gdse {

// Binary layout, all integers and floats little-endian:
//   "GDSE" | u16 version
//   u32 T | f64 beta_start | f64 beta_end | u64 alpha_bar hash
//   u16 len, kind tag bytes
//   u32 n_meta, then n_meta x (u16 len, name bytes, f64 value)
//   u32 n_blocks, then n_blocks x (u16 len, name bytes, u8 ndim, u32 dims[ndim],
//                                  f64 values[prod(dims)])
// Nothing may follow the last block.
struct WeightsFile {
  static constexpr std::uint16_t kVersion = 1;

  ScheduleFingerprint fingerprint;
  std::string kind;
  std::vector<std::pair<std::string, double>> meta;
  std::vector<Param> blocks;

  double meta_value(const std::string& name) const;
};

std::vector<std::uint8_t> encode_weights(const WeightsFile& w);
WeightsFile decode_weights(std::span<const std::uint8_t> bytes);
void save_weights(const WeightsFile& w, const std::filesystem::path& path);
WeightsFile load_weights(const std::filesystem::path& path);

inline constexpr const char* kEpsilonNetKind = "epsilon_net";
inline constexpr const char* kNoiseBankKind = "noise_bank";

WeightsFile to_weights(const EpsilonNet& net, const ScheduleFingerprint& fp);
EpsilonNet epsilon_net_from(const WeightsFile& w);
WeightsFile to_weights(const NoiseModel& model);
NoiseModel noise_model_from(const WeightsFile& w);

// Rebuilds the linear schedule named by a fingerprint and verifies the
// alpha_bar hash. Throws InputError on mismatch.
DiffusionSchedule schedule_from_fingerprint(const ScheduleFingerprint& fp);

}  // namespace gdse
