#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "gdse/diffusion.hpp"
#include "gdse/guided_sampler.hpp"
#include "gdse/noise_model.hpp"
#include "gdse/schedules.hpp"

namespace gdse {

// Plain-text run configuration:
//
//   # comment
//   [schedule]
//   T = 200
//
// Keys are addressed as "section.key". Every key has a default except
// run.seed, which must be given. Unknown sections or keys are rejected.
class Config {
 public:
  Config();

  static Config parse(std::string_view text, const std::string& origin = "<config>");
  static Config load(const std::filesystem::path& path);

  // Throws InputError for unknown keys.
  void set(const std::string& key, const std::string& value);
  bool is_set(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  long long get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;

  // Every key with its resolved value, in the same format parse() accepts.
  std::string resolved() const;

  static const std::vector<std::pair<std::string, std::string>>& defaults();

 private:
  std::map<std::string, std::string> values_;
};

DiffusionSchedule schedule_from(const Config& cfg);
EpsilonNetConfig epsilon_arch_from(const Config& cfg);
BackboneTrainConfig backbone_train_from(const Config& cfg);
NoiseModelConfig noise_arch_from(const Config& cfg);
NoiseTrainConfig noise_train_from(const Config& cfg);
GuidanceSchedule guidance_from(const Config& cfg, const DiffusionSchedule& sched);
EnhanceOptions enhance_options_from(const Config& cfg);

}  // namespace gdse
