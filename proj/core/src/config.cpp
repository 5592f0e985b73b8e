#include "gdse/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "gdse/error.hpp"

namespace gdse {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(d))
    throw InputError("config: " + key + " = '" + v + "' is not a finite number");
  return d;
}

long long to_int(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const long long i = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE)
    throw InputError("config: " + key + " = '" + v + "' is not an integer");
  return i;
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& Config::defaults() {
  static const std::vector<std::pair<std::string, std::string>> kDefaults = {
      {"schedule.T", "200"},
      {"schedule.beta_start", "1e-4"},
      {"schedule.beta_end", "0.05"},

      {"backbone.layers", "6"},
      {"backbone.channels", "16"},
      {"backbone.kernel", "3"},
      {"backbone.dilation_cycle", "6"},
      {"backbone.embed_dim", "16"},
      {"backbone.embed_hidden", "32"},
      {"backbone.epochs", "50"},
      {"backbone.lr", "0.002"},
      {"backbone.batch", "16"},
      {"backbone.segment_length", "2048"},
      {"backbone.steps_per_epoch", "0"},
      {"backbone.clip_norm", "1.0"},

      {"noise_model.epochs", "300"},
      {"noise_model.lr", "0.01"},
      {"noise_model.draw_mode", "vector"},
      {"noise_model.build_once", "true"},
      {"noise_model.train_fraction", "0.8"},
      {"noise_model.validate_every", "10"},
      {"noise_model.channels", "2"},
      {"noise_model.kernel", "9"},
      {"noise_model.dilations", "1,2,4,8"},
      {"noise_model.sigma_floor", "1e-4"},
      {"noise_model.shared_trunk", "false"},

      {"guidance.lambda_max", "0.72"},
      {"guidance.gamma", "0.7"},
      {"guidance.ratio_inverted", "false"},
      {"guidance.grad_clip", "1000"},
      {"guidance.sign", "ascent"},
      {"guidance.noise_at_final_step", "true"},
      {"guidance.full_trajectory", "false"},
      {"guidance.unguided", "false"},

      {"io.corpus_dir", ""},
      {"io.corpus_kind", "harmonic-voiced"},
      {"io.corpus_count", "16"},
      {"io.clip_length", "16000"},
      {"io.noise_kind", "white"},
      {"io.noise_sd", "0.1"},
      {"io.noise_length", "80000"},
      {"io.test_count", "2"},
      {"io.snr_db", "5"},
      {"io.snr_list", "10,5,0,-5"},
      {"io.clean", ""},
      {"io.noisy", ""},
      {"io.noise", ""},
      {"io.backbone_weights", ""},
      {"io.noise_weights", ""},
      {"io.spectrogram", "true"},
      {"io.frame", "512"},
      {"io.hop", "128"},

      {"sweep.lambda_max", "0.5,0.6,0.72,0.8,1.0"},
      {"sweep.gamma", "0.5,0.7,1.0"},

      {"run.seed", ""},
      {"run.workers", "1"},
      {"run.out_dir", "out"},
  };
  return kDefaults;
}

Config::Config() {
  for (const auto& [k, v] : defaults()) values_[k] = v;
}

Config Config::parse(std::string_view text, const std::string& origin) {
  Config cfg;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw InputError(where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string full = section.empty() ? key : section + "." + key;
    try {
      cfg.set(full, value);
    } catch (const InputError& e) {
      throw InputError(where + ": " + e.what());
    }
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void Config::set(const std::string& key, const std::string& value) {
  if (!values_.contains(key)) throw InputError("config: unknown key '" + key + "'");
  values_[key] = value;
}

bool Config::is_set(const std::string& key) const {
  auto it = values_.find(key);
  return it != values_.end() && !it->second.empty();
}

std::string Config::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::invalid_argument("config: unknown key '" + key + "'");
  return it->second;
}

long long Config::get_int(const std::string& key) const { return to_int(key, get_string(key)); }

std::uint64_t Config::get_u64(const std::string& key) const {
  const std::string v = get_string(key);
  if (v.empty()) throw InputError("config: " + key + " is required");
  errno = 0;
  char* end = nullptr;
  const unsigned long long u = std::strtoull(v.c_str(), &end, 10);
  if (v.front() == '-' || end != v.c_str() + v.size() || errno == ERANGE)
    throw InputError("config: " + key + " = '" + v + "' is not an unsigned integer");
  return u;
}

double Config::get_double(const std::string& key) const { return to_double(key, get_string(key)); }

bool Config::get_bool(const std::string& key) const {
  const std::string v = get_string(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InputError("config: " + key + " = '" + v + "' is not a boolean");
}

std::vector<double> Config::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(get_string(key))) out.push_back(to_double(key, item));
  return out;
}

std::vector<int> Config::get_int_list(const std::string& key) const {
  std::vector<int> out;
  for (const auto& item : split_list(get_string(key)))
    out.push_back(static_cast<int>(to_int(key, item)));
  return out;
}

std::string Config::resolved() const {
  std::ostringstream out;
  std::string section;
  for (const auto& [full, _] : defaults()) {
    const auto dot = full.find('.');
    const std::string sec = full.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << '\n';
      out << '[' << sec << "]\n";
      section = sec;
    }
    out << full.substr(dot + 1) << " = " << values_.at(full) << '\n';
  }
  return out.str();
}

DiffusionSchedule schedule_from(const Config& cfg) {
  try {
    return DiffusionSchedule::linear(static_cast<int>(cfg.get_int("schedule.T")),
                                     cfg.get_double("schedule.beta_start"),
                                     cfg.get_double("schedule.beta_end"));
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("config: ") + e.what());
  }
}

EpsilonNetConfig epsilon_arch_from(const Config& cfg) {
  EpsilonNetConfig c;
  c.layers = static_cast<int>(cfg.get_int("backbone.layers"));
  c.channels = static_cast<int>(cfg.get_int("backbone.channels"));
  c.kernel = static_cast<int>(cfg.get_int("backbone.kernel"));
  c.dilation_cycle = static_cast<int>(cfg.get_int("backbone.dilation_cycle"));
  c.embed_dim = static_cast<int>(cfg.get_int("backbone.embed_dim"));
  c.embed_hidden = static_cast<int>(cfg.get_int("backbone.embed_hidden"));
  return c;
}

BackboneTrainConfig backbone_train_from(const Config& cfg) {
  BackboneTrainConfig c;
  c.epochs = static_cast<int>(cfg.get_int("backbone.epochs"));
  c.lr = cfg.get_double("backbone.lr");
  c.batch = static_cast<int>(cfg.get_int("backbone.batch"));
  const auto seg = cfg.get_int("backbone.segment_length");
  if (seg < 1) throw InputError("config: backbone.segment_length must be >= 1");
  c.segment_length = static_cast<std::size_t>(seg);
  c.steps_per_epoch = static_cast<int>(cfg.get_int("backbone.steps_per_epoch"));
  c.clip_norm = cfg.get_double("backbone.clip_norm");
  return c;
}

NoiseModelConfig noise_arch_from(const Config& cfg) {
  NoiseModelConfig c;
  c.channels = static_cast<int>(cfg.get_int("noise_model.channels"));
  c.kernel = static_cast<int>(cfg.get_int("noise_model.kernel"));
  c.dilations = cfg.get_int_list("noise_model.dilations");
  c.sigma_floor = cfg.get_double("noise_model.sigma_floor");
  c.shared_trunk = cfg.get_bool("noise_model.shared_trunk");
  return c;
}

NoiseTrainConfig noise_train_from(const Config& cfg) {
  NoiseTrainConfig c;
  c.epochs = static_cast<int>(cfg.get_int("noise_model.epochs"));
  c.lr = cfg.get_double("noise_model.lr");
  const std::string mode = cfg.get_string("noise_model.draw_mode");
  if (mode == "vector")
    c.draw_mode = DrawMode::Vector;
  else if (mode == "scalar")
    c.draw_mode = DrawMode::Scalar;
  else
    throw InputError("config: noise_model.draw_mode must be 'vector' or 'scalar'");
  c.build_once = cfg.get_bool("noise_model.build_once");
  c.train_fraction = cfg.get_double("noise_model.train_fraction");
  c.validate_every = static_cast<int>(cfg.get_int("noise_model.validate_every"));
  c.workers = static_cast<int>(cfg.get_int("run.workers"));
  return c;
}

GuidanceSchedule guidance_from(const Config& cfg, const DiffusionSchedule& sched) {
  try {
    return guidance_scale(sched, cfg.get_double("guidance.lambda_max"),
                          cfg.get_double("guidance.gamma"), cfg.get_bool("guidance.ratio_inverted"));
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("config: ") + e.what());
  }
}

EnhanceOptions enhance_options_from(const Config& cfg) {
  EnhanceOptions o;
  o.grad_clip = cfg.get_double("guidance.grad_clip");
  o.reverse.noise_at_final_step = cfg.get_bool("guidance.noise_at_final_step");
  o.full_trajectory = cfg.get_bool("guidance.full_trajectory");
  const std::string sign = cfg.get_string("guidance.sign");
  if (sign == "ascent")
    o.sign = GuidanceSign::Ascent;
  else if (sign == "reversed")
    o.sign = GuidanceSign::Reversed;
  else
    throw InputError("config: guidance.sign must be 'ascent' or 'reversed'");
  return o;
}

}  // namespace gdse
