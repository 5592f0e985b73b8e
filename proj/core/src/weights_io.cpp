#include "gdse/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "gdse/error.hpp"

namespace gdse {
namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <class T>
  void uint(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i)
      out_.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    if (s.size() > 0xffff) throw std::invalid_argument("weights: name too long");
    uint(static_cast<std::uint16_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  void need(std::size_t n) {
    if (n > b_.size() - pos_) throw InputError("weights: truncated file");
  }
  template <class T>
  T uint() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string str() {
    const auto n = uint<std::uint16_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

double WeightsFile::meta_value(const std::string& name) const {
  for (const auto& [k, v] : meta)
    if (k == name) return v;
  throw InputError("weights: missing meta entry '" + name + "'");
}

std::vector<std::uint8_t> encode_weights(const WeightsFile& w) {
  Writer out;
  out.bytes("GDSE", 4);
  out.uint(WeightsFile::kVersion);
  out.uint(w.fingerprint.steps);
  out.f64(w.fingerprint.beta_start);
  out.f64(w.fingerprint.beta_end);
  out.uint(w.fingerprint.alpha_bar_hash);
  out.str(w.kind);
  out.uint(static_cast<std::uint32_t>(w.meta.size()));
  for (const auto& [k, v] : w.meta) {
    out.str(k);
    out.f64(v);
  }
  out.uint(static_cast<std::uint32_t>(w.blocks.size()));
  for (const auto& p : w.blocks) {
    out.str(p.name);
    if (p.shape.size() > 0xff) throw std::invalid_argument("weights: too many dimensions");
    out.uint(static_cast<std::uint8_t>(p.shape.size()));
    std::size_t total = 1;
    for (auto d : p.shape) {
      out.uint(static_cast<std::uint32_t>(d));
      total *= d;
    }
    if (total != p.value.size())
      throw std::invalid_argument("weights: block '" + p.name + "' shape does not match values");
    for (double v : p.value) out.f64(v);
  }
  return out.take();
}

WeightsFile decode_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "GDSE", 4) != 0)
    throw InputError("weights: bad magic (not a GDSE weights file)");
  Reader in(bytes.subspan(4));
  const auto version = in.uint<std::uint16_t>();
  if (version != WeightsFile::kVersion)
    throw InputError("weights: unsupported format version " + std::to_string(version));
  WeightsFile w;
  w.fingerprint.steps = in.uint<std::uint32_t>();
  w.fingerprint.beta_start = in.f64();
  w.fingerprint.beta_end = in.f64();
  w.fingerprint.alpha_bar_hash = in.uint<std::uint64_t>();
  w.kind = in.str();
  const auto n_meta = in.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = in.str();
    w.meta.emplace_back(std::move(k), in.f64());
  }
  const auto n_blocks = in.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_blocks; ++i) {
    Param p;
    p.name = in.str();
    const auto ndim = in.uint<std::uint8_t>();
    std::size_t total = 1;
    for (std::uint8_t d = 0; d < ndim; ++d) {
      p.shape.push_back(in.uint<std::uint32_t>());
      total *= p.shape.back();
    }
    if (total > in.remaining() / 8) throw InputError("weights: truncated block '" + p.name + "'");
    p.value.resize(total);
    for (auto& v : p.value) v = in.f64();
    p.grad.assign(total, 0.0);
    w.blocks.push_back(std::move(p));
  }
  if (!in.done()) throw InputError("weights: trailing bytes after last block");
  return w;
}

void save_weights(const WeightsFile& w, const std::filesystem::path& path) {
  const auto bytes = encode_weights(w);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed: " + path.string());
}

WeightsFile load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_weights(bytes);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

WeightsFile to_weights(const EpsilonNet& net, const ScheduleFingerprint& fp) {
  const auto& c = net.config();
  WeightsFile w;
  w.fingerprint = fp;
  w.kind = kEpsilonNetKind;
  w.meta = {{"layers", c.layers},
            {"channels", c.channels},
            {"kernel", c.kernel},
            {"dilation_cycle", c.dilation_cycle},
            {"embed_dim", c.embed_dim},
            {"embed_hidden", c.embed_hidden}};
  w.blocks = net.params();
  return w;
}

EpsilonNet epsilon_net_from(const WeightsFile& w) {
  if (w.kind != kEpsilonNetKind)
    throw InputError("weights: expected kind '" + std::string(kEpsilonNetKind) + "', found '" +
                     w.kind + "'");
  EpsilonNetConfig c;
  c.layers = static_cast<int>(w.meta_value("layers"));
  c.channels = static_cast<int>(w.meta_value("channels"));
  c.kernel = static_cast<int>(w.meta_value("kernel"));
  c.dilation_cycle = static_cast<int>(w.meta_value("dilation_cycle"));
  c.embed_dim = static_cast<int>(w.meta_value("embed_dim"));
  c.embed_hidden = static_cast<int>(w.meta_value("embed_hidden"));
  try {
    EpsilonNet net(c, w.blocks);
    net.set_fingerprint(w.fingerprint);
    return net;
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("weights: ") + e.what());
  }
}

WeightsFile to_weights(const NoiseModel& model) {
  const auto& c = model.config();
  WeightsFile w;
  w.fingerprint = *model.fingerprint();
  w.kind = kNoiseBankKind;
  w.meta = {{"channels", c.channels},
            {"kernel", c.kernel},
            {"sigma_floor", c.sigma_floor},
            {"shared_trunk", c.shared_trunk ? 1.0 : 0.0},
            {"num_dilations", static_cast<double>(c.dilations.size())}};
  for (std::size_t i = 0; i < c.dilations.size(); ++i)
    w.meta.emplace_back("dilation" + std::to_string(i), c.dilations[i]);
  w.blocks = model.params();
  return w;
}

NoiseModel noise_model_from(const WeightsFile& w) {
  if (w.kind != kNoiseBankKind)
    throw InputError("weights: expected kind '" + std::string(kNoiseBankKind) + "', found '" +
                     w.kind + "'");
  NoiseModelConfig c;
  c.channels = static_cast<int>(w.meta_value("channels"));
  c.kernel = static_cast<int>(w.meta_value("kernel"));
  c.sigma_floor = w.meta_value("sigma_floor");
  c.shared_trunk = w.meta_value("shared_trunk") != 0.0;
  const auto n = static_cast<std::size_t>(w.meta_value("num_dilations"));
  c.dilations.clear();
  for (std::size_t i = 0; i < n; ++i)
    c.dilations.push_back(static_cast<int>(w.meta_value("dilation" + std::to_string(i))));
  try {
    return NoiseModel(c, w.fingerprint, w.blocks);
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("weights: ") + e.what());
  }
}

DiffusionSchedule schedule_from_fingerprint(const ScheduleFingerprint& fp) {
  try {
    auto sched = DiffusionSchedule::linear(static_cast<int>(fp.steps), fp.beta_start, fp.beta_end);
    if (!(sched.fingerprint() == fp))
      throw InputError("weights: schedule fingerprint does not match a linear schedule");
    return sched;
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("weights: invalid schedule in header: ") + e.what());
  }
}

}  // namespace gdse
