#include "gdse/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <stdexcept>
#include <string>

#include "gdse/error.hpp"
#include "gdse/numerics/rng.hpp"

namespace gdse {
namespace {

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint32_t>(b[off]) | (static_cast<std::uint32_t>(b[off + 1]) << 8) |
         (static_cast<std::uint32_t>(b[off + 2]) << 16) |
         (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint16_t>(b[off] | (b[off + 1] << 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t off, const char* tag) {
  return std::memcmp(b.data() + off, tag, 4) == 0;
}

void peak_normalize(std::vector<double>& x, double peak) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  if (m > 0.0)
    for (auto& v : x) v *= peak / m;
}

}  // namespace

std::int16_t to_pcm16(double x) {
  const double scaled = std::round(x * 32768.0);
  if (!(scaled == scaled)) return 0;
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

Wave decode_wav(std::span<const std::uint8_t> b) {
  if (b.size() < 12 || !tag_is(b, 0, "RIFF") || !tag_is(b, 8, "WAVE"))
    throw InputError("wav: missing RIFF/WAVE header");
  std::size_t off = 12;
  bool have_fmt = false;
  Wave wave;
  while (off + 8 <= b.size()) {
    const std::uint32_t len = read_u32(b, off + 4);
    const std::size_t body = off + 8;
    if (len > b.size() - body) throw InputError("wav: chunk length exceeds file size");
    if (tag_is(b, off, "fmt ")) {
      if (len < 16) throw InputError("wav: fmt chunk too short");
      const std::uint16_t format = read_u16(b, body);
      const std::uint16_t channels = read_u16(b, body + 2);
      wave.sample_rate = read_u32(b, body + 4);
      const std::uint16_t block_align = read_u16(b, body + 12);
      const std::uint16_t bits = read_u16(b, body + 14);
      if (format != 1)
        throw InputError("wav: unsupported encoding (format tag " + std::to_string(format) +
                         "); only PCM is supported");
      if (channels != 1)
        throw InputError("wav: " + std::to_string(channels) + " channels; only mono is supported");
      if (bits != 16 || block_align != 2)
        throw InputError("wav: " + std::to_string(bits) + "-bit samples; only 16-bit is supported");
      if (wave.sample_rate == 0) throw InputError("wav: zero sample rate");
      have_fmt = true;
    } else if (tag_is(b, off, "data")) {
      if (!have_fmt) throw InputError("wav: data chunk before fmt chunk");
      if (len % 2 != 0) throw InputError("wav: odd data length for 16-bit samples");
      wave.samples.resize(len / 2);
      for (std::size_t i = 0; i < wave.samples.size(); ++i) {
        const auto raw = static_cast<std::int16_t>(read_u16(b, body + 2 * i));
        wave.samples[i] = static_cast<double>(raw) / 32768.0;
      }
      return wave;
    }
    off = body + len + (len & 1U);
  }
  throw InputError(have_fmt ? "wav: no data chunk" : "wav: no fmt chunk");
}

Wave read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_wav(const Wave& wave) {
  const auto data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, wave.sample_rate);
  put_u32(out, wave.sample_rate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_bytes);
  for (double x : wave.samples) put_u16(out, static_cast<std::uint16_t>(to_pcm16(x)));
  return out;
}

void write_wav(const Wave& wave, const std::filesystem::path& path) {
  const auto bytes = encode_wav(wave);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed: " + path.string());
}

void require_sample_rate(const Wave& wave, std::uint32_t rate) {
  if (wave.sample_rate != rate)
    throw InputError("sample rate " + std::to_string(wave.sample_rate) + " Hz is not supported; "
                     "resample to " + std::to_string(rate) + " Hz first");
}

double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

double snr_db(std::span<const double> clean, std::span<const double> noise) {
  return 10.0 * std::log10(energy(clean) / energy(noise));
}

Mixture mix_at_snr(const Wave& clean, const Wave& noise, double snr, std::size_t noise_offset) {
  if (clean.sample_rate != noise.sample_rate)
    throw std::invalid_argument("mix_at_snr: sample rates differ");
  if (!std::isfinite(snr)) throw std::invalid_argument("mix_at_snr: SNR must be finite");
  if (noise_offset > noise.size() || noise.size() - noise_offset < clean.size())
    throw std::invalid_argument("mix_at_snr: noise shorter than clean signal");
  const std::span<const double> w(noise.samples.data() + noise_offset, clean.size());
  const double ex = energy(clean.samples), ew = energy(w);
  if (!(ex > 0.0)) throw std::invalid_argument("mix_at_snr: clean signal has zero energy");
  if (!(ew > 0.0)) throw std::invalid_argument("mix_at_snr: noise has zero energy");

  Mixture m;
  m.gain = std::sqrt(ex / ew) * std::pow(10.0, -snr / 20.0);
  m.scaled_noise.sample_rate = clean.sample_rate;
  m.noisy.sample_rate = clean.sample_rate;
  m.scaled_noise.samples.resize(clean.size());
  m.noisy.samples.resize(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    m.scaled_noise.samples[i] = m.gain * w[i];
    m.noisy.samples[i] = clean.samples[i] + m.scaled_noise.samples[i];
  }
  return m;
}

CorpusKind parse_corpus_kind(std::string_view name) {
  if (name == "harmonic-voiced") return CorpusKind::HarmonicVoiced;
  if (name == "am-noise") return CorpusKind::AmNoise;
  if (name == "silence-mixed") return CorpusKind::SilenceMixed;
  throw std::invalid_argument("unknown corpus kind '" + std::string(name) +
                              "' (expected harmonic-voiced, am-noise or silence-mixed)");
}

std::string_view corpus_kind_name(CorpusKind kind) {
  switch (kind) {
    case CorpusKind::HarmonicVoiced: return "harmonic-voiced";
    case CorpusKind::AmNoise: return "am-noise";
    case CorpusKind::SilenceMixed: return "silence-mixed";
  }
  return "?";
}

Wave synth_harmonic_clip(std::uint64_t seed, std::size_t length, std::uint32_t rate,
                         HarmonicParams* params) {
  Rng rng(seed);
  HarmonicParams hp;
  hp.f0 = rng.uniform(100.0, 300.0);
  hp.harmonics = static_cast<int>(rng.uniform_int(3, 8));
  hp.vibrato_rate = rng.uniform(4.0, 7.0);
  hp.vibrato_depth = rng.uniform(0.005, 0.02);
  std::vector<double> amps(static_cast<std::size_t>(hp.harmonics));
  std::vector<double> phases(amps.size());
  for (std::size_t h = 0; h < amps.size(); ++h) {
    amps[h] = rng.uniform(0.5, 1.0) / static_cast<double>(h + 1);
    phases[h] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  const double vib_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double env_rate = rng.uniform(1.0, 3.0);

  Wave w;
  w.sample_rate = rate;
  w.samples.resize(length);
  const double fs = rate;
  double phase = 0.0;
  const std::size_t ramp = std::min<std::size_t>(length / 8, rate / 50);
  for (std::size_t n = 0; n < length; ++n) {
    const double time = static_cast<double>(n) / fs;
    const double f = hp.f0 * (1.0 + hp.vibrato_depth *
                                        std::sin(2.0 * std::numbers::pi * hp.vibrato_rate * time +
                                                 vib_phase));
    phase += 2.0 * std::numbers::pi * f / fs;
    double s = 0.0;
    for (std::size_t h = 0; h < amps.size(); ++h) {
      if (hp.f0 * static_cast<double>(h + 1) * (1.0 + hp.vibrato_depth) >= fs / 2) break;
      s += amps[h] * std::sin(static_cast<double>(h + 1) * phase + phases[h]);
    }
    double env = 0.75 + 0.25 * std::sin(2.0 * std::numbers::pi * env_rate * time);
    if (ramp > 0) {
      if (n < ramp) env *= 0.5 - 0.5 * std::cos(std::numbers::pi * n / ramp);
      if (length - 1 - n < ramp) env *= 0.5 - 0.5 * std::cos(std::numbers::pi * (length - 1 - n) / ramp);
    }
    w.samples[n] = env * s;
  }
  peak_normalize(w.samples, 0.5);
  if (params != nullptr) *params = hp;
  return w;
}

Wave white_noise(std::size_t length, double sd, std::uint64_t seed, std::uint32_t rate) {
  Rng rng(seed);
  Wave w;
  w.sample_rate = rate;
  w.samples.resize(length);
  for (auto& v : w.samples) v = sd * rng.normal();
  return w;
}

std::vector<Wave> synth_corpus(CorpusKind kind, std::size_t count, std::size_t length,
                               std::uint64_t seed, std::uint32_t rate) {
  std::vector<Wave> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t clip_seed = Rng::derive_seed(seed, i);
    switch (kind) {
      case CorpusKind::HarmonicVoiced:
        out.push_back(synth_harmonic_clip(clip_seed, length, rate));
        break;
      case CorpusKind::AmNoise: {
        Rng rng(clip_seed);
        const double fm = rng.uniform(1.0, 4.0);
        const double depth = rng.uniform(0.3, 0.8);
        const double ph = rng.uniform(0.0, 2.0 * std::numbers::pi);
        Wave w;
        w.sample_rate = rate;
        w.samples.resize(length);
        for (std::size_t n = 0; n < length; ++n) {
          const double time = static_cast<double>(n) / rate;
          w.samples[n] =
              (1.0 + depth * std::sin(2.0 * std::numbers::pi * fm * time + ph)) * rng.normal();
        }
        peak_normalize(w.samples, 0.5);
        out.push_back(std::move(w));
        break;
      }
      case CorpusKind::SilenceMixed: {
        Rng rng(clip_seed);
        Wave w;
        w.sample_rate = rate;
        w.samples.assign(length, 0.0);
        // Alternate voiced bursts (40-70% of a slot) with silence.
        const std::size_t slots = std::max<std::size_t>(1, length / (rate / 4 + 1) + 1);
        const std::size_t slot_len = length / slots;
        for (std::size_t s = 0; s < slots && slot_len > 0; ++s) {
          const auto burst =
              static_cast<std::size_t>(static_cast<double>(slot_len) * rng.uniform(0.4, 0.7));
          if (burst == 0) continue;
          const auto clip = synth_harmonic_clip(rng.next_u64(), burst, rate);
          const std::size_t start = s * slot_len;
          for (std::size_t n = 0; n < burst && start + n < length; ++n)
            w.samples[start + n] = clip.samples[n];
        }
        peak_normalize(w.samples, 0.5);
        out.push_back(std::move(w));
        break;
      }
    }
  }
  return out;
}

}  // namespace gdse
