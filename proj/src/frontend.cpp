#include "audeform/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "audeform/error.hpp"

namespace audeform {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kLogFloor = 1e-10;

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative radix-2 FFT on interleaved complex data.
void fft_radix2(std::vector<double>& re, std::vector<double>& im) {
  const std::size_t n = re.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (std::size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (std::size_t j = 0; j < len / 2; ++j) {
        const double ur = re[i + j], ui = im[i + j];
        const double vr = re[i + j + len / 2] * cr - im[i + j + len / 2] * ci;
        const double vi = re[i + j + len / 2] * ci + im[i + j + len / 2] * cr;
        re[i + j] = ur + vr;
        im[i + j] = ui + vi;
        re[i + j + len / 2] = ur - vr;
        im[i + j + len / 2] = ui - vi;
        const double nr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = nr;
      }
    }
  }
}

struct MelPoints {
  std::vector<double> mel;  // n_mels + 2 boundaries, linear in mel
};

MelPoints mel_points(const FbankConfig& cfg, double sample_rate) {
  const double f_max = (cfg.f_max > 0.0) ? cfg.f_max : sample_rate / 2.0;
  require(cfg.n_mels >= 1, Err::BadConfig, "fbank needs at least one mel bin");
  require(cfg.f_min >= 0.0 && f_max > cfg.f_min, Err::BadConfig, "fbank frequency range");
  MelPoints p;
  const double lo = hz_to_mel(cfg.f_min), hi = hz_to_mel(f_max);
  p.mel.resize(cfg.n_mels + 2);
  for (std::size_t i = 0; i < p.mel.size(); ++i)
    p.mel[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1);
  return p;
}

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

bool read_u32(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

void write_f32(std::ostream& os, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  write_u32(os, bits);
}

bool read_f32(std::istream& is, float& f) {
  std::uint32_t bits;
  if (!read_u32(is, bits)) return false;
  std::memcpy(&f, &bits, 4);
  return true;
}

}  // namespace

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }

double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

double mel_filter_response(const FbankConfig& cfg, double sample_rate, std::size_t i,
                           double f) {
  const MelPoints p = mel_points(cfg, sample_rate);
  require(i < cfg.n_mels, Err::BadConfig, "filter index out of range");
  const double m = hz_to_mel(f);
  const double left = p.mel[i], center = p.mel[i + 1], right = p.mel[i + 2];
  double r = 0.0;
  if (m > left && m < right)
    r = (m <= center) ? (m - left) / (center - left) : (right - m) / (right - center);
  return std::max(0.0, r);
}

double mel_filter_center_hz(const FbankConfig& cfg, double sample_rate, std::size_t i) {
  const MelPoints p = mel_points(cfg, sample_rate);
  require(i < cfg.n_mels, Err::BadConfig, "filter index out of range");
  return mel_to_hz(p.mel[i + 1]);
}

Spectrogram fbank(const Waveform& w, const FbankConfig& cfg) {
  require(w.sample_rate > 0.0, Err::BadConfig, "sample rate must be positive");
  require(cfg.n_mels >= 1, Err::BadConfig, "fbank needs at least one mel bin");
  require(cfg.frame_length >= 2 && cfg.frame_shift >= 1, Err::BadConfig,
          "fbank frame geometry");
  require(w.samples.size() >= cfg.frame_length, Err::TooShort,
          "waveform shorter than one frame");
  for (double s : w.samples)
    require(std::isfinite(s), Err::NonFiniteInput, "waveform has NaN/Inf");

  const std::size_t n_frames = 1 + (w.samples.size() - cfg.frame_length) / cfg.frame_shift;
  const std::size_t nfft = next_pow2(cfg.frame_length);
  const std::size_t n_bins = nfft / 2 + 1;

  std::vector<double> window(cfg.frame_length);
  for (std::size_t i = 0; i < cfg.frame_length; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                     static_cast<double>(cfg.frame_length - 1));

  // Triangular weights sampled at the FFT bin frequencies.
  const double hz_per_bin = w.sample_rate / static_cast<double>(nfft);
  std::vector<double> filters(cfg.n_mels * n_bins, 0.0);
  for (std::size_t m = 0; m < cfg.n_mels; ++m)
    for (std::size_t b = 0; b < n_bins; ++b)
      filters[m * n_bins + b] =
          mel_filter_response(cfg, w.sample_rate, m, static_cast<double>(b) * hz_per_bin);

  Spectrogram spec(cfg.n_mels, n_frames);
  std::vector<double> re(nfft), im(nfft), power(n_bins);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const double* frame = w.samples.data() + t * cfg.frame_shift;
    std::fill(re.begin(), re.end(), 0.0);
    std::fill(im.begin(), im.end(), 0.0);
    for (std::size_t i = 0; i < cfg.frame_length; ++i) re[i] = frame[i] * window[i];
    fft_radix2(re, im);
    for (std::size_t b = 0; b < n_bins; ++b) power[b] = re[b] * re[b] + im[b] * im[b];
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      double e = 0.0;
      const double* f = filters.data() + m * n_bins;
      for (std::size_t b = 0; b < n_bins; ++b) e += f[b] * power[b];
      spec.at(m, t) = std::log(e + kLogFloor);
    }
  }
  return spec;
}

void write_spec(const Spectrogram& s, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), Err::IoError, "cannot open " + path + " for writing");
  os.write("DSPC", 4);
  write_u32(os, 1);
  write_u32(os, static_cast<std::uint32_t>(s.h));
  write_u32(os, static_cast<std::uint32_t>(s.T));
  for (double v : s.values) write_f32(os, static_cast<float>(v));
  require(os.good(), Err::IoError, "write failed for " + path);
}

Spectrogram read_spec(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), Err::IoError, "cannot open " + path);
  char magic[4];
  require(static_cast<bool>(is.read(magic, 4)), Err::TruncatedFile, path + ": no header");
  require(std::memcmp(magic, "DSPC", 4) == 0, Err::BadMagic, path + ": not a spectrogram file");
  std::uint32_t version, h, t;
  require(read_u32(is, version) && read_u32(is, h) && read_u32(is, t), Err::TruncatedFile,
          path + ": truncated header");
  require(version == 1, Err::IoError, path + ": unsupported version");
  Spectrogram s(h, t);
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    float f;
    require(read_f32(is, f), Err::TruncatedFile, path + ": truncated payload");
    s.values[i] = static_cast<double>(f);
  }
  return s;
}

Waveform read_audio_file(const std::string& path, double raw_rate) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), Err::IoError, "cannot open " + path);
  char riff[4];
  const bool has_riff = static_cast<bool>(is.read(riff, 4));
  if (has_riff && std::memcmp(riff, "RIFF", 4) == 0) {
    std::uint32_t chunk_size;
    char wave[4];
    require(read_u32(is, chunk_size) && static_cast<bool>(is.read(wave, 4)) &&
                std::memcmp(wave, "WAVE", 4) == 0,
            Err::BadMagic, path + ": RIFF without WAVE");
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    Waveform w;
    bool have_fmt = false;
    while (true) {
      char tag[4];
      std::uint32_t size;
      if (!is.read(tag, 4) || !read_u32(is, size)) break;
      if (std::memcmp(tag, "fmt ", 4) == 0) {
        std::vector<char> fmt(size);
        require(static_cast<bool>(is.read(fmt.data(), size)) && size >= 16,
                Err::TruncatedFile, path + ": bad fmt chunk");
        std::memcpy(&format, fmt.data(), 2);
        std::memcpy(&channels, fmt.data() + 2, 2);
        std::memcpy(&rate, fmt.data() + 4, 4);
        std::memcpy(&bits, fmt.data() + 14, 2);
        have_fmt = true;
      } else if (std::memcmp(tag, "data", 4) == 0) {
        require(have_fmt, Err::BadMagic, path + ": data before fmt");
        require(channels >= 1, Err::BadConfig, path + ": zero channels");
        std::vector<char> raw(size);
        require(static_cast<bool>(is.read(raw.data(), size)), Err::TruncatedFile,
                path + ": truncated data chunk");
        w.sample_rate = static_cast<double>(rate);
        if (format == 1 && bits == 16) {
          const std::size_t n = size / (2 * channels);
          w.samples.resize(n);
          for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t c = 0; c < channels; ++c) {
              std::int16_t v;
              std::memcpy(&v, raw.data() + (i * channels + c) * 2, 2);
              acc += static_cast<double>(v) / 32768.0;
            }
            w.samples[i] = acc / channels;
          }
        } else if (format == 3 && bits == 32) {
          const std::size_t n = size / (4 * channels);
          w.samples.resize(n);
          for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t c = 0; c < channels; ++c) {
              float v;
              std::memcpy(&v, raw.data() + (i * channels + c) * 4, 4);
              acc += static_cast<double>(v);
            }
            w.samples[i] = acc / channels;
          }
        } else {
          fail(Err::BadConfig, path + ": only PCM16 and float32 WAV are supported");
        }
        return w;
      } else {
        is.seekg(size + (size & 1), std::ios::cur);
      }
    }
    fail(Err::TruncatedFile, path + ": no data chunk");
  }
  // Raw float32 little-endian samples.
  require(raw_rate > 0.0, Err::BadConfig, path + ": raw PCM needs an explicit sample rate");
  is.clear();
  is.seekg(0, std::ios::end);
  const std::streamoff bytes = is.tellg();
  is.seekg(0, std::ios::beg);
  require(bytes % 4 == 0, Err::TruncatedFile, path + ": raw float32 size not a multiple of 4");
  Waveform w;
  w.sample_rate = raw_rate;
  w.samples.resize(static_cast<std::size_t>(bytes / 4));
  for (double& s : w.samples) {
    float f;
    require(read_f32(is, f), Err::TruncatedFile, path + ": short read");
    s = static_cast<double>(f);
  }
  return w;
}

}  // namespace audeform
