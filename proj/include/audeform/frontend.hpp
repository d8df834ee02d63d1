#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace audeform {

struct Waveform {
  std::vector<double> samples;
  double sample_rate = 0.0;
};

// Log-compressed mel energies, h mel bins by T frames, row-major.
struct Spectrogram {
  std::size_t h = 0, T = 0;
  std::vector<double> values;

  Spectrogram() = default;
  Spectrogram(std::size_t h_, std::size_t t_) : h(h_), T(t_), values(h_ * t_, 0.0) {}
  double& at(std::size_t i, std::size_t j) { return values[i * T + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * T + j]; }
};

struct FbankConfig {
  std::size_t n_mels = 128;
  std::size_t frame_length = 1024;  // samples; FFT size is the next power of two
  std::size_t frame_shift = 430;    // ~10 ms at 43 kHz
  double f_min = 0.0;
  double f_max = 0.0;  // 0 means Nyquist
};

// HTK mel scale.
double hz_to_mel(double f);
double mel_to_hz(double m);

// Hann window, magnitude-squared FFT, triangular mel filters, natural log of
// (energy + 1e-10). T = 1 + floor((len - frame_length) / frame_shift).
Spectrogram fbank(const Waveform& w, const FbankConfig& cfg);

// Continuous triangular response of filter i at frequency f; interior filters
// peak at exactly 1 at their center.
double mel_filter_response(const FbankConfig& cfg, double sample_rate, std::size_t i, double f);
double mel_filter_center_hz(const FbankConfig& cfg, double sample_rate, std::size_t i);

// On-disk format: magic "DSPC", u32 version = 1, u32 h, u32 T, then h*T
// float32, all little-endian, row-major with the mel bin as the slow axis.
void write_spec(const Spectrogram& s, const std::string& path);
Spectrogram read_spec(const std::string& path);

// RIFF/WAVE (PCM16 or float32, channels mixed down) or raw float32 samples
// with the rate supplied by the caller.
Waveform read_audio_file(const std::string& path, double raw_rate = 0.0);

}  // namespace audeform
