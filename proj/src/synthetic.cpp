#include "audeform/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "audeform/error.hpp"
#include "audeform/rng.hpp"

namespace audeform {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

double clip_rms(const std::vector<double>& v, std::size_t from, std::size_t to) {
  double acc = 0.0;
  for (std::size_t i = from; i < to; ++i) acc += v[i] * v[i];
  const std::size_t n = to - from;
  return n ? std::sqrt(acc / static_cast<double>(n)) : 0.0;
}

// One event waveform with 10 ms cosine ramps at both ends, unit peak-ish
// amplitude before SNR scaling.
std::vector<double> render_event(EventKind kind, double freq, std::size_t len, double rate,
                                 Rng& rng) {
  std::vector<double> e(len, 0.0);
  const double nyquist_cap = 0.45 * rate;
  switch (kind) {
    case EventKind::tone:
      for (std::size_t i = 0; i < len; ++i)
        e[i] = std::sin(kTwoPi * freq * static_cast<double>(i) / rate);
      break;
    case EventKind::chirp: {
      const double f1 = std::min(2.0 * freq, nyquist_cap);
      double phase = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const double frac = static_cast<double>(i) / static_cast<double>(len);
        const double f = freq + (f1 - freq) * frac;
        phase += kTwoPi * f / rate;
        e[i] = std::sin(phase);
      }
      break;
    }
    case EventKind::noise_burst:
      for (std::size_t i = 0; i < len; ++i) e[i] = rng.uniform(-1.0, 1.0);
      break;
    case EventKind::harmonic_stack:
      for (std::size_t i = 0; i < len; ++i) {
        double v = 0.0;
        for (std::size_t k = 1; k <= 5; ++k) {
          const double fk = freq * static_cast<double>(k);
          if (fk > nyquist_cap) break;
          v += std::sin(kTwoPi * fk * static_cast<double>(i) / rate) / static_cast<double>(k);
        }
        e[i] = v;
      }
      break;
  }
  const std::size_t ramp = std::min<std::size_t>(len / 4, static_cast<std::size_t>(0.01 * rate));
  for (std::size_t i = 0; i < ramp; ++i) {
    const double w = 0.5 - 0.5 * std::cos(kTwoPi * 0.5 * static_cast<double>(i) /
                                          static_cast<double>(ramp));
    e[i] *= w;
    e[len - 1 - i] *= w;
  }
  return e;
}

Clip make_clip(const EventSpec& spec, double sample_rate, double clip_duration, bool shifted,
               Rng& rng) {
  require(spec.duration > 0.0 && spec.duration <= clip_duration, Err::BadSpec,
          "event duration must be positive and fit the clip");
  require(spec.f_hi < sample_rate / 2.0 && spec.f_lo <= spec.f_hi && spec.f_lo > 0.0,
          Err::BadSpec, "event frequencies must sit below Nyquist");
  require(spec.snr_db >= -60.0 && spec.snr_db <= 120.0, Err::BadSpec, "unreasonable SNR");

  const std::size_t n = static_cast<std::size_t>(std::llround(clip_duration * sample_rate));
  const std::size_t ev_len =
      static_cast<std::size_t>(std::llround(spec.duration * sample_rate));
  Clip clip;
  clip.label = spec.class_id;
  clip.kind = spec.kind;
  clip.freq = (spec.kind == EventKind::noise_burst) ? 0.0 : rng.uniform(spec.f_lo, spec.f_hi);
  const std::size_t max_start = n - ev_len;
  const std::size_t start =
      shifted ? static_cast<std::size_t>(rng.below(max_start + 1)) : max_start / 2;
  clip.onset = static_cast<double>(start) / sample_rate;

  clip.wave.sample_rate = sample_rate;
  clip.wave.samples.assign(n, 0.0);
  const double noise_rms = 0.01;
  for (double& s : clip.wave.samples) s = rng.uniform(-1.0, 1.0) * noise_rms * 1.7320508;

  std::vector<double> ev = render_event(spec.kind, clip.freq, ev_len, sample_rate, rng);
  const double ev_rms = clip_rms(ev, 0, ev.size());
  const double target_rms = noise_rms * std::pow(10.0, spec.snr_db / 20.0);
  const double gain = (ev_rms > 0.0) ? target_rms / ev_rms : 0.0;
  for (std::size_t i = 0; i < ev_len; ++i) clip.wave.samples[start + i] += gain * ev[i];

  double peak = 0.0;
  for (double s : clip.wave.samples) peak = std::max(peak, std::fabs(s));
  if (peak > 1.0)
    for (double& s : clip.wave.samples) s /= peak;
  return clip;
}

}  // namespace

EventKind event_kind_from(const std::string& s) {
  if (s == "tone") return EventKind::tone;
  if (s == "chirp") return EventKind::chirp;
  if (s == "noise-burst" || s == "noise_burst") return EventKind::noise_burst;
  if (s == "harmonic-stack" || s == "harmonic_stack") return EventKind::harmonic_stack;
  fail(Err::BadSpec, "unknown event kind '" + s + "'");
}

const char* event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::tone: return "tone";
    case EventKind::chirp: return "chirp";
    case EventKind::noise_burst: return "noise-burst";
    case EventKind::harmonic_stack: return "harmonic-stack";
  }
  return "?";
}

std::vector<Clip> gen_dataset(std::size_t n_per_class, const std::vector<EventSpec>& classes,
                              double sample_rate, double clip_duration, std::uint64_t seed) {
  require(!classes.empty() && n_per_class >= 1, Err::BadSpec, "empty dataset request");
  require(sample_rate > 0.0 && clip_duration > 0.0, Err::BadSpec, "bad clip geometry");
  Rng rng(seed);
  std::vector<Clip> out;
  out.reserve(classes.size() * n_per_class);
  for (const EventSpec& spec : classes)
    for (std::size_t i = 0; i < n_per_class; ++i)
      out.push_back(make_clip(spec, sample_rate, clip_duration, false, rng));
  return out;
}

std::vector<Clip> gen_shifted_task(std::uint64_t seed, std::size_t n_per_class,
                                   double sample_rate, double clip_duration) {
  const EventKind kinds[4] = {EventKind::tone, EventKind::chirp, EventKind::noise_burst,
                              EventKind::harmonic_stack};
  Rng rng(seed);
  std::vector<Clip> out;
  out.reserve(4 * n_per_class);
  for (std::size_t c = 0; c < 4; ++c) {
    EventSpec spec;
    spec.class_id = c;
    spec.kind = kinds[c];
    spec.f_lo = 500.0;
    spec.f_hi = std::min(8000.0, 0.4 * sample_rate);
    spec.duration = clip_duration * 0.25;
    spec.snr_db = 20.0;
    for (std::size_t i = 0; i < n_per_class; ++i)
      out.push_back(make_clip(spec, sample_rate, clip_duration, true, rng));
  }
  return out;
}

}  // namespace audeform
