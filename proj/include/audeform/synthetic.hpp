#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "audeform/frontend.hpp"

namespace audeform {

enum class EventKind { tone, chirp, noise_burst, harmonic_stack };

EventKind event_kind_from(const std::string& s);
const char* event_kind_name(EventKind k);

struct EventSpec {
  std::size_t class_id = 0;
  EventKind kind = EventKind::tone;
  double f_lo = 1000.0, f_hi = 1000.0;  // Hz; per-clip frequency drawn uniformly
  double duration = 0.5;                // seconds of event within the clip
  double snr_db = 20.0;                 // event RMS over background RMS
};

struct Clip {
  Waveform wave;
  std::size_t label = 0;
  EventKind kind = EventKind::tone;
  double onset = 0.0;  // seconds
  double freq = 0.0;   // Hz (0 for noise bursts)
};

// Class-balanced labeled clips: background noise plus one event per clip at
// the event's SNR, events centered in time. Deterministic per seed; peak
// amplitude normalized to at most 1.
std::vector<Clip> gen_dataset(std::size_t n_per_class, const std::vector<EventSpec>& classes,
                              double sample_rate, double clip_duration, std::uint64_t seed);

// Four classes, one per event kind, with the event position (and base
// frequency) drawn uniformly per clip. Labels depend only on the kind.
std::vector<Clip> gen_shifted_task(std::uint64_t seed, std::size_t n_per_class = 16,
                                   double sample_rate = 43000.0, double clip_duration = 1.0);

}  // namespace audeform
