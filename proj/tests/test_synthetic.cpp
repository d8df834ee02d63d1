#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "audeform/error.hpp"
#include "audeform/frontend.hpp"
#include "audeform/synthetic.hpp"

using namespace audeform;

TEST_CASE("balanced classes and deterministic waveforms") {
  EventSpec tone;
  tone.class_id = 0;
  tone.kind = EventKind::tone;
  EventSpec chirp;
  chirp.class_id = 1;
  chirp.kind = EventKind::chirp;
  chirp.f_lo = 600;
  chirp.f_hi = 1200;
  EventSpec burst;
  burst.class_id = 2;
  burst.kind = EventKind::noise_burst;
  EventSpec stack;
  stack.class_id = 3;
  stack.kind = EventKind::harmonic_stack;
  const std::vector<EventSpec> classes = {tone, chirp, burst, stack};

  const auto a = gen_dataset(16, classes, 16000.0, 0.5, 99);
  CHECK(a.size() == 64);
  std::size_t per_class[4] = {0, 0, 0, 0};
  for (const Clip& c : a) ++per_class[c.label];
  for (std::size_t n : per_class) CHECK(n == 16);

  const auto b = gen_dataset(16, classes, 16000.0, 0.5, 99);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a[i].wave.samples == b[i].wave.samples);

  const auto c = gen_dataset(16, classes, 16000.0, 0.5, 100);
  CHECK(a[0].wave.samples != c[0].wave.samples);
}

TEST_CASE("waveform peak stays within unit amplitude") {
  const auto clips = gen_shifted_task(5, 8, 22050.0, 0.4);
  for (const Clip& c : clips) {
    double peak = 0.0;
    for (double s : c.wave.samples) peak = std::max(peak, std::fabs(s));
    CHECK(peak <= 1.0);
  }
}

TEST_CASE("tone at a filter center dominates that mel bin") {
  FbankConfig fc;
  fc.n_mels = 16;
  fc.frame_length = 1024;
  fc.frame_shift = 430;
  const double rate = 43000.0;
  const std::size_t target = 9;
  EventSpec tone;
  tone.class_id = 0;
  tone.kind = EventKind::tone;
  tone.f_lo = tone.f_hi = mel_filter_center_hz(fc, rate, target);
  tone.duration = 0.4;  // fills the clip, so every frame sees the tone
  tone.snr_db = 60.0;
  const auto clips = gen_dataset(2, {tone}, rate, 0.4, 7);
  for (const Clip& c : clips) {
    const Spectrogram s = fbank(c.wave, fc);
    for (std::size_t t = 0; t < s.T; ++t) {
      std::size_t best = 0;
      for (std::size_t m = 1; m < s.h; ++m)
        if (s.at(m, t) > s.at(best, t)) best = m;
      CHECK(best == target);
    }
  }
}

TEST_CASE("shifted task: labels track kind, positions vary") {
  const auto clips = gen_shifted_task(17, 12, 22050.0, 0.5);
  CHECK(clips.size() == 48);
  std::set<double> onsets;
  for (const Clip& c : clips) {
    CHECK(c.label == static_cast<std::size_t>(c.kind));
    onsets.insert(c.onset);
  }
  CHECK(onsets.size() > 10);  // positions genuinely vary
}

TEST_CASE("bad event specs are rejected") {
  EventSpec above_nyquist;
  above_nyquist.f_lo = above_nyquist.f_hi = 9000.0;
  CHECK_THROWS_AS(gen_dataset(1, {above_nyquist}, 16000.0, 0.5, 1), Error);

  EventSpec too_long;
  too_long.duration = 2.0;
  CHECK_THROWS_AS(gen_dataset(1, {too_long}, 16000.0, 0.5, 1), Error);

  CHECK_THROWS_AS(gen_dataset(0, {}, 16000.0, 0.5, 1), Error);
}
