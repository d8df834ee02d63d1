#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>

#include "audeform/kernels.hpp"
#include "audeform/reference.hpp"
#include "audeform/rng.hpp"
#include "audeform/tensor.hpp"

// Times each parallel kernel against its serial reference and reports the
// max absolute difference alongside the speedup.

using namespace audeform;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename F>
double time_it(F&& f, int reps) {
  f();  // warm up
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) f();
  return seconds_since(t0) / reps;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    worst = std::max(worst, std::fabs(a.data[i] - b.data[i]));
  return worst;
}

void report(const char* name, double serial_s, double parallel_s, double diff) {
  std::printf("%-22s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx   max|diff| %.2e\n",
              name, serial_s * 1e3, parallel_s * 1e3, serial_s / parallel_s, diff);
}

void bench_matmul(std::size_t n, int reps, Rng& rng) {
  const Tensor a = Tensor::uniform({n, n}, -1.0, 1.0, rng);
  const Tensor b = Tensor::uniform({n, n}, -1.0, 1.0, rng);
  Tensor c({n, n});
  Tensor ref;
  const double ts = time_it([&] { ref = reference::matmul(a, b); }, reps);
  const double tp = time_it(
      [&] { kernels::matmul(a.data.data(), b.data.data(), c.data.data(), n, n, n); }, reps);
  report(("matmul " + std::to_string(n)).c_str(), ts, tp, max_abs_diff(c, ref));
}

void bench_conv(std::size_t hw, int reps, Rng& rng) {
  const Tensor in = Tensor::uniform({8, hw, hw}, -1.0, 1.0, rng);
  const Tensor k = Tensor::uniform({16, 8, 3, 3}, -1.0, 1.0, rng);
  kernels::Conv2dDims d{8, hw, hw, 16, 3, 3, 1, 1, 1};
  Tensor out({16, d.h_out(), d.w_out()});
  Tensor ref;
  const double ts = time_it([&] { ref = reference::conv2d(in, k, nullptr, 1, 1, 1); }, reps);
  const double tp = time_it(
      [&] {
        kernels::conv2d_forward(in.data.data(), k.data.data(), nullptr, out.data.data(), d);
      },
      reps);
  report(("conv2d " + std::to_string(hw)).c_str(), ts, tp, max_abs_diff(out, ref));
}

void bench_bilinear(std::size_t points, int reps, Rng& rng) {
  const Tensor map = Tensor::uniform({16, 64, 64}, -1.0, 1.0, rng);
  Tensor pts({points, 2});
  for (std::size_t i = 0; i < points; ++i) {
    pts.at2(i, 0) = rng.uniform(-1.0, 1.0);
    pts.at2(i, 1) = rng.uniform(-1.0, 1.0);
  }
  Tensor out({points, 16});
  Tensor ref;
  const double ts = time_it([&] { ref = reference::bilinear_sample(map, pts); }, reps);
  const double tp = time_it(
      [&] {
        kernels::bilinear_gather(map.data.data(), 16, 64, 64, pts.data.data(), points,
                                 out.data.data());
      },
      reps);
  report(("bilinear " + std::to_string(points)).c_str(), ts, tp, max_abs_diff(out, ref));
}

void bench_softmax(std::size_t n, int reps, Rng& rng) {
  const Tensor in = Tensor::uniform({n, n}, -4.0, 4.0, rng);
  Tensor out({n, n});
  Tensor ref;
  const double ts = time_it([&] { ref = reference::softmax_rows(in); }, reps);
  const double tp = time_it(
      [&] { kernels::softmax_rows(in.data.data(), out.data.data(), n, n); }, reps);
  report(("softmax_rows " + std::to_string(n)).c_str(), ts, tp, max_abs_diff(out, ref));
}

}  // namespace

int main(int argc, char** argv) {
  const bool smoke = argc > 1 && std::strcmp(argv[1], "--smoke") == 0;
  Rng rng(7);
  if (smoke) {
    bench_matmul(32, 2, rng);
    bench_conv(16, 2, rng);
    bench_bilinear(64, 2, rng);
    bench_softmax(16, 2, rng);
    return 0;
  }
  bench_matmul(256, 5, rng);
  bench_matmul(512, 2, rng);
  bench_conv(64, 5, rng);
  bench_conv(128, 2, rng);
  bench_bilinear(4096, 5, rng);
  bench_bilinear(16384, 2, rng);
  bench_softmax(256, 5, rng);
  bench_softmax(512, 2, rng);
  return 0;
}
