#pragma once

#include <cstddef>
#include <string>

#include "audeform/tape.hpp"

namespace audeform {

enum class AdaptorMode { learned, gaussian, laplacian, off };

struct AdaptorConfig {
  AdaptorMode mode = AdaptorMode::off;
  double lambda = 0.005;
  std::size_t kernel = 5;       // odd, same padding
  double noise_scale = 0.005;   // stddev of the perturbation baselines
};

AdaptorMode adaptor_mode_from(const std::string& s);
const char* adaptor_mode_name(AdaptorMode m);

// Residual enhancement out = x + lambda * (b + W (*) x), same padding. W and b
// start at zero so a fresh adaptor is an exact identity.
struct AdaptorParams {
  double lambda = 0.005;
  Parameter weight;  // [C, C, k, k]
  Parameter bias;    // [C]

  static AdaptorParams init(std::size_t channels, std::size_t kernel, double lambda,
                            const std::string& prefix);
  std::vector<Parameter*> all() { return {&weight, &bias}; }
};

Var adapt(Ctx& ctx, Var x_map, AdaptorParams& params);

// x plus i.i.d. noise with the given standard deviation; deterministic in the
// seed. scale 0 is the identity.
Tensor perturb(const Tensor& x, AdaptorMode dist, double scale, std::uint64_t seed);

}  // namespace audeform
