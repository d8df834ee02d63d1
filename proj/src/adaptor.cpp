#include "audeform/adaptor.hpp"

#include <cmath>

#include "audeform/error.hpp"
#include "audeform/rng.hpp"

namespace audeform {

AdaptorMode adaptor_mode_from(const std::string& s) {
  if (s == "learned") return AdaptorMode::learned;
  if (s == "gaussian") return AdaptorMode::gaussian;
  if (s == "laplacian") return AdaptorMode::laplacian;
  if (s == "off") return AdaptorMode::off;
  fail(Err::BadConfig, "unknown adaptor mode '" + s + "'");
}

const char* adaptor_mode_name(AdaptorMode m) {
  switch (m) {
    case AdaptorMode::learned: return "learned";
    case AdaptorMode::gaussian: return "gaussian";
    case AdaptorMode::laplacian: return "laplacian";
    case AdaptorMode::off: return "off";
  }
  return "?";
}

AdaptorParams AdaptorParams::init(std::size_t channels, std::size_t kernel, double lambda,
                                  const std::string& prefix) {
  require(kernel % 2 == 1, Err::BadConfig, "adaptor kernel must be odd");
  require(lambda >= 0.0, Err::BadScale, "adaptor lambda must be nonnegative");
  AdaptorParams p;
  p.lambda = lambda;
  p.weight = Parameter(prefix + ".weight", Tensor::zeros({channels, channels, kernel, kernel}));
  p.bias = Parameter(prefix + ".bias", Tensor::zeros({channels}));
  return p;
}

Var adapt(Ctx& ctx, Var x_map, AdaptorParams& params) {
  Tape& tp = ctx.tape;
  const Tensor& x = tp.value(x_map);
  require(x.rank() == 3 && x.shape[0] == params.weight.value.shape[0], Err::ShapeMismatch,
          "adaptor input " + shape_str(x.shape));
  if (params.lambda == 0.0) return x_map;
  const std::size_t pad = params.weight.value.shape[2] / 2;
  Var conv = tp.conv2d(x_map, ctx.use(params.weight), ctx.use(params.bias), 1, pad, 1);
  return tp.add(x_map, tp.scale(conv, params.lambda));
}

Tensor perturb(const Tensor& x, AdaptorMode dist, double scale, std::uint64_t seed) {
  require(scale >= 0.0, Err::BadScale, "perturbation scale must be nonnegative");
  if (scale == 0.0) return x;
  Rng rng(seed);
  Tensor out = x;
  switch (dist) {
    case AdaptorMode::gaussian:
      for (double& v : out.data) v += rng.normal(0.0, scale);
      break;
    case AdaptorMode::laplacian: {
      // Scale parameter chosen so the variance equals scale^2.
      const double b = scale / std::sqrt(2.0);
      for (double& v : out.data) v += rng.laplace(0.0, b);
      break;
    }
    default:
      fail(Err::BadConfig, "perturb wants gaussian or laplacian");
  }
  return out;
}

}  // namespace audeform
