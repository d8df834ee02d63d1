#include "audeform/viz.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "audeform/error.hpp"

namespace audeform {

void write_pgm(const Tensor& image_2d, const std::string& path) {
  require(image_2d.rank() == 2, Err::ShapeMismatch, "PGM writer wants a 2-D tensor");
  const std::size_t h = image_2d.shape[0], w = image_2d.shape[1];
  double lo = image_2d.data[0], hi = image_2d.data[0];
  for (double v : image_2d.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi - lo;
  std::ofstream os(path, std::ios::binary);
  require(os.good(), Err::IoError, "cannot open " + path + " for writing");
  os << "P5\n" << w << " " << h << "\n255\n";
  for (double v : image_2d.data) {
    const double n = (span > 0.0) ? (v - lo) / span : 0.0;
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(n * 255.0))));
  }
  require(os.good(), Err::IoError, "write failed for " + path);
}

}  // namespace audeform
