#include "audeform/tensor.hpp"

#include <cmath>
#include <sstream>

#include "audeform/error.hpp"

namespace audeform {

const char* err_name(Err e) {
  switch (e) {
    case Err::ShapeMismatch: return "ShapeMismatch";
    case Err::NonFiniteInput: return "NonFiniteInput";
    case Err::NonFiniteCoord: return "NonFiniteCoord";
    case Err::NonFiniteActivation: return "NonFiniteActivation";
    case Err::BadGroups: return "BadGroups";
    case Err::BadFactor: return "BadFactor";
    case Err::BadScale: return "BadScale";
    case Err::BadLabel: return "BadLabel";
    case Err::BadConfig: return "BadConfig";
    case Err::BadSpec: return "BadSpec";
    case Err::NotScalar: return "NotScalar";
    case Err::DetachedGraph: return "DetachedGraph";
    case Err::TooShort: return "TooShort";
    case Err::IoError: return "IoError";
    case Err::BadMagic: return "BadMagic";
    case Err::TruncatedFile: return "TruncatedFile";
    case Err::DataEmpty: return "DataEmpty";
    case Err::ConfigMismatch: return "ConfigMismatch";
  }
  return "Unknown";
}

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shp)
    : shape(std::move(shp)), data(shape_numel(shape), 0.0) {}

Tensor Tensor::zeros(std::vector<std::size_t> shp) { return Tensor(std::move(shp)); }

Tensor Tensor::full(std::vector<std::size_t> shp, double v) {
  Tensor t(std::move(shp));
  for (double& x : t.data) x = v;
  return t;
}

Tensor Tensor::from(std::vector<std::size_t> shp, std::vector<double> values) {
  require(shape_numel(shp) == values.size(), Err::ShapeMismatch,
          "from(): " + shape_str(shp) + " vs " + std::to_string(values.size()) + " values");
  Tensor t;
  t.shape = std::move(shp);
  t.data = std::move(values);
  return t;
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

Tensor Tensor::uniform(std::vector<std::size_t> shp, double lo, double hi, Rng& rng) {
  Tensor t(std::move(shp));
  for (double& x : t.data) x = rng.uniform(lo, hi);
  return t;
}

bool Tensor::all_finite() const {
  for (double x : data)
    if (!std::isfinite(x)) return false;
  return true;
}

void Tensor::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
  if (!grad.empty()) grad.assign(data.size(), 0.0);
}

}  // namespace audeform
