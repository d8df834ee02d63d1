#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace audeform {

struct AuditResult {
  std::string component;
  double max_rel_err = 0.0;
};

// Finite-difference audits (eps 1e-5, float64) for the adaptor, the offset
// generator, one deformable block, one vanilla block, and a full two-block
// model, on a size x size map with C=8, M=2, G=1, r=2.
std::vector<AuditResult> run_gradient_audit(std::size_t size, std::uint64_t seed);

}  // namespace audeform
