#pragma once

#include <stdexcept>
#include <string>

namespace audeform {

enum class Err {
  ShapeMismatch,
  NonFiniteInput,
  NonFiniteCoord,
  NonFiniteActivation,
  BadGroups,
  BadFactor,
  BadScale,
  BadLabel,
  BadConfig,
  BadSpec,
  NotScalar,
  DetachedGraph,
  TooShort,
  IoError,
  BadMagic,
  TruncatedFile,
  DataEmpty,
  ConfigMismatch,
};

const char* err_name(Err e);

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& msg)
      : std::runtime_error(std::string(err_name(code)) + ": " + msg), code_(code) {}
  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, Err code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

}  // namespace audeform
