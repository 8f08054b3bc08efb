#pragma once

#include <stdexcept>
#include <string>

namespace ata {

enum class ErrorKind {
  ShapeMismatch,
  DivisibilityError,
  KernelTooLarge,
  EvenKernel,
  NotScalar,
  DetachedNode,
  NegativeEpsilon,
  InstanceTooLarge,
  LengthMismatch,
  EmptyClass,
  MissingLabelEntry,
  InvalidBudget,
  NonPositiveBandwidth,
  RowCountMismatch,
  DegenerateInput,
  EmptyCloud,
  ClipTooShort,
  TooFewPoints,
  UnknownPlacement,
  NonFiniteLoss,
  EmptyDataset,
  TooManyClasses,
  TooFewFrames,
  BadFile,
  BadConfig,
};

const char* error_kind_name(ErrorKind k);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) fail(kind, msg);
}

}  // namespace ata
