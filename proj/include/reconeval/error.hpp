#pragma once

#include <stdexcept>
#include <string>

namespace reconeval {

/// Base of every error raised by the library. Callers that only care about
/// "did the stage fail" can catch this; tests catch the concrete subclasses.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define RECONEVAL_DEFINE_ERROR(Name)          \
  class Name : public Error {                 \
   public:                                    \
    using Error::Error;                       \
  }

// core
RECONEVAL_DEFINE_ERROR(MalformedFile);
RECONEVAL_DEFINE_ERROR(EmptyCloud);
RECONEVAL_DEFINE_ERROR(IoFailure);
RECONEVAL_DEFINE_ERROR(UnsupportedBitDepth);
RECONEVAL_DEFINE_ERROR(InvalidArgument);

// align
RECONEVAL_DEFINE_ERROR(DegenerateCloud);
RECONEVAL_DEFINE_ERROR(AmbiguousAxes);
RECONEVAL_DEFINE_ERROR(RegistrationFailed);
RECONEVAL_DEFINE_ERROR(NoCorrespondences);

// imgmetrics
RECONEVAL_DEFINE_ERROR(DimensionMismatch);
RECONEVAL_DEFINE_ERROR(TooSmall);
RECONEVAL_DEFINE_ERROR(BackendFailure);
RECONEVAL_DEFINE_ERROR(EmptyInput);

// pcmetrics
RECONEVAL_DEFINE_ERROR(SolverDiverged);

// features
RECONEVAL_DEFINE_ERROR(DegenerateGeometry);

// synth
RECONEVAL_DEFINE_ERROR(BoxDisjoint);

#undef RECONEVAL_DEFINE_ERROR

/// Wraps an error raised inside a named pipeline stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace reconeval
