#pragma once

#include <stdexcept>
#include <string>

namespace covrl {

// Root of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define COVRL_DEFINE_ERROR(Name)            \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  }

COVRL_DEFINE_ERROR(GenerationFailed);
COVRL_DEFINE_ERROR(ParseError);
COVRL_DEFINE_ERROR(InvalidMap);
COVRL_DEFINE_ERROR(InvalidArgument);
COVRL_DEFINE_ERROR(EpisodeFinished);
COVRL_DEFINE_ERROR(DimensionError);
COVRL_DEFINE_ERROR(ShapeError);
COVRL_DEFINE_ERROR(NonFiniteGradient);
COVRL_DEFINE_ERROR(BufferTooSmall);
COVRL_DEFINE_ERROR(StepTooLarge);
COVRL_DEFINE_ERROR(ConfigError);
COVRL_DEFINE_ERROR(IoError);

#undef COVRL_DEFINE_ERROR

}  // namespace covrl
