#pragma once

#include <stdexcept>
#include <string>

namespace seqsprt {

/// Base class for all errors raised by the toolkit.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

#define SEQSPRT_DEFINE_ERROR(Name)                                             \
  class Name : public Error                                                    \
  {                                                                            \
  public:                                                                      \
    using Error::Error;                                                        \
  }

SEQSPRT_DEFINE_ERROR(InsufficientSamples);
SEQSPRT_DEFINE_ERROR(EmptyStream);
SEQSPRT_DEFINE_ERROR(EmptyHistory);
SEQSPRT_DEFINE_ERROR(DomainError);
SEQSPRT_DEFINE_ERROR(WindowOverflow);
SEQSPRT_DEFINE_ERROR(ConfigError);
SEQSPRT_DEFINE_ERROR(InsufficientPairs);
SEQSPRT_DEFINE_ERROR(SingularSystem);
SEQSPRT_DEFINE_ERROR(FormatError);

#undef SEQSPRT_DEFINE_ERROR

} // namespace seqsprt
