#pragma once

#include <stdexcept>
#include <string>

namespace ricb {

enum class ErrorCode
{
  invalid_argument = 1,
  io = 2,
  format = 3,
  numeric = 4,
  state = 5,
  internal = 6
};

//! Base exception for everything raised by the library. The code maps 1:1
//! onto the status values of the C API.
class Error : public std::runtime_error
{
public:
  Error(ErrorCode code, const std::string& what)
    : std::runtime_error(what)
    , code_(code)
  {
  }

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

struct InvalidArgument : Error
{
  explicit InvalidArgument(const std::string& what)
    : Error(ErrorCode::invalid_argument, what)
  {
  }
};

struct IoError : Error
{
  explicit IoError(const std::string& what)
    : Error(ErrorCode::io, what)
  {
  }
};

struct FormatError : Error
{
  explicit FormatError(const std::string& what)
    : Error(ErrorCode::format, what)
  {
  }
};

struct NumericError : Error
{
  explicit NumericError(const std::string& what)
    : Error(ErrorCode::numeric, what)
  {
  }
};

struct StateError : Error
{
  explicit StateError(const std::string& what)
    : Error(ErrorCode::state, what)
  {
  }
};

} // namespace ricb
