#pragma once

#include <stdexcept>
#include <string>

namespace istlm {

// Exit-code classes used by the command line front end.
enum class ErrorKind { Usage = 1, Data = 2, Numeric = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error UsageError(const std::string& what) { return Error(ErrorKind::Usage, what); }
inline Error DataError(const std::string& what) { return Error(ErrorKind::Data, what); }
inline Error NumericError(const std::string& what) { return Error(ErrorKind::Numeric, what); }

}  // namespace istlm
