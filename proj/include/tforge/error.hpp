#ifndef TFORGE_ERROR_HPP
#define TFORGE_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace tforge {

enum class ErrorKind {
  InvalidInput,
  MalformedPayload,
  DegenerateEmbedding,
  UndefinedDenominator,
  EmptySplit,
  UndefinedFactor,
  NonFinite,
  Provider,
  Config,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; `kind()` carries the failure class.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace tforge

#endif  // TFORGE_ERROR_HPP
