#pragma once

#include <stdexcept>
#include <string>

namespace qtw {

// Error taxonomy shared across modules. The CLI maps these to exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DomainError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct DivergenceError : Error {
  using Error::Error;
};

struct DigestMismatchError : Error {
  using Error::Error;
};

struct SingularityError : Error {
  using Error::Error;
};

struct IntegrationError : Error {
  using Error::Error;
};

struct ContractError : Error {
  using Error::Error;
};

}  // namespace qtw
