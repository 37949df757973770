#pragma once

#include <stdexcept>
#include <string>

namespace montage {

/// Base of every error the pipeline raises on purpose. `exit_code` follows
/// the CLI contract: 1 user error, 2 provider error, 3 unrecoverable spec.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, int exit_code = 1)
      : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

class UserError : public Error {
 public:
  explicit UserError(const std::string& what) : Error(what, 1) {}
};

/// A caller broke an operation's precondition (bad pairing, bad parameter).
class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& what) : Error(what, 1) {}
};

class ProviderError : public Error {
 public:
  explicit ProviderError(const std::string& what) : Error(what, 2) {}
};

class TransportError : public ProviderError {
 public:
  explicit TransportError(const std::string& what) : ProviderError(what) {}
};

class SchemaError : public ProviderError {
 public:
  explicit SchemaError(const std::string& what) : ProviderError(what) {}
};

class CredentialError : public ProviderError {
 public:
  explicit CredentialError(const std::string& what) : ProviderError(what) {}
};

/// External media tool failed or produced an output of the wrong length.
class RenderError : public Error {
 public:
  explicit RenderError(const std::string& what) : Error(what, 1) {}
};

/// A shot spec could not be resolved to any committable clip.
class UnrecoverableSpecError : public Error {
 public:
  explicit UnrecoverableSpecError(const std::string& what) : Error(what, 3) {}
};

}  // namespace montage
