#pragma once

#include <stdexcept>
#include <string>

namespace thinkstop {

// Failure classes. Each maps onto one status code of the C API and one CLI
// exit code, so new subclasses must derive from exactly one of these.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Broken precondition on the caller's side (wrong variant, index out of range).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data: bad files, missing hidden states,
// misaligned spans.
class DataError : public Error {
 public:
  using Error::Error;
};

class AlignmentError : public DataError {
 public:
  using DataError::DataError;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

// Reasoning never closed within the token budget.
class TruncatedTraceError : public DataError {
 public:
  using DataError::DataError;
};

class MalformedAnswerError : public DataError {
 public:
  using DataError::DataError;
};

class EndpointError : public Error {
 public:
  EndpointError(const std::string& what, bool retryable, int attempts = 0)
      : Error(what), retryable_(retryable), attempts_(attempts) {}

  bool retryable() const { return retryable_; }
  int attempts() const { return attempts_; }

 private:
  bool retryable_;
  int attempts_;
};

// The endpoint answered but cannot provide what we need (e.g. no logprobs).
class CapabilityError : public EndpointError {
 public:
  explicit CapabilityError(const std::string& what) : EndpointError(what, false) {}
};

// None of the candidate answers appeared among the top-k alternatives.
class AmbiguityError : public EndpointError {
 public:
  explicit AmbiguityError(const std::string& what) : EndpointError(what, false) {}
};

// Re-throws the exception being handled with `prefix` prepended to its
// message, keeping its failure class. Call only from inside a catch block.
[[noreturn]] inline void rethrow_with_context(const std::string& prefix) {
  try {
    throw;
  } catch (const AmbiguityError& e) {
    throw AmbiguityError(prefix + e.what());
  } catch (const CapabilityError& e) {
    throw CapabilityError(prefix + e.what());
  } catch (const EndpointError& e) {
    throw EndpointError(prefix + e.what(), e.retryable(), e.attempts());
  } catch (const TruncatedTraceError& e) {
    throw TruncatedTraceError(prefix + e.what());
  } catch (const AlignmentError& e) {
    throw AlignmentError(prefix + e.what());
  } catch (const DataError& e) {
    throw DataError(prefix + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const ContractError& e) {
    throw ContractError(prefix + e.what());
  } catch (const std::exception& e) {
    throw Error(prefix + e.what());
  }
}

}  // namespace thinkstop
