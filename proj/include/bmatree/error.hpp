#pragma once

#include <stdexcept>
#include <string>

namespace bmatree {

// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kUsage = 1,    // bad parameters, config keys, flags
  kData = 2,     // unreadable or degenerate input data
  kRuntime = 3,  // sampler, refinement, evaluation or I/O failures
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ParseError : Error {
  explicit ParseError(const std::string& what)
      : Error(ErrorKind::kData, "parse error: " + what) {}
};

struct DegenerateDataError : Error {
  explicit DegenerateDataError(const std::string& what)
      : Error(ErrorKind::kData, "degenerate data: " + what) {}
};

struct ParameterError : Error {
  explicit ParameterError(const std::string& what)
      : Error(ErrorKind::kUsage, "parameter error: " + what) {}
};

struct StratificationError : Error {
  explicit StratificationError(const std::string& what)
      : Error(ErrorKind::kData, "stratification error: " + what) {}
};

struct StructuralEditError : Error {
  explicit StructuralEditError(const std::string& what)
      : Error(ErrorKind::kRuntime, "structural edit error: " + what) {}
};

struct StalenessError : Error {
  explicit StalenessError(const std::string& what)
      : Error(ErrorKind::kRuntime, "stale tree: " + what) {}
};

struct InitializationError : Error {
  explicit InitializationError(const std::string& what)
      : Error(ErrorKind::kRuntime, "initialization error: " + what) {}
};

struct DiagnosticsError : Error {
  explicit DiagnosticsError(const std::string& what)
      : Error(ErrorKind::kRuntime, "diagnostics error: " + what) {}
};

struct EvaluationError : Error {
  explicit EvaluationError(const std::string& what)
      : Error(ErrorKind::kRuntime, "evaluation error: " + what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what)
      : Error(ErrorKind::kRuntime, "I/O error: " + what) {}
};

// Thrown when a threshold discards every tree of an ensemble.
// largest_feasible_threshold is the largest T' below the requested one
// that still keeps at least one tree.
class RefinementExhaustedError : public Error {
 public:
  RefinementExhaustedError(double threshold, double largest_feasible)
      : Error(ErrorKind::kRuntime,
              "refinement exhausted: threshold " + std::to_string(threshold) +
                  " discards every tree; largest feasible threshold is " +
                  std::to_string(largest_feasible)),
        threshold_(threshold),
        largest_feasible_(largest_feasible) {}

  double threshold() const noexcept { return threshold_; }
  double largest_feasible_threshold() const noexcept { return largest_feasible_; }

 private:
  double threshold_;
  double largest_feasible_;
};

}  // namespace bmatree
