#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace volcast {

/// Invalid argument or parameter outside its admissible region.
class DomainError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// A recursion or likelihood produced a non-finite or non-positive value.
class NumericError : public std::runtime_error {
  public:
    NumericError(const std::string& what, std::size_t index)
        : std::runtime_error(what + " (at index " + std::to_string(index) + ")"), index_(index) {}

    [[nodiscard]] std::size_t index() const noexcept { return index_; }

  private:
    std::size_t index_;
};

/// Iterative routine ran out of budget. Carries the best estimate reached.
class ConvergenceError : public std::runtime_error {
  public:
    ConvergenceError(const std::string& what, double best_estimate, double error_estimate)
        : std::runtime_error(what), best_(best_estimate), err_(error_estimate) {}

    [[nodiscard]] double best_estimate() const noexcept { return best_; }
    [[nodiscard]] double error_estimate() const noexcept { return err_; }

  private:
    double best_;
    double err_;
};

/// Every start of a multistart search failed.
class EstimationError : public std::runtime_error {
  public:
    EstimationError(const std::string& what, std::vector<std::string> diagnostics)
        : std::runtime_error(what), diagnostics_(std::move(diagnostics)) {}

    [[nodiscard]] const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

  private:
    std::vector<std::string> diagnostics_;
};

/// A test statistic is undefined for the input (identical forecasts, too few points).
class DegenerateTestError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Input data cannot be used (zero variance, empty file, malformed row).
class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace volcast
