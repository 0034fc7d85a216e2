#ifndef CORRBOOT_ERRORS_HPP
#define CORRBOOT_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace corrboot {

/// A coordinate of the sample has zero variance, so a correlation is undefined.
class ZeroVariance : public std::domain_error {
public:
    explicit ZeroVariance(std::string column)
        : std::domain_error("zero variance in column '" + column + "'"), column_(std::move(column)) {}

    const std::string& column() const noexcept { return column_; }

private:
    std::string column_;
};

/// A spread measure (bootstrap SE, influence values) is exactly zero.
class ZeroSpread : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// The statistic is undefined on a jackknife subsample.
class DegenerateSubsample : public std::domain_error {
public:
    explicit DegenerateSubsample(std::size_t index)
        : std::domain_error("statistic undefined on jackknife subsample " + std::to_string(index)),
          index_(index) {}

    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

/// The statistic is undefined on the original sample.
class DegenerateSample : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A bootstrap replicate cannot be used by the requested interval method.
class DegenerateReplicate : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class RedrawBudgetExhausted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NoSolution : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class SingularDenominator : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

} // namespace corrboot

#endif
