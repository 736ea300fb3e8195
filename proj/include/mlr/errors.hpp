#pragma once

#include <stdexcept>
#include <string>

namespace mlr {

/// Input violates a documented precondition (bad shape, non-finite entry, out-of-range option).
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical procedure could not produce a usable result.
class NumericalFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The precision-surrogate program stayed infeasible after all slack doublings.
class DegenerateDesign : public NumericalFailure {
public:
    DegenerateDesign(const std::string& what, long coordinate)
        : NumericalFailure(what), coordinate_(coordinate) {}

    long coordinate() const noexcept { return coordinate_; }

private:
    long coordinate_;
};

}  // namespace mlr
