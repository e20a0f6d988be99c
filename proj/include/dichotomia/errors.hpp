#pragma once

#include <stdexcept>
#include <string>

namespace dichotomia {

/// Base class for all library errors.
class error : public std::runtime_error {
public:
    explicit error(const std::string& what) : std::runtime_error(what) {}
};

/// A coefficient matrix (or a backward step) is singular or numerically
/// non-invertible. Carries the offending time index.
class invertibility_error : public error {
public:
    invertibility_error(const std::string& what, long index)
        : error(what), index(index) {}
    long index;
};

/// An orbit or a series left the representable range.
class divergence_error : public error {
public:
    divergence_error(const std::string& what, long index)
        : error(what), index(index) {}
    long index;
};

/// A fixed-point iteration failed to contract within its budget.
class contraction_error : public error {
public:
    using error::error;
};

/// Invalid or inconsistent parameters (configs, rates, window sizes).
class parameter_error : public error {
public:
    using error::error;
};

/// A stable/unstable splitting could not be separated reliably; the probe
/// scale is likely inside a rate interval.
class ambiguous_split_error : public error {
public:
    using error::error;
};

/// The probe grid does not cover all growth rates of the system.
class coverage_error : public error {
public:
    coverage_error(const std::string& what, double suggested_lo, double suggested_hi)
        : error(what), suggested_lo(suggested_lo), suggested_hi(suggested_hi) {}
    double suggested_lo;
    double suggested_hi;
};

/// A probe scale coincides with a growth rate within resolution; callers
/// should bisect instead of trusting the count.
class boundary_error : public error {
public:
    boundary_error(const std::string& what, double rate) : error(what), rate(rate) {}
    double rate;
};

/// A structural assumption of a series or solver was violated at run time
/// (e.g. partial sums grow instead of settling).
class assumption_error : public error {
public:
    using error::error;
};

} // namespace dichotomia
