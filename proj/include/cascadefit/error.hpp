#pragma once

#include <stdexcept>
#include <string>

namespace cascadefit {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
    virtual int exit_code() const { return 1; }
};

// bad input files, schema mismatches, invalid configuration
struct InputError : Error {
    using Error::Error;
};

// singular designs, degenerate fits
struct NumericalError : Error {
    using Error::Error;
    int exit_code() const override { return 2; }
};

} // namespace cascadefit
