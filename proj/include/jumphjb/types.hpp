// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cmath>

#include <stdexcept>
#include <string>

namespace jumphjb {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class ErrorCode {
    InvalidArgument,
    InvalidInterval,
    InvalidInstance,
    Schema,
    BlowUp,
    IllConditionedBasis,
    StepTooLarge,
    DomainTooSmall,
    EnumerationTooLarge,
    Io,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

/// Polynomial weight w_p(x) = (1 + |x|^p)^{-1}.
inline double weight_p(const Vec& x, double p) {
    return 1.0 / (1.0 + std::pow(x.norm(), p));
}

}  // namespace jumphjb
