// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "jumphjb/types.hpp"

#include <cstddef>
#include <functional>
#include <optional>

namespace jumphjb {

/// Relative central-difference step used when a field has no analytic
/// derivatives: h = kFdStep * (1 + |x|).
inline constexpr double kFdStep = 1e-4;

/// Scalar random-field slice (t, x) -> R with spatial derivatives.
class ScalarField {
public:
    virtual ~ScalarField() = default;
    virtual double value(double t, const Vec& x) const = 0;
    virtual Vec gradient(double t, const Vec& x) const;
    virtual Mat hessian(double t, const Vec& x) const;
};

/// (t, x) -> R^d with Jacobian; jacobian(i, j) = d value_j / d x_i (n x d),
/// which is the layout the Hamiltonian's Q slot expects.
class VectorField {
public:
    virtual ~VectorField() = default;
    virtual Eigen::Index dim() const = 0;
    virtual Vec value(double t, const Vec& x) const = 0;
    virtual Mat jacobian(double t, const Vec& x) const;
};

/// (t, atom, x) -> R, the jump characteristic K or gamma.
class MarkField {
public:
    virtual ~MarkField() = default;
    virtual double value(double t, std::size_t atom, const Vec& x) const = 0;
};

Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x);
Mat fd_hessian(const std::function<double(const Vec&)>& f, const Vec& x);

class FunctionField final : public ScalarField {
public:
    using ValueFn = std::function<double(double, const Vec&)>;
    using GradFn = std::function<Vec(double, const Vec&)>;
    using HessFn = std::function<Mat(double, const Vec&)>;

    explicit FunctionField(ValueFn value, GradFn grad = {}, HessFn hess = {})
        : value_(std::move(value)), grad_(std::move(grad)), hess_(std::move(hess)) {}

    double value(double t, const Vec& x) const override { return value_(t, x); }
    Vec gradient(double t, const Vec& x) const override;
    Mat hessian(double t, const Vec& x) const override;

private:
    ValueFn value_;
    GradFn grad_;
    HessFn hess_;
};

class ConstantField final : public ScalarField {
public:
    explicit ConstantField(double c) : c_(c) {}
    double value(double, const Vec&) const override { return c_; }
    Vec gradient(double, const Vec& x) const override { return Vec::Zero(x.size()); }
    Mat hessian(double, const Vec& x) const override { return Mat::Zero(x.size(), x.size()); }

private:
    double c_;
};

class FunctionVectorField final : public VectorField {
public:
    using ValueFn = std::function<Vec(double, const Vec&)>;
    using JacFn = std::function<Mat(double, const Vec&)>;

    FunctionVectorField(Eigen::Index dim, ValueFn value, JacFn jac = {})
        : dim_(dim), value_(std::move(value)), jac_(std::move(jac)) {}

    Eigen::Index dim() const override { return dim_; }
    Vec value(double t, const Vec& x) const override { return value_(t, x); }
    Mat jacobian(double t, const Vec& x) const override;

private:
    Eigen::Index dim_;
    ValueFn value_;
    JacFn jac_;
};

class ZeroVectorField final : public VectorField {
public:
    explicit ZeroVectorField(Eigen::Index dim) : dim_(dim) {}
    Eigen::Index dim() const override { return dim_; }
    Vec value(double, const Vec&) const override { return Vec::Zero(dim_); }
    Mat jacobian(double, const Vec& x) const override { return Mat::Zero(x.size(), dim_); }

private:
    Eigen::Index dim_;
};

class FunctionMarkField final : public MarkField {
public:
    using ValueFn = std::function<double(double, std::size_t, const Vec&)>;
    explicit FunctionMarkField(ValueFn fn) : fn_(std::move(fn)) {}
    double value(double t, std::size_t atom, const Vec& x) const override { return fn_(t, atom, x); }

private:
    ValueFn fn_;
};

class ZeroMarkField final : public MarkField {
public:
    double value(double, std::size_t, const Vec&) const override { return 0.0; }
};

}  // namespace jumphjb
