// SPDX-License-Identifier: Apache-2.0
#include "jumphjb/fields.hpp"

namespace jumphjb {

namespace {
double fd_step(const Vec& x) { return kFdStep * (1.0 + x.norm()); }
}  // namespace

Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x) {
    const double h = fd_step(x);
    Vec g(x.size());
    Vec xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        xp(i) = x(i) + h;
        const double fp = f(xp);
        xp(i) = x(i) - h;
        const double fm = f(xp);
        xp(i) = x(i);
        g(i) = (fp - fm) / (2.0 * h);
    }
    return g;
}

Mat fd_hessian(const std::function<double(const Vec&)>& f, const Vec& x) {
    const double h = fd_step(x);
    const Eigen::Index n = x.size();
    Mat H(n, n);
    const double f0 = f(x);
    Vec xp = x;
    for (Eigen::Index i = 0; i < n; ++i) {
        xp(i) = x(i) + h;
        const double fp = f(xp);
        xp(i) = x(i) - h;
        const double fm = f(xp);
        xp(i) = x(i);
        H(i, i) = (fp - 2.0 * f0 + fm) / (h * h);
        for (Eigen::Index j = 0; j < i; ++j) {
            auto eval = [&](double si, double sj) {
                xp(i) = x(i) + si * h;
                xp(j) = x(j) + sj * h;
                const double v = f(xp);
                xp(i) = x(i);
                xp(j) = x(j);
                return v;
            };
            const double v = (eval(1, 1) - eval(1, -1) - eval(-1, 1) + eval(-1, -1)) / (4.0 * h * h);
            H(i, j) = v;
            H(j, i) = v;
        }
    }
    return H;
}

Vec ScalarField::gradient(double t, const Vec& x) const {
    return fd_gradient([&](const Vec& y) { return value(t, y); }, x);
}

Mat ScalarField::hessian(double t, const Vec& x) const {
    return fd_hessian([&](const Vec& y) { return value(t, y); }, x);
}

Mat VectorField::jacobian(double t, const Vec& x) const {
    const double h = fd_step(x);
    Mat J(x.size(), dim());
    Vec xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        xp(i) = x(i) + h;
        const Vec vp = value(t, xp);
        xp(i) = x(i) - h;
        const Vec vm = value(t, xp);
        xp(i) = x(i);
        J.row(i) = ((vp - vm) / (2.0 * h)).transpose();
    }
    return J;
}

Vec FunctionField::gradient(double t, const Vec& x) const {
    return grad_ ? grad_(t, x) : ScalarField::gradient(t, x);
}

Mat FunctionField::hessian(double t, const Vec& x) const {
    return hess_ ? hess_(t, x) : ScalarField::hessian(t, x);
}

Mat FunctionVectorField::jacobian(double t, const Vec& x) const {
    return jac_ ? jac_(t, x) : VectorField::jacobian(t, x);
}

}  // namespace jumphjb
