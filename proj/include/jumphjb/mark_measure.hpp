// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "jumphjb/rng.hpp"
#include "jumphjb/types.hpp"

#include <cmath>
#include <cstddef>
#include <vector>

namespace jumphjb {

/// One atom of the discrete characteristic measure nu = sum_i w_i delta_{e_i}.
struct Atom {
    Vec mark;
    double weight = 0.0;
    double rho = 0.0;  // Lipschitz/growth modulus of g in this mark
};

struct JumpRecord {
    double time = 0.0;
    std::size_t mark_index = 0;
};

/// Finite-activity mark space (E, nu, rho). Immutable after construction.
class MarkMeasure {
public:
    MarkMeasure() = default;
    explicit MarkMeasure(std::vector<Atom> atoms);

    const std::vector<Atom>& atoms() const { return atoms_; }
    std::size_t size() const { return atoms_.size(); }
    const Atom& atom(std::size_t i) const { return atoms_[i]; }
    double total_mass() const { return total_mass_; }
    /// Mark dimension; 0 when there are no atoms.
    Eigen::Index mark_dim() const { return atoms_.empty() ? 0 : atoms_.front().mark.size(); }

    /// sum_i w_i exp(rho_i): finite by construction, reported as a diagnostic.
    double exp_integrability() const;

    /// sum_i w_i * integrand(i). The integrand receives the atom index so
    /// callers can look up marks, cached displacements, or per-atom data.
    template <class F>
    double quadrature(F&& integrand) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < atoms_.size(); ++i) acc += atoms_[i].weight * integrand(i);
        return acc;
    }

    template <class F>
    double l2_norm(F&& r) const {
        return std::sqrt(quadrature([&](std::size_t i) {
            const double v = r(i);
            return v * v;
        }));
    }

    /// (t1 - t0) * quadrature(integrand): the dt nu(de) part of the
    /// compensated measure over (t0, t1].
    template <class F>
    double compensator_increment(double t0, double t1, F&& integrand) const {
        check_interval(t0, t1);
        return (t1 - t0) * quadrature(std::forward<F>(integrand));
    }

    /// Exact Poisson thinning on (t0, t1]: count ~ Poisson(nu(E)(t1-t0)),
    /// times iid uniform then sorted, marks iid with probability w_i/nu(E).
    std::vector<JumpRecord> sample_jumps(double t0, double t1, Rng& rng) const;

    /// Appends to `out` instead of allocating; same draws as sample_jumps.
    void sample_jumps_into(double t0, double t1, Rng& rng, std::vector<JumpRecord>& out) const;

private:
    static void check_interval(double t0, double t1);
    std::size_t draw_mark(Rng& rng) const;

    std::vector<Atom> atoms_;
    std::vector<double> cumulative_;  // normalized CDF over atoms
    double total_mass_ = 0.0;
};

}  // namespace jumphjb
