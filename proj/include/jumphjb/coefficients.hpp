// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "jumphjb/fields.hpp"
#include "jumphjb/mark_measure.hpp"
#include "jumphjb/rng.hpp"
#include "jumphjb/types.hpp"

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace jumphjb {

/// Read-only view of the driving noise up to time t: W(t) and the running
/// per-atom jump counts. This is the finest cylinder projection of the
/// history; random coefficients read it, deterministic ones ignore it.
struct NoiseHistory {
    double t = 0.0;
    Vec brownian;
    std::vector<int> counts;

    static const NoiseHistory& none();
};

/// The problem instance (b, sigma, g, f, h, l) with growth exponent p and a
/// finite control grid standing in for the compact set U.
struct CoefficientSet {
    using DriftFn = std::function<Vec(double t, const Vec& x, const Vec& u, const NoiseHistory& hist)>;
    using DiffusionFn = std::function<Mat(double t, const Vec& x, const Vec& u, const NoiseHistory& hist)>;
    using JumpFn =
        std::function<Vec(double t, const Vec& mark, const Vec& x, const Vec& u, const NoiseHistory& hist)>;
    using GeneratorFn = std::function<double(double t, const Vec& x, const Vec& u, double y, const Vec& z,
                                             double k_agg, const NoiseHistory& hist)>;
    using TerminalFn = std::function<double(const Vec& x, const NoiseHistory& hist)>;
    using WeightFn = std::function<double(double t, const Vec& mark)>;

    Eigen::Index n = 1;  // state dimension
    Eigen::Index d = 1;  // Brownian dimension
    Eigen::Index k = 1;  // control dimension
    double p = 2.0;

    DriftFn drift;
    DiffusionFn diffusion;  // n x d
    JumpFn jump;
    GeneratorFn generator;
    TerminalFn terminal;
    WeightFn jump_weight;

    std::vector<Vec> controls;

    /// Checks callbacks are set and dimensions of the control grid agree.
    void validate() const;
};

// ---------------------------------------------------------------------------
// Operators of the HJB drift.
// ---------------------------------------------------------------------------

/// f(t,x,u,y, sigma^T p + q, k) + <p, b> + Tr(Q sigma^T) + 1/2 Tr(A sigma sigma^T).
double hamiltonian(const CoefficientSet& cs, double t, const Vec& x, const Vec& u, double y, const Vec& p_grad,
                   const Vec& q, const Mat& Q, const Mat& A, double k_agg,
                   const NoiseHistory& hist = NoiseHistory::none());

/// phi(t, x + g(t, e, x, u)) - phi(t, x).
double nonlocal_I(const CoefficientSet& cs, const ScalarField& phi, double t, const Vec& mark, const Vec& x,
                  const Vec& u, const NoiseHistory& hist = NoiseHistory::none());

/// sum_e [I_phi(t,e,x,u) + psi(t, e, x + g)] l(t, e) nu(de).
double nonlocal_L(const CoefficientSet& cs, const MarkMeasure& mm, double t, const Vec& x, const Vec& u,
                  const ScalarField& phi, const MarkField& psi, const NoiseHistory& hist = NoiseHistory::none());

struct DriftValue {
    double value = 0.0;
    std::size_t argmin = 0;  // index into the control grid
    std::vector<double> per_control;
};

/// The braces of the drift operator at one frozen control: Hamiltonian with
/// k = L(t,x,u,V,K) plus the compensated jump integral
/// sum_e [I_V - <g, DV> + I_K] nu(de), with I_K = K(t,e,x+g) - K(t,e,x).
double drift_at_control(const CoefficientSet& cs, const MarkMeasure& mm, double t, const Vec& x, const Vec& u,
                        const ScalarField& V, const VectorField& Z, const MarkField& K,
                        const NoiseHistory& hist = NoiseHistory::none());

/// Minimum of drift_at_control over the control grid; ties go to the lowest index.
DriftValue drift_F(const CoefficientSet& cs, const MarkMeasure& mm, double t, const Vec& x, const ScalarField& V,
                   const VectorField& Z, const MarkField& K, const NoiseHistory& hist = NoiseHistory::none());

/// Semimartingale test field phi = phi(T) + int alpha ds - int beta dW - int gamma dmu~.
struct TestField {
    const ScalarField* phi = nullptr;
    const ScalarField* alpha = nullptr;
    const VectorField* beta = nullptr;
    const MarkField* gamma = nullptr;
};

/// drift_F with (DV, D^2V, Z, K) replaced by (Dphi, D^2phi, beta, gamma).
DriftValue test_field_F(const CoefficientSet& cs, const MarkMeasure& mm, double t, const Vec& x,
                        const TestField& tf, const NoiseHistory& hist = NoiseHistory::none());

/// <b, Dphi> + 1/2 Tr(sigma sigma^T D^2phi) + sum_e [phi(x+g) - phi(x) - <g, Dphi>] nu(de).
double generator_L(const CoefficientSet& cs, const MarkMeasure& mm, double t, const Vec& x, const Vec& u,
                   const ScalarField& phi, const NoiseHistory& hist = NoiseHistory::none());

// ---------------------------------------------------------------------------
// Empirical probes of the standing assumptions.
// ---------------------------------------------------------------------------

struct ProbeSpec {
    Vec lower;
    Vec upper;
    std::size_t samples = 200;  // random state samples; pairs are formed between them
    std::vector<double> times{0.0};
    std::vector<double> backward_scale{1.0};  // magnitudes for sampled (y, z, k)
    double ratio_bound = 1e3;                 // flag threshold
};

struct AssumptionReport {
    double lipschitz_drift = 0.0;       // |db| / (|dx| + |du|)
    double lipschitz_diffusion = 0.0;   // ||dsigma|| / (|dx| + |du|)
    double lipschitz_jump = 0.0;        // |dg| / (rho(e)(|dx| + |du|))
    double growth_drift_diffusion = 0.0;  // (|b| + ||sigma||) / (1 + |x| + |u|)
    double growth_jump = 0.0;           // |g| / (rho(e)(1 + |x| + |u|))
    double lipschitz_generator_xu = 0.0;  // weighted by (1 + |x|^{p-1} + ...)
    double lipschitz_generator_yzk = 0.0;
    double lipschitz_terminal = 0.0;
    double growth_generator = 0.0;
    double growth_terminal = 0.0;
    double weight_ratio = 0.0;  // l(t,e) / (1 + |e|)
    std::size_t monotonicity_violations = 0;  // k -> f decreasing somewhere
    double exp_integrability = 0.0;
    std::vector<std::string> flags;
};

AssumptionReport probe_assumptions(const CoefficientSet& cs, const MarkMeasure& mm, const ProbeSpec& spec,
                                   Rng& rng);

}  // namespace jumphjb
