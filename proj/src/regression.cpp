// SPDX-License-Identifier: Apache-2.0
#include "jumphjb/regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace jumphjb {

namespace {

constexpr double kPivotRatio = 1e-12;
constexpr double kRidge = 1e-8;

// Legendre P_0..P_deg at s.
void legendre(double s, int deg, double* out) {
    out[0] = 1.0;
    if (deg >= 1) out[1] = s;
    for (int k = 2; k <= deg; ++k) out[k] = ((2.0 * k - 1.0) * s * out[k - 1] - (k - 1.0) * out[k - 2]) / k;
}

void total_degree_exponents(std::size_t dims, int degree, std::vector<int>& cur, std::size_t pos, int left,
                            std::vector<std::vector<int>>& out) {
    if (pos == dims) {
        out.push_back(cur);
        return;
    }
    for (int e = 0; e <= left; ++e) {
        cur[pos] = e;
        total_degree_exponents(dims, degree, cur, pos + 1, left - e, out);
    }
    cur[pos] = 0;
}

// LDLT of a symmetric PSD matrix with the ridge fallback. Returns false if
// the factorization is unusable even after regularization.
bool factor(Mat G, Eigen::LDLT<Mat>& out, bool& regularized) {
    out.compute(G);
    auto ok = [&] {
        if (out.info() != Eigen::Success) return false;
        const Vec d = out.vectorD();
        const double mx = d.cwiseAbs().maxCoeff();
        return mx > 0.0 && d.minCoeff() > kPivotRatio * mx;
    };
    if (ok()) return true;
    const double scale = G.trace() / static_cast<double>(G.rows());
    if (!(scale > 0.0) || !std::isfinite(scale)) return false;
    G.diagonal().array() += kRidge * scale;
    out.compute(G);
    regularized = true;
    return out.info() == Eigen::Success && out.vectorD().allFinite() && out.vectorD().minCoeff() > 0.0;
}

[[noreturn]] void ill(const std::string& why) { fail(ErrorCode::IllConditionedBasis, why); }

}  // namespace

MeanSe mean_se(const Vec& v) {
    MeanSe r;
    const auto n = v.size();
    if (n == 0) return r;
    r.mean = v.mean();
    if (n > 1) r.se = std::sqrt((v.array() - r.mean).square().sum() / static_cast<double>(n - 1) / n);
    return r;
}

// ---------------------------------------------------------------------------

Vec RegressionFunction::poly_features(const Vec& x) const {
    const std::size_t na = active_.size();
    std::vector<double> table(na * static_cast<std::size_t>(degree_ + 1));
    for (std::size_t a = 0; a < na; ++a) {
        const double s = (x(active_[a]) - center_(static_cast<Eigen::Index>(a))) / half_(static_cast<Eigen::Index>(a));
        legendre(s, degree_, table.data() + a * (degree_ + 1));
    }
    Vec phi(static_cast<Eigen::Index>(exponents_.size()));
    for (std::size_t j = 0; j < exponents_.size(); ++j) {
        double v = 1.0;
        for (std::size_t a = 0; a < na; ++a) v *= table[a * (degree_ + 1) + exponents_[j][a]];
        phi(static_cast<Eigen::Index>(j)) = v;
    }
    return phi;
}

std::size_t RegressionFunction::cell_of(const Vec& x) const {
    std::size_t idx = 0;
    for (std::size_t a = 0; a < active_.size(); ++a) {
        const double s = (x(active_[a]) - center_(static_cast<Eigen::Index>(a))) / half_(static_cast<Eigen::Index>(a));
        long c = static_cast<long>(std::floor((s + 1.0) * 0.5 * cells_));
        c = std::clamp<long>(c, 0, cells_ - 1);
        idx = idx * static_cast<std::size_t>(cells_) + static_cast<std::size_t>(c);
    }
    return idx;
}

void RegressionFunction::local_features(const Vec& x, std::size_t cell, double* out) const {
    out[0] = 1.0;
    if (local_degree_ == 0) return;
    // decode the multi-index of `cell`, last active dim fastest
    std::size_t rem = cell;
    for (std::size_t a = active_.size(); a-- > 0;) {
        const std::size_t c = rem % static_cast<std::size_t>(cells_);
        rem /= static_cast<std::size_t>(cells_);
        const double s = (x(active_[a]) - center_(static_cast<Eigen::Index>(a))) / half_(static_cast<Eigen::Index>(a));
        const double width = 2.0 / cells_;
        const double mid = -1.0 + (static_cast<double>(c) + 0.5) * width;
        out[1 + a] = (s - mid) / (0.5 * width);
    }
}

double RegressionFunction::operator()(const Vec& x) const {
    if (coeffs_.size() == 0) fail(ErrorCode::InvalidArgument, "evaluating an unfitted regression");
    if (kind_ == BasisKind::Polynomial) return poly_features(x).dot(coeffs_);
    const std::size_t m = local_size();
    const std::size_t cell = static_cast<std::size_t>(source_[cell_of(x)]);
    double phi[8];
    local_features(x, cell, phi);
    double v = 0.0;
    for (std::size_t j = 0; j < m; ++j) v += phi[j] * coeffs_(static_cast<Eigen::Index>(cell * m + j));
    return v;
}

RegressionFunction RegressionFunction::constant(Eigen::Index n, double c) {
    RegressionFunction f;
    f.kind_ = BasisKind::Polynomial;
    f.n_ = n;
    f.exponents_ = {{}};
    f.coeffs_ = Vec::Constant(1, c);
    return f;
}

// ---------------------------------------------------------------------------

Regressor::Regressor(const RegressionBasis& basis, const Mat& states) {
    const Eigen::Index n = states.rows();
    samples_ = states.cols();
    if (samples_ == 0) ill("regression with no samples");
    if (!states.allFinite()) ill("nonfinite regression states");
    if (basis.kind == BasisKind::Polynomial && basis.degree < 0) fail(ErrorCode::InvalidArgument, "negative degree");
    if (basis.kind == BasisKind::LocalPartition &&
        (basis.cells < 1 || basis.local_degree < 0 || basis.local_degree > 1))
        fail(ErrorCode::InvalidArgument, "local partition needs cells >= 1 and local degree 0 or 1");

    RegressionFunction& f = proto_;
    f.kind_ = basis.kind;
    f.degree_ = basis.degree;
    f.cells_ = basis.cells;
    f.local_degree_ = basis.local_degree;
    f.n_ = n;

    const Vec lo = states.rowwise().minCoeff();
    const Vec hi = states.rowwise().maxCoeff();
    std::vector<double> centers, halves;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double span = hi(i) - lo(i);
        if (span <= 1e-12 * (1.0 + std::abs(hi(i)))) continue;  // degenerate coordinate
        double a = lo(i), b = hi(i);
        if (basis.lower.size() == n && basis.upper.size() == n && basis.upper(i) > basis.lower(i)) {
            a = basis.lower(i);
            b = basis.upper(i);
        }
        f.active_.push_back(i);
        centers.push_back(0.5 * (a + b));
        halves.push_back(0.5 * (b - a));
    }
    f.center_ = Eigen::Map<Vec>(centers.data(), static_cast<Eigen::Index>(centers.size()));
    f.half_ = Eigen::Map<Vec>(halves.data(), static_cast<Eigen::Index>(halves.size()));

    if (basis.kind == BasisKind::Polynomial)
        build_polynomial(states);
    else
        build_partition(states);
}

void Regressor::build_polynomial(const Mat& states) {
    RegressionFunction& f = proto_;
    std::vector<int> cur(f.active_.size(), 0);
    total_degree_exponents(f.active_.size(), f.active_.empty() ? 0 : f.degree_, cur, 0,
                           f.active_.empty() ? 0 : f.degree_, f.exponents_);
    m_ = static_cast<Eigen::Index>(f.exponents_.size());
    if (samples_ < m_) {
        std::ostringstream os;
        os << samples_ << " samples for " << m_ << " basis functions";
        ill(os.str());
    }
    design_.resize(samples_, m_);
    for (Eigen::Index p = 0; p < samples_; ++p) design_.row(p) = f.poly_features(states.col(p)).transpose();
    if (!design_.allFinite()) ill("nonfinite basis evaluation");
    if (!factor(design_.transpose() * design_, ldlt_, regularized_)) ill("singular normal equations");
}

void Regressor::build_partition(const Mat& states) {
    RegressionFunction& f = proto_;
    std::size_t total = 1;
    for (std::size_t a = 0; a < f.active_.size(); ++a) total *= static_cast<std::size_t>(f.cells_);
    if (f.active_.empty()) f.local_degree_ = 0;
    const std::size_t m = f.local_size();
    if (m > 8) fail(ErrorCode::InvalidArgument, "local partition supports at most 7 active dimensions");
    m_ = static_cast<Eigen::Index>(total * m);

    states_ = states;
    cell_.resize(static_cast<std::size_t>(samples_));
    local_.resize(samples_, static_cast<Eigen::Index>(m));
    std::vector<Mat> gram(total, Mat::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m)));
    std::vector<std::size_t> count(total, 0);
    double phi[8];
    for (Eigen::Index p = 0; p < samples_; ++p) {
        const Vec x = states.col(p);
        const std::size_t c = f.cell_of(x);
        cell_[static_cast<std::size_t>(p)] = c;
        f.local_features(x, c, phi);
        for (std::size_t j = 0; j < m; ++j) local_(p, static_cast<Eigen::Index>(j)) = phi[j];
        ++count[c];
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j)
                gram[c](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += phi[i] * phi[j];
    }
    cell_ldlt_.resize(total);
    std::vector<bool> usable(total, false);
    for (std::size_t c = 0; c < total; ++c) {
        if (count[c] < m + 1) continue;
        usable[c] = factor(gram[c], cell_ldlt_[c], regularized_);
    }
    // underpopulated cells borrow the nearest usable cell's fit
    const std::size_t na = f.active_.size();
    auto decode = [&](std::size_t c, std::vector<long>& idx) {
        idx.assign(na, 0);
        for (std::size_t a = na; a-- > 0;) {
            idx[a] = static_cast<long>(c % static_cast<std::size_t>(f.cells_));
            c /= static_cast<std::size_t>(f.cells_);
        }
    };
    f.source_.assign(total, -1);
    std::vector<long> ic, jc;
    for (std::size_t c = 0; c < total; ++c) {
        if (usable[c]) {
            f.source_[c] = static_cast<long>(c);
            continue;
        }
        decode(c, ic);
        long best = -1;
        long best_d = std::numeric_limits<long>::max();
        for (std::size_t o = 0; o < total; ++o) {
            if (!usable[o]) continue;
            decode(o, jc);
            long dist = 0;
            for (std::size_t a = 0; a < na; ++a) dist += (ic[a] - jc[a]) * (ic[a] - jc[a]);
            if (dist < best_d) {
                best_d = dist;
                best = static_cast<long>(o);
            }
        }
        if (best < 0) ill("no local-partition cell has enough samples");
        f.source_[c] = best;
    }
}

Vec Regressor::fit(const Vec& target) const {
    if (target.size() != samples_) fail(ErrorCode::InvalidArgument, "regression target has wrong length");
    Vec c;
    if (proto_.kind_ == BasisKind::Polynomial) {
        c = ldlt_.solve(design_.transpose() * target);
    } else {
        const std::size_t m = proto_.local_size();
        const std::size_t total = cell_ldlt_.size();
        std::vector<Vec> rhs(total, Vec::Zero(static_cast<Eigen::Index>(m)));
        for (Eigen::Index p = 0; p < samples_; ++p)
            rhs[cell_[static_cast<std::size_t>(p)]] += local_.row(p).transpose() * target(p);
        c = Vec::Zero(static_cast<Eigen::Index>(total * m));
        for (std::size_t k = 0; k < total; ++k)
            if (proto_.source_[k] == static_cast<long>(k))
                c.segment(static_cast<Eigen::Index>(k * m), static_cast<Eigen::Index>(m)) = cell_ldlt_[k].solve(rhs[k]);
    }
    if (!c.allFinite()) ill("nonfinite regression coefficients");
    return c;
}

Vec Regressor::predict(const Vec& coeffs) const {
    if (proto_.kind_ == BasisKind::Polynomial) return design_ * coeffs;
    const std::size_t m = proto_.local_size();
    Vec out(samples_);
    for (Eigen::Index p = 0; p < samples_; ++p) {
        const std::size_t c = static_cast<std::size_t>(proto_.source_[cell_[static_cast<std::size_t>(p)]]);
        if (c == cell_[static_cast<std::size_t>(p)]) {
            out(p) = local_.row(p).dot(coeffs.segment(static_cast<Eigen::Index>(c * m), static_cast<Eigen::Index>(m)));
        } else {
            // borrowed fit: local coordinates relative to the source cell
            double phi[8];
            proto_.local_features(states_.col(p), c, phi);
            double v = 0.0;
            for (std::size_t j = 0; j < m; ++j) v += phi[j] * coeffs(static_cast<Eigen::Index>(c * m + j));
            out(p) = v;
        }
    }
    return out;
}

RegressionFunction Regressor::function(const Vec& coeffs) const {
    RegressionFunction f = proto_;
    f.coeffs_ = coeffs;
    return f;
}

}  // namespace jumphjb
