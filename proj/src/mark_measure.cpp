// SPDX-License-Identifier: Apache-2.0
#include "jumphjb/mark_measure.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace jumphjb {

MarkMeasure::MarkMeasure(std::vector<Atom> atoms) : atoms_(std::move(atoms)) {
    Eigen::Index dim = -1;
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
        const Atom& a = atoms_[i];
        if (!(a.weight >= 0.0) || !std::isfinite(a.weight))
            fail(ErrorCode::InvalidArgument, "atom " + std::to_string(i) + ": weight must be finite and >= 0");
        if (!(a.rho >= 0.0) || !std::isfinite(a.rho))
            fail(ErrorCode::InvalidArgument, "atom " + std::to_string(i) + ": rho must be finite and >= 0");
        if (dim >= 0 && a.mark.size() != dim)
            fail(ErrorCode::InvalidArgument, "atoms have inconsistent mark dimensions");
        dim = a.mark.size();
        total_mass_ += a.weight;
    }
    cumulative_.reserve(atoms_.size());
    double acc = 0.0;
    for (const Atom& a : atoms_) {
        acc += a.weight;
        cumulative_.push_back(total_mass_ > 0.0 ? acc / total_mass_ : 0.0);
    }
    if (!cumulative_.empty()) cumulative_.back() = 1.0;
}

double MarkMeasure::exp_integrability() const {
    return quadrature([&](std::size_t i) { return std::exp(atoms_[i].rho); });
}

void MarkMeasure::check_interval(double t0, double t1) {
    if (!(t1 >= t0)) {
        std::ostringstream os;
        os << "interval end " << t1 << " precedes start " << t0;
        fail(ErrorCode::InvalidInterval, os.str());
    }
}

std::size_t MarkMeasure::draw_mark(Rng& rng) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double v = unif(rng);
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), v);
    std::size_t idx = static_cast<std::size_t>(it - cumulative_.begin());
    if (idx >= atoms_.size()) idx = atoms_.size() - 1;
    // zero-weight atoms have empty CDF intervals, upper_bound already skips them
    return idx;
}

std::vector<JumpRecord> MarkMeasure::sample_jumps(double t0, double t1, Rng& rng) const {
    std::vector<JumpRecord> out;
    sample_jumps_into(t0, t1, rng, out);
    return out;
}

void MarkMeasure::sample_jumps_into(double t0, double t1, Rng& rng, std::vector<JumpRecord>& out) const {
    check_interval(t0, t1);
    const double intensity = total_mass_ * (t1 - t0);
    if (intensity <= 0.0) return;
    std::poisson_distribution<long> count_dist(intensity);
    const long count = count_dist(rng);
    if (count == 0) return;
    const std::size_t first = out.size();
    // (t0, t1]: reflect the half-open uniform draw so t0 itself is excluded
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (long j = 0; j < count; ++j) {
        const double u = 1.0 - unif(rng);  // in (0, 1]
        double t = std::min(t1, t0 + u * (t1 - t0));
        if (t <= t0) t = std::nextafter(t0, t1);
        out.push_back({t, 0});
    }
    for (std::size_t j = first; j < out.size(); ++j) out[j].mark_index = draw_mark(rng);
    std::sort(out.begin() + static_cast<std::ptrdiff_t>(first), out.end(),
              [](const JumpRecord& a, const JumpRecord& b) { return a.time < b.time; });
}

}  // namespace jumphjb
