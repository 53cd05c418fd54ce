// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "jumphjb/types.hpp"

#include <cstddef>
#include <vector>

namespace jumphjb {

enum class BasisKind { Polynomial, LocalPartition };

/// Least-squares basis for conditional expectations.
/// Polynomial: tensor Legendre polynomials of total degree <= `degree` on
/// box-scaled coordinates. LocalPartition: `cells` per axis, with a local
/// polynomial of degree `local_degree` (0 or 1) on each cell.
/// When `lower`/`upper` are empty the box is fitted to the sample range.
struct RegressionBasis {
    BasisKind kind = BasisKind::Polynomial;
    int degree = 3;
    int cells = 16;
    int local_degree = 1;
    Vec lower;
    Vec upper;
};

/// A fitted regression x -> sum_j c_j phi_j(x). Points outside the fitted box
/// are handled by the polynomial itself or by the nearest edge cell.
class RegressionFunction {
public:
    RegressionFunction() = default;
    double operator()(const Vec& x) const;
    bool empty() const { return coeffs_.size() == 0; }
    /// Constant function, used where no regression is needed.
    static RegressionFunction constant(Eigen::Index n, double c);

private:
    friend class Regressor;
    Vec poly_features(const Vec& x) const;
    std::size_t cell_of(const Vec& x) const;
    void local_features(const Vec& x, std::size_t cell, double* out) const;
    std::size_t local_size() const { return local_degree_ == 0 ? 1 : 1 + active_.size(); }

    BasisKind kind_ = BasisKind::Polynomial;
    int degree_ = 0;
    int cells_ = 1;
    int local_degree_ = 0;
    Vec center_, half_;                 // box-scaling, active dims only
    std::vector<Eigen::Index> active_;  // non-degenerate coordinates
    std::vector<std::vector<int>> exponents_;
    std::vector<long> source_;  // partition: cell whose fit serves this cell
    Vec coeffs_;
    Eigen::Index n_ = 0;
};

/// Design matrix and factorization for one sample cloud. Fitting several
/// targets on the same states reuses the factorization.
class Regressor {
public:
    /// `states` is n x P (one column per sample).
    Regressor(const RegressionBasis& basis, const Mat& states);

    std::size_t size() const { return static_cast<std::size_t>(samples_); }
    std::size_t basis_size() const { return static_cast<std::size_t>(m_); }

    /// Coefficients of the least-squares fit; throws IllConditionedBasis.
    Vec fit(const Vec& target) const;
    /// In-sample predictions Phi * coeffs.
    Vec predict(const Vec& coeffs) const;
    RegressionFunction function(const Vec& coeffs) const;
    /// Whether the ridge fallback was used.
    bool regularized() const { return regularized_; }

private:
    void build_polynomial(const Mat& states);
    void build_partition(const Mat& states);

    RegressionFunction proto_;
    Eigen::Index samples_ = 0;
    Eigen::Index m_ = 0;
    Mat design_;  // polynomial: P x m
    Eigen::LDLT<Mat> ldlt_;
    bool regularized_ = false;

    // local partition: per-sample cell and local features, per-cell factorizations
    std::vector<std::size_t> cell_;
    Mat states_;
    Mat local_;  // P x (1 + n_active) when local_degree = 1, else P x 1
    std::vector<Eigen::LDLT<Mat>> cell_ldlt_;
};

/// Sample mean and standard error.
struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};
MeanSe mean_se(const Vec& v);

}  // namespace jumphjb
