#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>

#include "avgrob/rng.hpp"

namespace avgrob {

// Zero-mean Gaussian covariance for the boundary-alignment space, with its
// Cholesky factor. Built from the normalized boundary directions U as U U^T,
// or U C U^T when the input noise has covariance shape C.
struct CovarianceSpec {
    Eigen::MatrixXd sigma;  // k x k, symmetric PSD
    Eigen::MatrixXd chol;   // lower triangular L with L L^T = sigma + jitter I
    double jitter_applied = 0.0;

    int dim() const { return static_cast<int>(sigma.rows()); }
};

struct CdfResult {
    double value = 0.0;      // in [0, 1]
    double std_error = 0.0;  // estimated absolute error; 0 on exact paths
    std::int64_t n_points = 0;
};

struct MvnCdfOptions {
    double target_abs_error = 1e-4;
    std::int64_t max_points_per_shift = 1 << 16;
    int n_shifts = 8;
};

// Sigma = U U^T, or U noise_cov U^T when a noise covariance shape is given.
// Factorization retries with diagonal jitter escalating 1e-12 -> 1e-6 (x10
// steps); throws DegenerateCovarianceError past the cap.
CovarianceSpec build_covariance(const Eigen::MatrixXd& U,
                                const std::optional<Eigen::MatrixXd>& noise_cov = std::nullopt);

// P[r <= z] for r ~ N(0, Sigma).
//
// k = 1 and diagonal Sigma are evaluated exactly through the univariate CDF.
// The general case integrates the sequentially-conditioned (Genz) transform
// of the orthant integral over the unit hypercube with a randomly shifted
// Richtmyer low-discrepancy sequence; variables are reordered by increasing
// |z| before factorization. std_error is the spread of the per-shift means
// over sqrt(n_shifts).
CdfResult mvn_cdf(const Eigen::VectorXd& z, const CovarianceSpec& cov, Rng& rng,
                  const MvnCdfOptions& options = {});

// 1 / (1 + sum_i exp(-z_i)), evaluated in log space. Closed-form tail
// approximation of the identity-covariance mvn-cdf.
double mv_sigmoid(const Eigen::VectorXd& z);

// Standard normal CDF via erfc; absolute error well below 1e-12.
double univariate_phi(double z);

// Inverse standard normal CDF: rational initial guess polished with one
// Newton step; absolute error <= 1e-9 on (0, 1).
double univariate_phi_inv(double p);

}  // namespace avgrob
