#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "avgrob/estimators.hpp"
#include "avgrob/model.hpp"

namespace avgrob {

// A quadratic-boundary test case together with the spectral summaries that
// enter the estimation-error bounds.
struct QuadraticOracleCase {
    QuadraticBoundaryModel model;
    double sigma = 0.1;
    Eigen::VectorXd lambda_max;   // per boundary
    Eigen::VectorXd lambda_mean;  // trace(A_i) / d
    Eigen::VectorXd lin_norms;    // ||u_i||_2
    double k_const = 0.0;         // (2 pi)^{-(C-1)/2} det(U U^T)^{-1/2}

    int n_classes() const { return model.n_classes(); }
    int dim() const { return model.dim; }
};

// (lambda_max, lambda_mean) of a symmetric matrix. lambda_max comes from
// power iteration (Gershgorin-shifted so the dominant eigenvalue is the
// largest, not the largest in magnitude) at tolerance 1e-10, with random
// restarts and a deflation check; lambda_mean is trace/d exactly.
std::pair<double, double> symmetric_eigen_extremes(const Eigen::MatrixXd& A);

QuadraticOracleCase make_oracle_case(QuadraticBoundaryModel model, double sigma);

// Random PSD case: per boundary A = scale * B^T B / d with iid standard
// normal B (rank rows), lambda_max rescaled into lambda_max_range, unit-free
// u with norm ~ lin_norm_scale * sqrt(d), and offsets placed so the
// standardized margins land in z_range under per-radius noise.
struct CaseGenOptions {
    int rank = 2;
    double lambda_max_lo = 0.5;
    double lambda_max_hi = 1.5;
    double lin_norm_scale = 2.0;
    double z_lo = 0.8;
    double z_hi = 2.2;
};
QuadraticOracleCase make_random_case(int dim, int n_classes, double sigma, Rng& rng,
                                     const CaseGenOptions& options = {});

struct BruteforceResult {
    double value = 0.0;
    double std_error = 0.0;
    std::int64_t samples = 0;
};

// Monte-Carlo estimate of P[min_i g_i(eps) > 0] at x = 0 under the theorem
// convention eps ~ N(0, sigma^2/d I).
BruteforceResult quad_probust_bruteforce(const QuadraticOracleCase& oracle_case,
                                         std::int64_t n_samples, Rng& rng);

double taylor_bound(const QuadraticOracleCase& oracle_case);
double mmse_bound(const QuadraticOracleCase& oracle_case);

struct BoundReport {
    double estimate = 0.0;
    double bruteforce = 0.0;
    double bruteforce_std_error = 0.0;
    double empirical_error = 0.0;
    double bound = 0.0;
    bool satisfied = false;
};

// Compares |bruteforce - estimator(x=0, per-radius)| against the matching
// bound, allowing 3 bruteforce standard errors of slack. estimator_kind must
// be taylor or mmse. Requires dim >= 200 (the bounds are asymptotic in d).
BoundReport verify_bounds(const QuadraticOracleCase& oracle_case, EstimatorKind estimator_kind,
                          std::int64_t n_samples, Rng& rng, int mmse_samples = 10000);

struct SweepConfig {
    int n_cases = 50;
    int dim = 400;
    std::vector<int> class_counts{2, 3, 4};
    std::vector<double> sigmas{0.05, 0.1, 0.2};
    std::int64_t bruteforce_samples = 1000000;
    int mmse_samples = 10000;
    std::uint64_t seed = 0;
    int workers = 1;
    CaseGenOptions gen;
};

struct SweepCaseResult {
    std::string digest;
    int n_classes = 0;
    int dim = 0;
    double sigma = 0.0;
    BoundReport taylor;
    BoundReport mmse;
};

// Randomized verification sweep, parallel across cases; case i is fully
// determined by (seed, i).
std::vector<SweepCaseResult> bound_sweep(const SweepConfig& config);

// FNV-1a over the case's coefficient summaries; stable across runs.
std::string case_digest(const QuadraticOracleCase& oracle_case);

}  // namespace avgrob
