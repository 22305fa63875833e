#include "avgrob/mvn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "avgrob/errors.hpp"

namespace avgrob {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488;

// First n primes, for the Richtmyer generator q_j = sqrt(p_j).
std::vector<std::uint32_t> first_primes(int n) {
    std::vector<std::uint32_t> primes;
    primes.reserve(n);
    for (std::uint32_t cand = 2; static_cast<int>(primes.size()) < n; ++cand) {
        bool prime = true;
        for (std::uint32_t p : primes) {
            if (p * p > cand) break;
            if (cand % p == 0) {
                prime = false;
                break;
            }
        }
        if (prime) primes.push_back(cand);
    }
    return primes;
}

bool is_diagonal(const Eigen::MatrixXd& m, double tol) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            if (i != j && std::abs(m(i, j)) > tol) return false;
    return true;
}

Eigen::LLT<Eigen::MatrixXd> cholesky_with_jitter(const Eigen::MatrixXd& sigma,
                                                 double* jitter_out) {
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    double jitter = 0.0;
    if (llt.info() != Eigen::Success) {
        for (jitter = 1e-12; jitter <= 1e-6 * (1 + 1e-9); jitter *= 10.0) {
            Eigen::MatrixXd bumped = sigma;
            bumped.diagonal().array() += jitter;
            llt.compute(bumped);
            if (llt.info() == Eigen::Success) break;
        }
        if (llt.info() != Eigen::Success)
            throw DegenerateCovarianceError(
                "covariance not factorizable at maximum jitter 1e-6");
    }
    if (jitter_out) *jitter_out = jitter;
    return llt;
}

// Genz transform of P[r <= z] to the unit hypercube: one evaluation at a
// quasi-random point w in [0,1)^(k-1).
double conditioned_integrand(const Eigen::MatrixXd& L, const Eigen::VectorXd& z,
                             const double* w, std::vector<double>& y) {
    const int k = static_cast<int>(z.size());
    double e = univariate_phi(z[0] / L(0, 0));
    double f = e;
    for (int i = 1; i < k; ++i) {
        // Conditional sample within the truncated region of variable i-1.
        const double u = std::min(std::max(w[i - 1] * e, 1e-16), 1.0 - 1e-16);
        y[i - 1] = univariate_phi_inv(u);
        double dot = 0.0;
        for (int j = 0; j < i; ++j) dot += L(i, j) * y[j];
        e = univariate_phi((z[i] - dot) / L(i, i));
        f *= e;
    }
    return f;
}

}  // namespace

double univariate_phi(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

double univariate_phi_inv(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw InputError("univariate_phi_inv: p must be in (0, 1)");

    // Acklam's rational approximation, then one Newton polish.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    const double err = univariate_phi(x) - p;
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * Rng::pi());
    if (pdf > 0.0) x -= err / pdf;
    return x;
}

double mv_sigmoid(const Eigen::VectorXd& z) {
    if (!z.allFinite()) throw InputError("mv_sigmoid: non-finite input");
    // value = exp(-logsumexp(0, -z_1, ..., -z_k))
    double m = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) m = std::max(m, -z[i]);
    double s = std::exp(0.0 - m);
    for (Eigen::Index i = 0; i < z.size(); ++i) s += std::exp(-z[i] - m);
    return std::exp(-(m + std::log(s)));
}

CovarianceSpec build_covariance(const Eigen::MatrixXd& U,
                                const std::optional<Eigen::MatrixXd>& noise_cov) {
    if (U.rows() < 1 || U.cols() < 1)
        throw InputError("build_covariance: empty boundary matrix");
    if (!U.allFinite()) throw InputError("build_covariance: non-finite entries");

    CovarianceSpec spec;
    if (noise_cov) {
        if (noise_cov->rows() != U.cols() || noise_cov->cols() != U.cols())
            throw InputError("build_covariance: noise covariance shape mismatch");
        spec.sigma = U * (*noise_cov) * U.transpose();
    } else {
        spec.sigma = U * U.transpose();
    }
    // Symmetrize away round-off before factorization.
    spec.sigma = 0.5 * (spec.sigma + spec.sigma.transpose()).eval();

    auto llt = cholesky_with_jitter(spec.sigma, &spec.jitter_applied);
    spec.chol = llt.matrixL();
    return spec;
}

CdfResult mvn_cdf(const Eigen::VectorXd& z, const CovarianceSpec& cov, Rng& rng,
                  const MvnCdfOptions& options) {
    const int k = static_cast<int>(z.size());
    if (k < 1) throw InputError("mvn_cdf: empty limits");
    if (k != cov.dim()) throw InputError("mvn_cdf: limits/covariance size mismatch");
    if (!z.allFinite()) throw InputError("mvn_cdf: non-finite limits");

    if (k > 256) throw InputError("mvn_cdf: dimensions above 256 are unsupported");

    CdfResult result;
    if (k == 1) {
        result.value = univariate_phi(z[0] / std::sqrt(cov.sigma(0, 0)));
        result.std_error = 0.0;
        result.n_points = 0;
        return result;
    }
    if (is_diagonal(cov.sigma, 1e-12)) {
        double p = 1.0;
        for (int i = 0; i < k; ++i) p *= univariate_phi(z[i] / std::sqrt(cov.sigma(i, i)));
        result.value = p;
        result.std_error = 0.0;
        result.n_points = 0;
        return result;
    }

    // Reorder variables by increasing |z|, then refactorize the permuted
    // covariance for the sequentially-conditioned transform.
    std::vector<int> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return std::abs(z[a]) < std::abs(z[b]); });
    Eigen::VectorXd zp(k);
    Eigen::MatrixXd sp(k, k);
    for (int i = 0; i < k; ++i) {
        zp[i] = z[order[i]];
        for (int j = 0; j < k; ++j) sp(i, j) = cov.sigma(order[i], order[j]);
    }
    Eigen::MatrixXd L = cholesky_with_jitter(sp, nullptr).matrixL();

    // Randomized QMC: Richtmyer sequence w_ij = frac(n * sqrt(p_j) + shift_rj)
    // with n_shifts independent shifts.
    const int qdim = k - 1;
    static const std::vector<std::uint32_t> primes = first_primes(256);
    std::vector<double> lambda(qdim);
    for (int j = 0; j < qdim; ++j) lambda[j] = std::sqrt(static_cast<double>(primes[j]));

    const int R = std::max(2, options.n_shifts);
    std::vector<std::vector<double>> shift(R, std::vector<double>(qdim));
    for (int r = 0; r < R; ++r)
        for (int j = 0; j < qdim; ++j) shift[r][j] = rng.uniform();

    std::vector<double> sums(R, 0.0);
    std::vector<double> w(qdim);
    std::vector<double> y(qdim);
    std::int64_t done = 0;
    std::int64_t batch = 256;
    result.std_error = std::numeric_limits<double>::infinity();
    while (done < options.max_points_per_shift) {
        const std::int64_t n = std::min<std::int64_t>(batch, options.max_points_per_shift - done);
        for (int r = 0; r < R; ++r) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < n; ++i) {
                const double step = static_cast<double>(done + i + 1);
                for (int j = 0; j < qdim; ++j) {
                    double v = step * lambda[j] + shift[r][j];
                    w[j] = v - std::floor(v);
                }
                acc += conditioned_integrand(L, zp, w.data(), y);
            }
            sums[r] += acc;
        }
        done += n;
        batch = std::min<std::int64_t>(batch * 2, 1 << 14);

        double mean = 0.0;
        for (int r = 0; r < R; ++r) mean += sums[r] / static_cast<double>(done);
        mean /= R;
        double var = 0.0;
        for (int r = 0; r < R; ++r) {
            const double m_r = sums[r] / static_cast<double>(done);
            var += (m_r - mean) * (m_r - mean);
        }
        var /= (R - 1);
        result.value = mean;
        result.std_error = std::sqrt(var / R);
        if (result.std_error <= options.target_abs_error) break;
    }
    result.n_points = done * R;
    result.value = std::min(std::max(result.value, 0.0), 1.0);
    return result;
}

}  // namespace avgrob
