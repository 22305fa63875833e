#include "avgrob/oracle.hpp"

#include <Eigen/Eigenvalues>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <thread>

#include "avgrob/errors.hpp"
#include "avgrob/mvn.hpp"

namespace avgrob {

namespace {

using MatVec = std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;

// Power iteration for the dominant eigenvalue of a PSD operator.
double power_iteration(const MatVec& apply, int dim, Rng& rng, double tol, int max_iters) {
    double best = 0.0;
    Eigen::VectorXd v(dim), w(dim);
    for (int attempt = 0; attempt < 3; ++attempt) {
        for (int i = 0; i < dim; ++i) v[i] = rng.normal();
        double norm = v.norm();
        if (norm == 0.0) continue;
        v /= norm;
        double lambda = 0.0;
        for (int it = 0; it < max_iters; ++it) {
            apply(v, w);
            lambda = v.dot(w);
            const double residual = (w - lambda * v).norm();
            norm = w.norm();
            if (norm == 0.0) break;  // operator annihilated v; eigenvalue 0
            v = w / norm;
            if (residual <= tol * std::max(1.0, std::abs(lambda))) break;
        }
        best = std::max(best, lambda);
    }
    return best;
}

double boundary_lambda_max(const QuadraticBoundary& b, int dim, Rng& rng) {
    MatVec apply = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
        out = b.quad_matvec(in);
    };
    return power_iteration(apply, dim, rng, 1e-10, 100000);
}

}  // namespace

std::pair<double, double> symmetric_eigen_extremes(const Eigen::MatrixXd& A) {
    if (A.rows() != A.cols()) throw InputError("symmetric_eigen_extremes: matrix not square");
    const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
    if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw InputError("symmetric_eigen_extremes: matrix not symmetric");
    const int d = static_cast<int>(A.rows());
    const double lambda_mean = A.trace() / static_cast<double>(d);

    // Shift by the Gershgorin radius so the dominant eigenvalue of the
    // shifted operator is lambda_max(A) + shift, not the one largest in
    // magnitude.
    const double shift = A.cwiseAbs().rowwise().sum().maxCoeff();
    Rng rng(0x9e3779b9u);
    MatVec apply = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
        out.noalias() = A * in;
        out += shift * in;
    };
    double lambda_max = power_iteration(apply, d, rng, 1e-10, 100000) - shift;

    // Deflation pass: guards against a start vector orthogonal to the top
    // eigenspace.
    Eigen::VectorXd v(d);
    Rng rng2(0x51237u);
    for (int i = 0; i < d; ++i) v[i] = rng2.normal();
    v.normalize();
    Eigen::VectorXd w = A * v + shift * v;
    if (v.dot(w) - shift > lambda_max) {
        MatVec deflated = [&](const Eigen::VectorXd& in, Eigen::VectorXd& out) {
            out.noalias() = A * in;
            out += shift * in;
        };
        lambda_max = std::max(lambda_max, power_iteration(deflated, d, rng2, 1e-10, 100000) - shift);
    }
    return {lambda_max, lambda_mean};
}

QuadraticOracleCase make_oracle_case(QuadraticBoundaryModel model, double sigma) {
    if (!(sigma > 0.0)) throw InputError("make_oracle_case: sigma must be > 0");
    QuadraticOracleCase oracle_case;
    const int k = model.n_boundaries();
    const int d = model.dim;
    oracle_case.sigma = sigma;
    oracle_case.lambda_max.resize(k);
    oracle_case.lambda_mean.resize(k);
    oracle_case.lin_norms.resize(k);
    Eigen::MatrixXd U(k, d);
    Rng rng(0xabcdef12u);
    for (int i = 0; i < k; ++i) {
        const QuadraticBoundary& b = model.boundaries[i];
        oracle_case.lambda_max[i] = boundary_lambda_max(b, d, rng);
        oracle_case.lambda_mean[i] = b.quad_trace() / static_cast<double>(d);
        oracle_case.lin_norms[i] = b.lin.norm();
        if (oracle_case.lin_norms[i] <= 0.0)
            throw InputError("make_oracle_case: boundary with zero linear term");
        U.row(i) = b.lin.transpose() / oracle_case.lin_norms[i];
    }
    CovarianceSpec cov = build_covariance(U);
    double log_det = 0.0;
    for (int i = 0; i < k; ++i) log_det += std::log(cov.chol(i, i));
    oracle_case.k_const =
        std::pow(2.0 * Rng::pi(), -0.5 * k) * std::exp(-log_det);
    oracle_case.model = std::move(model);
    return oracle_case;
}

QuadraticOracleCase make_random_case(int dim, int n_classes, double sigma, Rng& rng,
                                     const CaseGenOptions& options) {
    if (n_classes < 2) throw InputError("make_random_case: need n_classes >= 2");
    const int k = n_classes - 1;
    const double s = sigma / std::sqrt(static_cast<double>(dim));
    std::vector<Eigen::MatrixXd> factors;
    std::vector<double> isos(k, 0.0);
    std::vector<Eigen::VectorXd> lins;
    std::vector<double> offsets;
    for (int i = 0; i < k; ++i) {
        Eigen::MatrixXd B(options.rank, dim);
        for (int r = 0; r < options.rank; ++r)
            for (int c = 0; c < dim; ++c) B(r, c) = rng.normal();
        Eigen::MatrixXd F = B / std::sqrt(static_cast<double>(dim));
        // Nonzero spectrum of F^T F equals that of the small Gram matrix.
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(F * F.transpose(),
                                                          Eigen::EigenvaluesOnly);
        const double lmax0 = es.eigenvalues().maxCoeff();
        const double target =
            options.lambda_max_lo + (options.lambda_max_hi - options.lambda_max_lo) * rng.uniform();
        F *= std::sqrt(target / lmax0);

        Eigen::VectorXd u(dim);
        for (int c = 0; c < dim; ++c) u[c] = rng.normal();
        u *= options.lin_norm_scale * std::sqrt(static_cast<double>(dim)) / u.norm();

        const double z = options.z_lo + (options.z_hi - options.z_lo) * rng.uniform();
        offsets.push_back(z * s * u.norm());
        factors.push_back(std::move(F));
        lins.push_back(std::move(u));
    }
    QuadraticBoundaryModel model = QuadraticBoundaryModel::from_factors(
        std::move(factors), std::move(isos), std::move(lins), std::move(offsets));
    return make_oracle_case(std::move(model), sigma);
}

BruteforceResult quad_probust_bruteforce(const QuadraticOracleCase& oracle_case,
                                         std::int64_t n_samples, Rng& rng) {
    if (n_samples < 1) throw InputError("quad_probust_bruteforce: need n_samples >= 1");
    const int d = oracle_case.dim();
    const int k = oracle_case.model.n_boundaries();
    const double s = oracle_case.sigma / std::sqrt(static_cast<double>(d));

    bool any_iso = false;
    for (const auto& b : oracle_case.model.boundaries)
        if (b.iso != 0.0) any_iso = true;

    const std::int64_t batch = std::min<std::int64_t>(n_samples, 2048);
    Eigen::MatrixXd draws(d, batch);
    Eigen::RowVectorXd colsq(batch);
    std::vector<Eigen::RowVectorXd> g(k, Eigen::RowVectorXd(batch));
    std::int64_t hits = 0, left = n_samples;
    while (left > 0) {
        const std::int64_t n = std::min(batch, left);
        for (std::int64_t j = 0; j < n; ++j)
            for (int i = 0; i < d; ++i) draws(i, j) = s * rng.normal();
        auto block = draws.leftCols(n);
        if (any_iso) colsq.head(n) = block.colwise().squaredNorm();
        for (int bi = 0; bi < k; ++bi) {
            const QuadraticBoundary& b = oracle_case.model.boundaries[bi];
            auto row = g[bi].head(n);
            row.noalias() = b.lin.transpose() * block;
            row.array() += b.offset;
            if (b.dense_quad) {
                for (std::int64_t j = 0; j < n; ++j)
                    row[j] += block.col(j).dot(*b.dense_quad * block.col(j));
            } else {
                if (b.factor.rows() > 0)
                    row += (b.factor * block).colwise().squaredNorm();
                if (b.iso != 0.0) row += b.iso * colsq.head(n);
            }
        }
        for (std::int64_t j = 0; j < n; ++j) {
            bool inside = true;
            for (int bi = 0; bi < k; ++bi) {
                if (!(g[bi][j] > 0.0)) {
                    inside = false;
                    break;
                }
            }
            if (inside) ++hits;
        }
        left -= n;
    }
    BruteforceResult result;
    result.samples = n_samples;
    result.value = static_cast<double>(hits) / static_cast<double>(n_samples);
    result.std_error =
        std::sqrt(result.value * (1.0 - result.value) / static_cast<double>(n_samples));
    return result;
}

double taylor_bound(const QuadraticOracleCase& oracle_case) {
    const int k = oracle_case.n_classes() - 1;
    double prod = 1.0;
    for (int i = 0; i < k; ++i)
        prod *= oracle_case.lambda_max[i] / oracle_case.lin_norms[i];
    return oracle_case.k_const * std::pow(oracle_case.sigma, k) * prod;
}

double mmse_bound(const QuadraticOracleCase& oracle_case) {
    const int k = oracle_case.n_classes() - 1;
    double prod = 1.0;
    for (int i = 0; i < k; ++i) {
        const double gap =
            std::max(oracle_case.lambda_max[i] - oracle_case.lambda_mean[i], 0.0);
        prod *= gap / oracle_case.lin_norms[i];
    }
    return oracle_case.k_const * std::pow(oracle_case.sigma, k) * prod;
}

namespace {

BoundReport verify_against(const QuadraticOracleCase& oracle_case,
                           EstimatorKind estimator_kind, const BruteforceResult& bf,
                           Rng& rng, int mmse_samples) {
    if (oracle_case.dim() < 200)
        throw InputError("verify_bounds: bounds are asymptotic in d; need dim >= 200");
    if (estimator_kind != EstimatorKind::taylor && estimator_kind != EstimatorKind::mmse)
        throw InputError("verify_bounds: estimator must be taylor or mmse");

    ClassifierModel model(oracle_case.model);
    const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(oracle_case.dim());
    if (predict(model, x0) != 0)
        throw InputError("verify_bounds: case does not classify x = 0 to the target class");

    EstimatorConfig config;
    config.kind = estimator_kind;
    config.sigma = oracle_case.sigma;
    config.noise_scaling = NoiseScaling::per_radius;
    config.mmse_samples = mmse_samples;

    BoundReport report;
    report.bruteforce = bf.value;
    report.bruteforce_std_error = bf.std_error;
    report.estimate = estimate_point(model, x0, config, rng).value;
    report.empirical_error = std::abs(bf.value - report.estimate);
    report.bound = estimator_kind == EstimatorKind::taylor ? taylor_bound(oracle_case)
                                                           : mmse_bound(oracle_case);
    report.satisfied = report.empirical_error <= report.bound + 3.0 * bf.std_error;
    return report;
}

}  // namespace

BoundReport verify_bounds(const QuadraticOracleCase& oracle_case, EstimatorKind estimator_kind,
                          std::int64_t n_samples, Rng& rng, int mmse_samples) {
    BruteforceResult bf = quad_probust_bruteforce(oracle_case, n_samples, rng);
    return verify_against(oracle_case, estimator_kind, bf, rng, mmse_samples);
}

std::string case_digest(const QuadraticOracleCase& oracle_case) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](double v) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, sizeof(bits));
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    mix(static_cast<double>(oracle_case.dim()));
    mix(static_cast<double>(oracle_case.n_classes()));
    mix(oracle_case.sigma);
    for (int i = 0; i < oracle_case.lambda_max.size(); ++i) {
        mix(oracle_case.lambda_max[i]);
        mix(oracle_case.lambda_mean[i]);
        mix(oracle_case.lin_norms[i]);
        mix(oracle_case.model.boundaries[i].offset);
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

std::vector<SweepCaseResult> bound_sweep(const SweepConfig& config) {
    if (config.n_cases < 1) throw InputError("bound_sweep: need at least one case");
    if (config.class_counts.empty() || config.sigmas.empty())
        throw InputError("bound_sweep: empty class or sigma grid");

    std::vector<SweepCaseResult> results(config.n_cases);
    std::atomic<int> next{0};
    auto run = [&]() {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= config.n_cases) break;
            Rng rng = Rng::for_point(config.seed, static_cast<std::uint64_t>(i) + 1);
            const int c = config.class_counts[i % config.class_counts.size()];
            const double sigma = config.sigmas[(i / config.class_counts.size()) % config.sigmas.size()];
            QuadraticOracleCase oracle_case =
                make_random_case(config.dim, c, sigma, rng, config.gen);
            SweepCaseResult& out = results[i];
            out.digest = case_digest(oracle_case);
            out.n_classes = c;
            out.dim = config.dim;
            out.sigma = sigma;
            BruteforceResult bf =
                quad_probust_bruteforce(oracle_case, config.bruteforce_samples, rng);
            out.taylor = verify_against(oracle_case, EstimatorKind::taylor, bf, rng,
                                        config.mmse_samples);
            out.mmse = verify_against(oracle_case, EstimatorKind::mmse, bf, rng,
                                      config.mmse_samples);
        }
    };
    const int workers = std::max(1, std::min(config.workers, config.n_cases));
    if (workers == 1) {
        run();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(run);
        for (auto& t : pool) t.join();
    }
    return results;
}

}  // namespace avgrob
