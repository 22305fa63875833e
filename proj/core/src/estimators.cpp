#include "avgrob/estimators.hpp"

#include <atomic>
#include <cmath>
#include <thread>

#include "avgrob/errors.hpp"

namespace avgrob {

const char* estimator_name(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::mc: return "mc";
        case EstimatorKind::taylor: return "taylor";
        case EstimatorKind::taylor_mvs: return "taylor_mvs";
        case EstimatorKind::mmse: return "mmse";
        case EstimatorKind::mmse_mvs: return "mmse_mvs";
        case EstimatorKind::softmax: return "softmax";
    }
    return "unknown";
}

std::optional<EstimatorKind> estimator_from_name(const std::string& name) {
    if (name == "mc") return EstimatorKind::mc;
    if (name == "taylor") return EstimatorKind::taylor;
    if (name == "taylor_mvs") return EstimatorKind::taylor_mvs;
    if (name == "mmse") return EstimatorKind::mmse;
    if (name == "mmse_mvs") return EstimatorKind::mmse_mvs;
    if (name == "softmax") return EstimatorKind::softmax;
    return std::nullopt;
}

void EstimatorConfig::validate() const {
    if (!(sigma > 0.0)) throw InputError("EstimatorConfig: sigma must be > 0");
    if (mc_samples < 1) throw InputError("EstimatorConfig: mc_samples must be >= 1");
    if (mmse_samples < 1) throw InputError("EstimatorConfig: mmse_samples must be >= 1");
    if (!(temperature > 0.0)) throw InputError("EstimatorConfig: temperature must be > 0");
    if (noise_kind == NoiseKind::custom_iid && !noise_quantile)
        throw InputError("EstimatorConfig: custom_iid noise requires a quantile function");
}

double EstimatorConfig::sigma_per_coordinate(int dim) const {
    return noise_scaling == NoiseScaling::per_radius
               ? sigma / std::sqrt(static_cast<double>(dim))
               : sigma;
}

namespace {

constexpr double kSqrt3 = 1.7320508075688772935;

// Draws input perturbations for one point; owns the Cholesky factor of the
// noise covariance shape when one is configured.
class NoiseSampler {
public:
    NoiseSampler(const EstimatorConfig& config, int dim)
        : config_(config), dim_(dim), sigma_coord_(config.sigma_per_coordinate(dim)) {
        if (config.noise_cov) {
            if (config.noise_kind != NoiseKind::gaussian)
                throw InputError("noise covariance requires gaussian noise");
            if (config.noise_cov->rows() != dim || config.noise_cov->cols() != dim)
                throw InputError("noise covariance dimension mismatch");
            Eigen::LLT<Eigen::MatrixXd> llt(*config.noise_cov);
            double jitter = 1e-12;
            while (llt.info() != Eigen::Success && jitter <= 1e-6) {
                Eigen::MatrixXd bumped = *config.noise_cov;
                bumped.diagonal().array() += jitter;
                llt.compute(bumped);
                jitter *= 10.0;
            }
            if (llt.info() != Eigen::Success)
                throw DegenerateCovarianceError("noise covariance not PSD");
            chol_ = llt.matrixL();
        }
    }

    double sigma_per_coordinate() const { return sigma_coord_; }

    void fill(Rng& rng, Eigen::VectorXd& eps) {
        eps.resize(dim_);
        switch (config_.noise_kind) {
            case NoiseKind::gaussian:
                for (int i = 0; i < dim_; ++i) eps[i] = rng.normal();
                if (chol_.size() > 0) eps = (chol_ * eps).eval();
                break;
            case NoiseKind::uniform:
                for (int i = 0; i < dim_; ++i)
                    eps[i] = kSqrt3 * (2.0 * rng.uniform() - 1.0);
                break;
            case NoiseKind::custom_iid:
                for (int i = 0; i < dim_; ++i)
                    eps[i] = config_.noise_quantile(rng.uniform_interior());
                break;
        }
        eps *= sigma_coord_;
    }

private:
    const EstimatorConfig& config_;
    int dim_;
    double sigma_coord_;
    Eigen::MatrixXd chol_;
};

void require_kind(const EstimatorConfig& config, EstimatorKind expected) {
    config.validate();
    if (config.kind != expected)
        throw InputError(std::string("estimator called with config.kind != ") +
                         estimator_name(expected));
}

RobustnessEstimate cdf_estimate(const BoundaryProfile& profile, const EstimatorConfig& config,
                                Rng& rng, EstimatorKind kind, std::int64_t samples_used) {
    CovarianceSpec cov = build_covariance(profile.U, config.noise_cov);
    CdfResult cdf = mvn_cdf(profile.z, cov, rng, config.cdf);
    RobustnessEstimate est;
    est.value = cdf.value;
    est.kind = kind;
    est.sigma = config.sigma;
    est.target_class = profile.target;
    est.cdf_error = cdf.std_error;
    est.samples_used = samples_used;
    return est;
}

RobustnessEstimate mvs_estimate(const BoundaryProfile& profile, const EstimatorConfig& config,
                                EstimatorKind kind, std::int64_t samples_used) {
    RobustnessEstimate est;
    est.value = mv_sigmoid(profile.z);
    est.kind = kind;
    est.sigma = config.sigma;
    est.target_class = profile.target;
    est.samples_used = samples_used;
    return est;
}

BoundaryProfile smoothed_profile(const ClassifierModel& model, const Eigen::VectorXd& x,
                                 const EstimatorConfig& config, Rng& rng) {
    const int target = predict(model, x);
    NoiseSampler sampler(config, model.input_dim());
    std::vector<Eigen::VectorXd> draws(config.mmse_samples);
    for (auto& eps : draws) sampler.fill(rng, eps);
    center_draws(draws);
    return smoothed_boundary_profile_with_draws(model, x, target,
                                                sampler.sigma_per_coordinate(), draws);
}

}  // namespace

RobustnessEstimate estimate_mc(const ClassifierModel& model, const Eigen::VectorXd& x,
                               const EstimatorConfig& config, Rng& rng) {
    require_kind(config, EstimatorKind::mc);
    const int target = predict(model, x);
    NoiseSampler sampler(config, model.input_dim());
    Eigen::VectorXd eps;
    std::int64_t consistent = 0;
    for (int j = 0; j < config.mc_samples; ++j) {
        sampler.fill(rng, eps);
        if (predict(model, x + eps) == target) ++consistent;
    }
    RobustnessEstimate est;
    est.value = static_cast<double>(consistent) / static_cast<double>(config.mc_samples);
    est.kind = EstimatorKind::mc;
    est.sigma = config.sigma;
    est.target_class = target;
    est.samples_used = config.mc_samples;
    return est;
}

RobustnessEstimate estimate_taylor(const ClassifierModel& model, const Eigen::VectorXd& x,
                                   const EstimatorConfig& config) {
    require_kind(config, EstimatorKind::taylor);
    Rng rng(config.seed);
    const int target = predict(model, x);
    BoundaryProfile profile =
        boundary_profile(model, x, target, config.sigma_per_coordinate(model.input_dim()));
    return cdf_estimate(profile, config, rng, EstimatorKind::taylor, 0);
}

RobustnessEstimate estimate_taylor_mvs(const ClassifierModel& model, const Eigen::VectorXd& x,
                                       const EstimatorConfig& config) {
    require_kind(config, EstimatorKind::taylor_mvs);
    const int target = predict(model, x);
    BoundaryProfile profile =
        boundary_profile(model, x, target, config.sigma_per_coordinate(model.input_dim()));
    return mvs_estimate(profile, config, EstimatorKind::taylor_mvs, 0);
}

RobustnessEstimate estimate_mmse(const ClassifierModel& model, const Eigen::VectorXd& x,
                                 const EstimatorConfig& config, Rng& rng) {
    require_kind(config, EstimatorKind::mmse);
    BoundaryProfile profile = smoothed_profile(model, x, config, rng);
    return cdf_estimate(profile, config, rng, EstimatorKind::mmse, config.mmse_samples);
}

RobustnessEstimate estimate_mmse_mvs(const ClassifierModel& model, const Eigen::VectorXd& x,
                                     const EstimatorConfig& config, Rng& rng) {
    require_kind(config, EstimatorKind::mmse_mvs);
    BoundaryProfile profile = smoothed_profile(model, x, config, rng);
    return mvs_estimate(profile, config, EstimatorKind::mmse_mvs, config.mmse_samples);
}

RobustnessEstimate estimate_softmax(const ClassifierModel& model, const Eigen::VectorXd& x,
                                    const EstimatorConfig& config) {
    require_kind(config, EstimatorKind::softmax);
    const Logits logits = forward(model, x);
    const int c = model.n_classes();
    int target = 0;
    for (int i = 1; i < c; ++i)
        if (logits.values[i] > logits.values[target]) target = i;
    // softmax_t(f / T) == mv-sigmoid of the margins divided by T.
    Eigen::VectorXd scaled(c - 1);
    int r = 0;
    for (int i = 0; i < c; ++i) {
        if (i == target) continue;
        scaled[r++] = (logits.values[target] - logits.values[i]) / config.temperature;
    }
    RobustnessEstimate est;
    est.value = mv_sigmoid(scaled);
    est.kind = EstimatorKind::softmax;
    est.sigma = config.sigma;
    est.target_class = target;
    est.samples_used = 0;
    return est;
}

RobustnessEstimate estimate_point(const ClassifierModel& model, const Eigen::VectorXd& x,
                                  const EstimatorConfig& config, Rng& rng) {
    switch (config.kind) {
        case EstimatorKind::mc: return estimate_mc(model, x, config, rng);
        case EstimatorKind::taylor: {
            config.validate();
            const int target = predict(model, x);
            BoundaryProfile profile = boundary_profile(
                model, x, target, config.sigma_per_coordinate(model.input_dim()));
            return cdf_estimate(profile, config, rng, EstimatorKind::taylor, 0);
        }
        case EstimatorKind::taylor_mvs: return estimate_taylor_mvs(model, x, config);
        case EstimatorKind::mmse: return estimate_mmse(model, x, config, rng);
        case EstimatorKind::mmse_mvs: return estimate_mmse_mvs(model, x, config, rng);
        case EstimatorKind::softmax: return estimate_softmax(model, x, config);
    }
    throw InputError("estimate_point: unknown estimator kind");
}

std::vector<BatchItem> estimate_batch(const ClassifierModel& model,
                                      std::span<const Eigen::VectorXd> points,
                                      const EstimatorConfig& config, int workers) {
    if (points.empty()) throw InputError("estimate_batch: empty dataset");
    config.validate();
    const std::size_t n = points.size();
    std::vector<BatchItem> results(n);
    const int n_workers =
        std::max(1, std::min<int>(workers, static_cast<int>(n)));

    std::atomic<std::size_t> next{0};
    auto run = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) break;
            BatchItem& item = results[i];
            item.index = i;
            try {
                Rng rng = Rng::for_point(config.seed, i);
                item.estimate = estimate_point(model, points[i], config, rng);
                item.ok = true;
            } catch (const std::exception& e) {
                item.ok = false;
                item.error = e.what();
            }
        }
    };

    if (n_workers == 1) {
        run();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(run);
        for (auto& t : pool) t.join();
    }
    return results;
}

}  // namespace avgrob
