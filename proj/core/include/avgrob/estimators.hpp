#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avgrob/model.hpp"
#include "avgrob/mvn.hpp"

namespace avgrob {

enum class EstimatorKind { mc, taylor, taylor_mvs, mmse, mmse_mvs, softmax };

const char* estimator_name(EstimatorKind kind);
std::optional<EstimatorKind> estimator_from_name(const std::string& name);

// per_coordinate: eps ~ N(0, sigma^2 I). per_radius: eps ~ N(0, sigma^2/d I),
// under which ||eps|| concentrates at sigma for large d.
enum class NoiseScaling { per_coordinate, per_radius };

enum class NoiseKind { gaussian, uniform, custom_iid };

struct EstimatorConfig {
    EstimatorKind kind = EstimatorKind::taylor;
    double sigma = 0.1;
    int mc_samples = 10000;
    int mmse_samples = 5;
    double temperature = 1.0;  // softmax only
    std::uint64_t seed = 0;
    NoiseScaling noise_scaling = NoiseScaling::per_coordinate;
    NoiseKind noise_kind = NoiseKind::gaussian;
    std::optional<Eigen::MatrixXd> noise_cov;  // d x d PSD shape; eps ~ N(0, sigma^2 C)
    // Quantile of a zero-mean unit-variance distribution; required for
    // noise_kind == custom_iid, scaled by the effective sigma per coordinate.
    std::function<double(double)> noise_quantile;
    MvnCdfOptions cdf;

    void validate() const;
    double sigma_per_coordinate(int dim) const;
};

struct RobustnessEstimate {
    double value = 0.0;  // in [0, 1]
    EstimatorKind kind = EstimatorKind::taylor;
    double sigma = 0.0;
    int target_class = 0;
    std::optional<double> cdf_error;
    std::int64_t samples_used = 0;
};

RobustnessEstimate estimate_mc(const ClassifierModel& model, const Eigen::VectorXd& x,
                               const EstimatorConfig& config, Rng& rng);
RobustnessEstimate estimate_taylor(const ClassifierModel& model, const Eigen::VectorXd& x,
                                   const EstimatorConfig& config);
RobustnessEstimate estimate_taylor_mvs(const ClassifierModel& model, const Eigen::VectorXd& x,
                                       const EstimatorConfig& config);
RobustnessEstimate estimate_mmse(const ClassifierModel& model, const Eigen::VectorXd& x,
                                 const EstimatorConfig& config, Rng& rng);
RobustnessEstimate estimate_mmse_mvs(const ClassifierModel& model, const Eigen::VectorXd& x,
                                     const EstimatorConfig& config, Rng& rng);
RobustnessEstimate estimate_softmax(const ClassifierModel& model, const Eigen::VectorXd& x,
                                    const EstimatorConfig& config);

// Dispatch on config.kind with an explicit noise/shift stream.
RobustnessEstimate estimate_point(const ClassifierModel& model, const Eigen::VectorXd& x,
                                  const EstimatorConfig& config, Rng& rng);

struct BatchItem {
    std::size_t index = 0;
    RobustnessEstimate estimate;
    bool ok = false;
    std::string error;
};

// Per-point streams are derived from (config.seed, point index), so output is
// bit-identical for any worker count. Per-point failures are recorded and the
// batch continues.
std::vector<BatchItem> estimate_batch(const ClassifierModel& model,
                                      std::span<const Eigen::VectorXd> points,
                                      const EstimatorConfig& config, int workers);

}  // namespace avgrob
