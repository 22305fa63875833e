#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "avgrob/rng.hpp"

namespace avgrob {

struct Logits {
    Eigen::VectorXd values;  // length C
};

// f(x) = W x + b with one row of W per class.
struct LinearModel {
    Eigen::MatrixXd weights;  // C x d
    Eigen::VectorXd biases;   // C

    void validate() const;
    int n_classes() const { return static_cast<int>(weights.rows()); }
    int input_dim() const { return static_cast<int>(weights.cols()); }
};

// One decision boundary g(x) = x^T A x + u^T x + c with A symmetric PSD.
// A is held either densely or as factor^T factor + iso * I; the factored
// form keeps large-d Monte-Carlo sweeps at O(rank * d) per evaluation.
struct QuadraticBoundary {
    std::optional<Eigen::MatrixXd> dense_quad;  // A, d x d
    Eigen::MatrixXd factor;                     // r x d (r may be 0)
    double iso = 0.0;
    Eigen::VectorXd lin;  // u
    double offset = 0.0;  // c

    double value(const Eigen::VectorXd& x) const;
    Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;  // 2 A x + u
    Eigen::VectorXd quad_matvec(const Eigen::VectorXd& v) const;  // A v
    double quad_trace() const;
    Eigen::MatrixXd dense() const;  // materializes A
};

// C-1 boundary functions of an implicit target class 0. Logits are
// synthesized as f_0 = 0, f_i = -g_i so that predict() and gradients behave
// like any other model.
struct QuadraticBoundaryModel {
    std::vector<QuadraticBoundary> boundaries;
    int dim = 0;

    static QuadraticBoundaryModel from_dense(std::vector<Eigen::MatrixXd> quads,
                                             std::vector<Eigen::VectorXd> lins,
                                             std::vector<double> offsets);
    static QuadraticBoundaryModel from_factors(std::vector<Eigen::MatrixXd> factors,
                                               std::vector<double> isos,
                                               std::vector<Eigen::VectorXd> lins,
                                               std::vector<double> offsets);

    int n_boundaries() const { return static_cast<int>(boundaries.size()); }
    int n_classes() const { return n_boundaries() + 1; }
    int input_dim() const { return dim; }
};

struct DenseLayer {
    Eigen::MatrixXd weights;  // out x in
    Eigen::VectorXd bias;     // out
};

struct ReluLayer {};

struct Conv2dLayer {
    int out_channels = 0;
    int in_channels = 0;
    int kernel_h = 0;
    int kernel_w = 0;
    int stride = 1;
    int padding = 0;                // symmetric zero padding
    std::vector<double> kernels;    // [out][in][kh][kw], row-major
    Eigen::VectorXd bias;           // out

    double kernel_at(int oc, int ic, int r, int c) const {
        return kernels[((static_cast<std::size_t>(oc) * in_channels + ic) * kernel_h + r) *
                           kernel_w + c];
    }
};

struct MaxPool2dLayer {
    int window = 2;  // stride equals window, no padding
};

struct FlattenLayer {};

using Layer = std::variant<DenseLayer, ReluLayer, Conv2dLayer, MaxPool2dLayer, FlattenLayer>;

// Feed-forward network with dense / relu / conv2d / maxpool2d / flatten
// layers. Immutable after construction; shape-checked end to end.
struct NetworkModel {
    std::vector<Layer> layers;
    std::vector<int> input_shape;  // [d] or [channels, height, width]
    int n_classes = 0;

    void validate() const;  // throws InputError on shape or parameter problems
    int input_dim() const;
};

class ClassifierModel {
public:
    using Variant = std::variant<LinearModel, QuadraticBoundaryModel, NetworkModel>;

    explicit ClassifierModel(LinearModel m);
    explicit ClassifierModel(QuadraticBoundaryModel m);
    explicit ClassifierModel(NetworkModel m);

    int n_classes() const { return n_classes_; }
    int input_dim() const { return input_dim_; }
    const Variant& variant() const { return model_; }

    template <class T>
    const T* as() const {
        return std::get_if<T>(&model_);
    }

private:
    Variant model_;
    int n_classes_ = 0;
    int input_dim_ = 0;
};

// Margins, gradients, and standardized distances of the C-1 decision
// boundaries g_i = f_t - f_i at a point; the input every analytical
// estimator consumes. Boundaries are ordered by ascending class index,
// skipping t.
struct BoundaryProfile {
    int target = 0;
    Eigen::VectorXd margins;     // g_i(x), length C-1
    Eigen::MatrixXd grad_rows;   // (C-1) x d
    Eigen::VectorXd grad_norms;  // ||grad g_i||_2
    Eigen::VectorXd z;           // g_i / (sigma ||grad g_i||), clamped to [-12, 12]
    Eigen::MatrixXd U;           // grad rows normalized to unit length
};

Logits forward(const ClassifierModel& model, const Eigen::VectorXd& x);
int predict(const ClassifierModel& model, const Eigen::VectorXd& x);

BoundaryProfile boundary_profile(const ClassifierModel& model, const Eigen::VectorXd& x,
                                 int target, double sigma);

// MMSE smoothing: margins and gradients averaged over N draws of
// eps ~ N(0, sigma^2 I); the same draws feed both averages.
BoundaryProfile smoothed_boundary_profile(const ClassifierModel& model,
                                          const Eigen::VectorXd& x, int target,
                                          double sigma, int n_samples, Rng& rng);

// Averaging core with caller-supplied perturbations (tests use a zero draw).
BoundaryProfile smoothed_boundary_profile_with_draws(const ClassifierModel& model,
                                                     const Eigen::VectorXd& x, int target,
                                                     double sigma,
                                                     std::span<const Eigen::VectorXd> draws);

// Subtracts the empirical mean so the draw set sums to zero exactly.
void center_draws(std::vector<Eigen::VectorXd>& draws);

// Internal: gradient rows of seed-weighted logit sums for a network, one
// reverse pass per seed row over a shared forward tape.
Logits network_forward(const NetworkModel& net, const Eigen::VectorXd& x);
Eigen::MatrixXd network_input_gradients(const NetworkModel& net, const Eigen::VectorXd& x,
                                        const Eigen::MatrixXd& seeds,
                                        Logits* logits_out = nullptr);

constexpr double kZClamp = 12.0;
constexpr double kZeroGradTol = 1e-12;

}  // namespace avgrob
