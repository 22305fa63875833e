#include <benchmark/benchmark.h>

#include <Eigen/Dense>
#include <cmath>

#include "avgrob/estimators.hpp"
#include "avgrob/model.hpp"
#include "avgrob/mvn.hpp"

namespace {

using namespace avgrob;

ClassifierModel make_linear(int c, int d) {
    Rng rng(42);
    LinearModel lm;
    lm.weights.resize(c, d);
    lm.biases.resize(c);
    for (int i = 0; i < c; ++i) {
        for (int j = 0; j < d; ++j) lm.weights(i, j) = rng.normal();
        lm.biases[i] = 0.1 * rng.normal();
    }
    return ClassifierModel(std::move(lm));
}

ClassifierModel make_conv_net() {
    Rng rng(7);
    auto conv = [&rng](int in_ch, int out_ch, int k) {
        Conv2dLayer l;
        l.in_channels = in_ch;
        l.out_channels = out_ch;
        l.kernel_h = l.kernel_w = k;
        l.stride = 1;
        l.padding = k / 2;
        l.kernels.resize(static_cast<std::size_t>(in_ch) * out_ch * k * k);
        for (double& v : l.kernels) v = rng.normal() / (k * std::sqrt(in_ch));
        l.bias = Eigen::VectorXd::Zero(out_ch);
        return l;
    };
    NetworkModel net;
    net.input_shape = {1, 12, 12};
    net.n_classes = 10;
    net.layers.push_back(conv(1, 6, 5));
    net.layers.push_back(ReluLayer{});
    net.layers.push_back(MaxPool2dLayer{2});
    net.layers.push_back(conv(6, 12, 5));
    net.layers.push_back(ReluLayer{});
    net.layers.push_back(MaxPool2dLayer{2});
    net.layers.push_back(FlattenLayer{});
    Eigen::MatrixXd w(10, 108);
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 108; ++j) w(i, j) = rng.normal() / std::sqrt(108.0);
    net.layers.push_back(DenseLayer{w, Eigen::VectorXd::Zero(10)});
    return ClassifierModel(std::move(net));
}

Eigen::VectorXd make_point(int d, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::VectorXd x(d);
    for (int i = 0; i < d; ++i) x[i] = rng.normal();
    return x;
}

void BM_mvn_cdf(benchmark::State& state) {
    const int k = static_cast<int>(state.range(0));
    Rng gen(3);
    Eigen::MatrixXd u(k, k + 3);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k + 3; ++j) u(i, j) = gen.normal();
        u.row(i).normalize();
    }
    CovarianceSpec spec = build_covariance(u);
    Eigen::VectorXd z(k);
    for (int i = 0; i < k; ++i) z[i] = gen.normal();
    for (auto _ : state) {
        Rng rng(11);
        benchmark::DoNotOptimize(mvn_cdf(z, spec, rng).value);
    }
}
BENCHMARK(BM_mvn_cdf)->Arg(3)->Arg(9)->Arg(20);

void BM_taylor_linear(benchmark::State& state) {
    ClassifierModel model = make_linear(10, 784);
    Eigen::VectorXd x = make_point(784, 5);
    EstimatorConfig config;
    config.kind = EstimatorKind::taylor;
    config.sigma = 0.1;
    for (auto _ : state) benchmark::DoNotOptimize(estimate_taylor(model, x, config).value);
}
BENCHMARK(BM_taylor_linear);

void BM_taylor_conv(benchmark::State& state) {
    ClassifierModel model = make_conv_net();
    Eigen::VectorXd x = make_point(model.input_dim(), 5);
    EstimatorConfig config;
    config.kind = EstimatorKind::taylor;
    config.sigma = 0.1;
    for (auto _ : state) benchmark::DoNotOptimize(estimate_taylor(model, x, config).value);
}
BENCHMARK(BM_taylor_conv);

void BM_mmse_conv(benchmark::State& state) {
    ClassifierModel model = make_conv_net();
    Eigen::VectorXd x = make_point(model.input_dim(), 5);
    EstimatorConfig config;
    config.kind = EstimatorKind::mmse;
    config.sigma = 0.1;
    config.mmse_samples = static_cast<int>(state.range(0));
    for (auto _ : state) {
        Rng rng(9);
        benchmark::DoNotOptimize(estimate_mmse(model, x, config, rng).value);
    }
}
BENCHMARK(BM_mmse_conv)->Arg(5)->Arg(50);

void BM_mc_conv(benchmark::State& state) {
    ClassifierModel model = make_conv_net();
    Eigen::VectorXd x = make_point(model.input_dim(), 5);
    EstimatorConfig config;
    config.kind = EstimatorKind::mc;
    config.sigma = 0.1;
    config.mc_samples = static_cast<int>(state.range(0));
    for (auto _ : state) {
        Rng rng(9);
        benchmark::DoNotOptimize(estimate_mc(model, x, config, rng).value);
    }
}
BENCHMARK(BM_mc_conv)->Arg(100)->Arg(1000);

void BM_boundary_profile_conv(benchmark::State& state) {
    ClassifierModel model = make_conv_net();
    Eigen::VectorXd x = make_point(model.input_dim(), 5);
    for (auto _ : state)
        benchmark::DoNotOptimize(boundary_profile(model, x, 0, 0.1).margins.sum());
}
BENCHMARK(BM_boundary_profile_conv);

}  // namespace

BENCHMARK_MAIN();
