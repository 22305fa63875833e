// Acceptance suite: end-to-end checks of the estimator stack at pinned
// tolerances. Each criterion prints one [PASS]/[FAIL] line; the exit code is
// the number of failures.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "avgrob/data_io.hpp"
#include "avgrob/estimators.hpp"
#include "avgrob/model.hpp"
#include "avgrob/mvn.hpp"
#include "avgrob/oracle.hpp"

using namespace avgrob;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int hw_workers() {
    if (const char* env = std::getenv("AVGROB_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end && *end == '\0' && v > 0) return static_cast<int>(v);
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return std::max(1, std::min<int>(static_cast<int>(hc), 8));
}

// Index-sharded parallel for; deterministic per-index work.
void parallel_for(int n, int workers, const std::function<void(int)>& body) {
    std::atomic<int> next{0};
    auto run = [&]() {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) break;
            body(i);
        }
    };
    const int w = std::max(1, std::min(workers, n));
    if (w == 1) {
        run();
        return;
    }
    std::vector<std::thread> pool;
    for (int t = 0; t < w; ++t) pool.emplace_back(run);
    for (auto& t : pool) t.join();
}

ClassifierModel random_linear(int c, int d, std::uint64_t seed, double bias_scale = 0.2) {
    Rng rng(seed);
    LinearModel lm;
    lm.weights.resize(c, d);
    lm.biases.resize(c);
    for (int i = 0; i < c; ++i) {
        for (int j = 0; j < d; ++j) lm.weights(i, j) = rng.normal();
        lm.biases[i] = bias_scale * rng.normal();
    }
    return ClassifierModel(std::move(lm));
}

NetworkModel relu_net(int d, int hidden, int c, std::uint64_t seed, double scale) {
    Rng rng(seed);
    auto randmat = [&rng](int r, int cc, double s) {
        Eigen::MatrixXd m(r, cc);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < cc; ++j) m(i, j) = s * rng.normal() / std::sqrt(cc);
        return m;
    };
    auto randvec = [&rng](int n, double s) {
        Eigen::VectorXd v(n);
        for (int i = 0; i < n; ++i) v[i] = s * rng.normal();
        return v;
    };
    NetworkModel net;
    net.input_shape = {d};
    net.n_classes = c;
    net.layers.push_back(DenseLayer{randmat(hidden, d, scale), randvec(hidden, 0.2)});
    net.layers.push_back(ReluLayer{});
    net.layers.push_back(DenseLayer{randmat(hidden, hidden, scale), randvec(hidden, 0.2)});
    net.layers.push_back(ReluLayer{});
    net.layers.push_back(DenseLayer{randmat(c, hidden, scale), randvec(c, 0.2)});
    return net;
}

NetworkModel small_conv_net(std::uint64_t seed) {
    Rng rng(seed);
    auto conv = [&rng](int in_ch, int out_ch, int k, double s) {
        Conv2dLayer l;
        l.in_channels = in_ch;
        l.out_channels = out_ch;
        l.kernel_h = l.kernel_w = k;
        l.stride = 1;
        l.padding = k / 2;
        l.kernels.resize(static_cast<std::size_t>(in_ch) * out_ch * k * k);
        for (double& v : l.kernels) v = s * rng.normal() / (k * std::sqrt(in_ch));
        l.bias.resize(out_ch);
        for (int i = 0; i < out_ch; ++i) l.bias[i] = 0.05 * rng.normal();
        return l;
    };
    NetworkModel net;
    net.input_shape = {1, 12, 12};
    net.n_classes = 10;
    net.layers.push_back(conv(1, 6, 5, 1.5));
    net.layers.push_back(ReluLayer{});
    net.layers.push_back(MaxPool2dLayer{2});
    net.layers.push_back(conv(6, 12, 5, 1.5));
    net.layers.push_back(ReluLayer{});
    net.layers.push_back(MaxPool2dLayer{2});
    net.layers.push_back(FlattenLayer{});
    Eigen::MatrixXd w(10, 12 * 3 * 3);
    Eigen::VectorXd b(10);
    for (int i = 0; i < 10; ++i) {
        b[i] = 0.05 * rng.normal();
        for (int j = 0; j < w.cols(); ++j) w(i, j) = 1.2 * rng.normal() / std::sqrt(w.cols());
    }
    net.layers.push_back(DenseLayer{w, b});
    return net;
}

std::vector<Eigen::VectorXd> gaussian_points(int n, int d, std::uint64_t seed, double scale) {
    Rng rng(seed);
    std::vector<Eigen::VectorXd> pts(n);
    for (auto& p : pts) {
        p.resize(d);
        for (int i = 0; i < d; ++i) p[i] = scale * rng.normal();
    }
    return pts;
}

double mc_se(double p, double m) { return std::sqrt(p * (1.0 - p) / m); }

// ---- criterion 1 -----------------------------------------------------------

Outcome criterion_linear_exactness() {
    const int n_models = 20;
    const std::vector<int> classes{2, 5, 10};
    const std::vector<double> sigmas{0.01, 0.1, 1.0};
    std::vector<std::string> violations;
    std::mutex mu;
    parallel_for(n_models, hw_workers(), [&](int mi) {
        const int c = classes[mi % classes.size()];
        const int d = 10 + (mi * 7) % 41;  // d <= 50
        ClassifierModel model = random_linear(c, d, 9000 + mi);
        Rng gen(500 + mi);
        Eigen::VectorXd x(d);
        for (int i = 0; i < d; ++i) x[i] = gen.normal();
        for (double sigma : sigmas) {
            EstimatorConfig mc;
            mc.kind = EstimatorKind::mc;
            mc.sigma = sigma;
            mc.mc_samples = 200000;
            Rng rng(1000 + mi);
            const double pmc = estimate_mc(model, x, mc, rng).value;
            EstimatorConfig ty;
            ty.kind = EstimatorKind::taylor;
            ty.sigma = sigma;
            ty.seed = mi;
            const double pt = estimate_taylor(model, x, ty).value;
            const double tol = 3.0 * mc_se(pmc, mc.mc_samples) + 2e-4;
            if (std::abs(pt - pmc) > tol) {
                std::lock_guard<std::mutex> lock(mu);
                std::ostringstream ss;
                ss << "model " << mi << " sigma " << sigma << " |diff| "
                   << std::abs(pt - pmc) << " > " << tol;
                violations.push_back(ss.str());
            }
        }
    });
    Outcome out;
    out.pass = violations.empty();
    out.detail = "20 models x 3 sigmas, |taylor - mc(2e5)| <= 3*se + 2e-4";
    if (!out.pass) out.detail += "; first violation: " + violations.front();
    return out;
}

// ---- criterion 2 -----------------------------------------------------------

Outcome criterion_binary_closed_form() {
    LinearModel lm;
    lm.weights.resize(2, 2);
    lm.weights << 1.0, 0.0, 0.0, 0.0;
    lm.biases.resize(2);
    const double sigma = 0.37;
    lm.biases << sigma, 0.0;  // z = 1 at x = 0
    ClassifierModel model(std::move(lm));
    EstimatorConfig config;
    config.kind = EstimatorKind::taylor;
    config.sigma = sigma;
    const double v = estimate_taylor(model, Eigen::VectorXd::Zero(2), config).value;
    Outcome out;
    out.pass = std::abs(v - 0.841345) <= 1e-6;
    std::ostringstream ss;
    ss << "estimate_taylor(z=1) = " << v << " vs 0.841345 +- 1e-6";
    out.detail = ss.str();
    return out;
}

// ---- criterion 3 -----------------------------------------------------------

Outcome criterion_mvn_oracle() {
    const int n_cases = 100;
    std::atomic<int> agree{0};
    parallel_for(n_cases, hw_workers(), [&](int ci) {
        Rng gen(4000 + ci);
        const int k = 2 + ci % 4;  // k in 2..5
        Eigen::MatrixXd u(k, k + 3);
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < k + 3; ++j) u(i, j) = gen.normal();
            u.row(i).normalize();
        }
        CovarianceSpec spec = build_covariance(u);
        Eigen::VectorXd z(k);
        for (int i = 0; i < k; ++i) z[i] = 2.5 * gen.uniform() - 0.5;
        Rng rng(777 + ci);
        CdfResult qmc = mvn_cdf(z, spec, rng);

        // Plain Monte-Carlo oracle on the standard library stack.
        Eigen::LLT<Eigen::MatrixXd> llt(spec.sigma);
        Eigen::MatrixXd l = llt.matrixL();
        std::mt19937_64 oracle_gen(123457ULL * (ci + 1));
        std::normal_distribution<double> normal(0.0, 1.0);
        const std::int64_t m = 10000000;
        Eigen::VectorXd xi(k);
        std::int64_t hits = 0;
        for (std::int64_t s = 0; s < m; ++s) {
            for (int i = 0; i < k; ++i) xi[i] = normal(oracle_gen);
            if (((l * xi).array() <= z.array()).all()) ++hits;
        }
        const double pmc = static_cast<double>(hits) / static_cast<double>(m);
        const double se = std::sqrt(pmc * (1.0 - pmc) / static_cast<double>(m));
        const double combined = std::sqrt(se * se + qmc.std_error * qmc.std_error);
        if (std::abs(qmc.value - pmc) <= 3.0 * combined) ++agree;
    });
    Outcome out;
    out.pass = agree >= 95;
    out.detail = std::to_string(agree.load()) + "/100 cases within 3 combined std errors";
    return out;
}

// ---- criterion 4 -----------------------------------------------------------

Outcome criterion_bound_sweep() {
    SweepConfig config;
    config.n_cases = 50;
    config.dim = 400;
    config.class_counts = {2, 3, 4};
    config.sigmas = {0.05, 0.1, 0.2};
    config.bruteforce_samples = 1000000;
    config.mmse_samples = 10000;
    config.seed = 20240601;
    config.workers = hw_workers();
    const auto results = bound_sweep(config);
    int taylor_ok = 0, mmse_ok = 0, ordered = 0;
    for (const auto& r : results) {
        taylor_ok += r.taylor.satisfied;
        mmse_ok += r.mmse.satisfied;
        ordered += r.mmse.bound <= r.taylor.bound;
    }
    Outcome out;
    const double n = static_cast<double>(results.size());
    out.pass = taylor_ok / n >= 0.95 && mmse_ok / n >= 0.95 &&
               ordered == static_cast<int>(results.size());
    std::ostringstream ss;
    ss << "taylor " << taylor_ok << "/50, mmse " << mmse_ok
       << "/50 satisfied; mmse_bound<=taylor_bound " << ordered << "/50";
    out.detail = ss.str();
    return out;
}

// ---- criteria 5 and 6 ------------------------------------------------------

struct OrderingData {
    double mmse_err = 0, taylor_err = 0, softmax_err = 0, taylor_err_small = 0;
};

OrderingData run_ordering_experiment() {
    ClassifierModel model(relu_net(16, 32, 4, 424242, 2.4));
    const auto points = gaussian_points(200, 16, 31337, 1.0);
    const int workers = hw_workers();

    auto batch = [&](EstimatorKind kind, double sigma, int mc_m, int mmse_n) {
        EstimatorConfig c;
        c.kind = kind;
        c.sigma = sigma;
        c.mc_samples = std::max(1, mc_m);
        c.mmse_samples = mmse_n;
        c.seed = 606;
        return estimate_batch(model, points, c, workers);
    };

    auto ref_05 = batch(EstimatorKind::mc, 0.5, 100000, 5);
    auto mmse_05 = batch(EstimatorKind::mmse, 0.5, 1, 500);
    auto taylor_05 = batch(EstimatorKind::taylor, 0.5, 1, 5);
    auto softmax_05 = batch(EstimatorKind::softmax, 0.5, 1, 5);
    auto ref_005 = batch(EstimatorKind::mc, 0.05, 100000, 5);
    auto taylor_005 = batch(EstimatorKind::taylor, 0.05, 1, 5);

    OrderingData data;
    const double n = static_cast<double>(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        data.mmse_err += std::abs(mmse_05[i].estimate.value - ref_05[i].estimate.value) / n;
        data.taylor_err += std::abs(taylor_05[i].estimate.value - ref_05[i].estimate.value) / n;
        data.softmax_err +=
            std::abs(softmax_05[i].estimate.value - ref_05[i].estimate.value) / n;
        data.taylor_err_small +=
            std::abs(taylor_005[i].estimate.value - ref_005[i].estimate.value) / n;
    }
    return data;
}

Outcome criterion_estimator_ordering(const OrderingData& data) {
    Outcome out;
    out.pass = data.mmse_err <= data.taylor_err && data.taylor_err <= data.softmax_err;
    std::ostringstream ss;
    ss << "mean|err| at sigma=0.5: mmse " << data.mmse_err << " <= taylor " << data.taylor_err
       << " <= softmax " << data.softmax_err;
    out.detail = ss.str();
    return out;
}

Outcome criterion_sigma_shrink(const OrderingData& data) {
    Outcome out;
    out.pass = data.taylor_err_small < data.taylor_err;
    std::ostringstream ss;
    ss << "mean|taylor - mc|: " << data.taylor_err_small << " at sigma=0.05 < "
       << data.taylor_err << " at sigma=0.5";
    out.detail = ss.str();
    return out;
}

// ---- criterion 7 -----------------------------------------------------------

Outcome criterion_mv_sigmoid() {
    // Clause 1: |mv_sigmoid - mvn_cdf| <= 0.02 for diagonal covariance
    // whenever every z_i >= 2, checked on a grid over [2, 12]^k.
    double worst = 0.0;
    std::string worst_at;
    const std::vector<double> grid{2.0, 2.5, 3.0, 4.0, 6.0, 9.0, 12.0};
    Rng rng(31415);
    for (int k : {1, 2, 3, 5}) {
        Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(k, k);
        CovarianceSpec spec = build_covariance(eye);
        for (double base : grid) {
            Eigen::VectorXd z = Eigen::VectorXd::Constant(k, base);
            const double diff = std::abs(mv_sigmoid(z) - mvn_cdf(z, spec, rng).value);
            if (diff > worst) {
                worst = diff;
                std::ostringstream ss;
                ss << "k=" << k << " z=" << base << "*ones";
                worst_at = ss.str();
            }
        }
        for (int trial = 0; trial < 25; ++trial) {
            Eigen::VectorXd z(k);
            for (int i = 0; i < k; ++i) z[i] = 2.0 + 10.0 * rng.uniform();
            const double diff = std::abs(mv_sigmoid(z) - mvn_cdf(z, spec, rng).value);
            if (diff > worst) {
                worst = diff;
                std::ostringstream ss;
                ss << "k=" << k << " random z >= 2";
                worst_at = ss.str();
            }
        }
    }
    const bool clause1 = worst <= 0.02;

    // Clause 2: paired taylor vs taylor_mvs on 100 confidently classified
    // linear-model points at sigma = 0.05.
    Rng gen(2024);
    const int c = 4, d = 12;
    Eigen::MatrixXd centers(c, d);
    for (int i = 0; i < c; ++i) {
        for (int j = 0; j < d; ++j) centers(i, j) = gen.normal();
        centers.row(i) *= 0.55 / centers.row(i).norm();
    }
    LinearModel lm;
    lm.weights = centers;
    lm.biases = Eigen::VectorXd::Zero(c);
    ClassifierModel model(std::move(lm));
    double pair_worst = 0.0;
    for (int p = 0; p < 100; ++p) {
        Eigen::VectorXd x = centers.row(p % c).transpose();
        for (int j = 0; j < d; ++j) x[j] += 0.04 * gen.normal();
        EstimatorConfig ct;
        ct.kind = EstimatorKind::taylor;
        ct.sigma = 0.05;
        ct.seed = p;
        EstimatorConfig cs = ct;
        cs.kind = EstimatorKind::taylor_mvs;
        const double a = estimate_taylor(model, x, ct).value;
        const double b = estimate_taylor_mvs(model, x, cs).value;
        pair_worst = std::max(pair_worst, std::abs(a - b));
    }
    const bool clause2 = pair_worst <= 0.05;

    Outcome out;
    out.pass = clause1 && clause2;
    std::ostringstream ss;
    ss << "clause1 max|mvs-mvn| = " << worst << " at " << worst_at
       << (clause1 ? " (<= 0.02)" : " (> 0.02)") << "; clause2 max paired diff = "
       << pair_worst << (clause2 ? " (<= 0.05)" : " (> 0.05)");
    out.detail = ss.str();
    return out;
}

// ---- criterion 8 -----------------------------------------------------------

Outcome criterion_softmax_equivalence() {
    const int c = 5, d = 9;
    const double k = 1.7, sigma = 0.23;
    LinearModel lm;
    lm.weights = Eigen::MatrixXd::Zero(c, d);
    lm.biases = Eigen::VectorXd::Zero(c);
    for (int i = 1; i < c; ++i) lm.weights(i, i - 1) = -k;
    ClassifierModel model(std::move(lm));

    Rng gen(515);
    double worst = 0.0;
    int tested = 0;
    while (tested < 50) {
        Eigen::VectorXd x(d);
        for (int i = 0; i < d; ++i) x[i] = gen.normal();
        // The equal-norm lemma applies to the boundaries of class 0; keep the
        // first c-1 coordinates positive so class 0 is predicted.
        for (int i = 0; i < c - 1; ++i) x[i] = std::abs(x[i]) + 1e-3;
        if (predict(model, x) != 0) continue;
        EstimatorConfig soft;
        soft.kind = EstimatorKind::softmax;
        soft.sigma = 1.23;  // irrelevant to softmax
        soft.temperature = sigma * k;
        EstimatorConfig mvs;
        mvs.kind = EstimatorKind::taylor_mvs;
        mvs.sigma = sigma;
        const double a = estimate_softmax(model, x, soft).value;
        const double b = estimate_taylor_mvs(model, x, mvs).value;
        worst = std::max(worst, std::abs(a - b));
        ++tested;
    }
    Outcome out;
    out.pass = worst <= 1e-12;
    std::ostringstream ss;
    ss << "max |softmax(T=sigma*k) - taylor_mvs(sigma)| = " << worst << " over 50 points";
    out.detail = ss.str();
    return out;
}

// ---- criterion 9 -----------------------------------------------------------

Outcome criterion_clt_uniform() {
    const int d = 1000, n_points = 20;
    ClassifierModel model = random_linear(2, d, 777777, 0.0);
    const auto points = gaussian_points(n_points, d, 888, 0.04);
    std::vector<double> diffs(n_points), tols(n_points);
    parallel_for(n_points, hw_workers(), [&](int i) {
        EstimatorConfig mc;
        mc.kind = EstimatorKind::mc;
        mc.sigma = 0.1;
        mc.mc_samples = 100000;
        mc.noise_kind = NoiseKind::uniform;
        Rng rng = Rng::for_point(99, i);
        const double pu = estimate_mc(model, points[i], mc, rng).value;
        EstimatorConfig ty;
        ty.kind = EstimatorKind::taylor;
        ty.sigma = 0.1;
        const double pt = estimate_taylor(model, points[i], ty).value;
        diffs[i] = std::abs(pt - pu);
        tols[i] = 3.0 * mc_se(pu, mc.mc_samples) + 0.005;
    });
    int ok = 0;
    double worst_margin = 1e9;
    for (int i = 0; i < n_points; ++i) {
        if (diffs[i] <= tols[i]) ++ok;
        worst_margin = std::min(worst_margin, tols[i] - diffs[i]);
    }
    Outcome out;
    out.pass = ok == n_points;
    std::ostringstream ss;
    ss << ok << "/20 points within 3 MC std errors + 0.005 (min slack " << worst_margin << ")";
    out.detail = ss.str();
    return out;
}

// ---- criterion 10 ----------------------------------------------------------

Outcome criterion_efficiency() {
    ClassifierModel model(small_conv_net(5150));
    const auto points = gaussian_points(50, model.input_dim(), 6021, 0.5);

    auto timed_batch = [&](EstimatorKind kind, int mc_m, int mmse_n, int reps) {
        EstimatorConfig c;
        c.kind = kind;
        c.sigma = 0.1;
        c.mc_samples = mc_m;
        c.mmse_samples = mmse_n;
        c.seed = 99;
        std::vector<double> times;
        for (int r = 0; r < reps; ++r) {
            const auto start = std::chrono::steady_clock::now();
            auto items = estimate_batch(model, points, c, 1);  // single-threaded
            const auto stop = std::chrono::steady_clock::now();
            for (const auto& item : items)
                if (!item.ok) throw std::runtime_error("bench point failed: " + item.error);
            times.push_back(std::chrono::duration<double>(stop - start).count());
        }
        std::sort(times.begin(), times.end());
        return times[times.size() / 2];
    };

    const double t_mc = timed_batch(EstimatorKind::mc, 10000, 5, 1);
    const double t_taylor = timed_batch(EstimatorKind::taylor, 10000, 5, 5);
    const double t_mmse = timed_batch(EstimatorKind::mmse, 10000, 5, 5);

    const double taylor_speedup = t_mc / t_taylor;
    const double mmse_speedup = t_mc / t_mmse;
    Outcome out;
    out.pass = taylor_speedup >= 10.0 && mmse_speedup >= 10.0;
    std::ostringstream ss;
    ss << "mc(1e4) " << t_mc << "s; taylor " << t_taylor << "s (" << taylor_speedup
       << "x); mmse(N=5) " << t_mmse << "s (" << mmse_speedup << "x); need >= 10x";
    out.detail = ss.str();
    return out;
}

// ---- criterion 11 ----------------------------------------------------------

Outcome criterion_bias_report_ordering() {
    // Diagonal weights with per-class scales: the standardized margin of a
    // class-c prototype grows with alpha_c, so class means must follow the
    // constructed order.
    const int c = 4;
    Eigen::VectorXd alpha(c);
    alpha << 1.0, 2.0, 4.0, 8.0;
    LinearModel lm;
    lm.weights = Eigen::MatrixXd::Zero(c, c);
    for (int i = 0; i < c; ++i) lm.weights(i, i) = alpha[i];
    lm.biases = Eigen::VectorXd::Zero(c);
    ClassifierModel model(std::move(lm));

    Rng gen(8080);
    std::vector<Eigen::VectorXd> points;
    std::vector<int> labels;
    for (int cls = 0; cls < c; ++cls) {
        for (int rep = 0; rep < 50; ++rep) {
            Eigen::VectorXd x = Eigen::VectorXd::Zero(c);
            x[cls] = 1.0;
            for (int j = 0; j < c; ++j) x[j] += 0.01 * gen.normal();
            points.push_back(std::move(x));
            labels.push_back(cls);
        }
    }
    EstimatorConfig config;
    config.kind = EstimatorKind::taylor;
    config.sigma = 0.5;
    config.seed = 3;
    auto items = estimate_batch(model, points, config, hw_workers());
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(c);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(c);
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (!items[i].ok) continue;
        mean[labels[i]] += items[i].estimate.value;
        count[labels[i]] += 1.0;
    }
    for (int i = 0; i < c; ++i) mean[i] /= count[i];
    bool ordered = true;
    for (int i = 0; i + 1 < c; ++i) ordered = ordered && mean[i] < mean[i + 1];
    Outcome out;
    out.pass = ordered;
    std::ostringstream ss;
    ss << "class means [" << mean.transpose() << "] strictly increasing with weight scale";
    out.detail = ss.str();
    return out;
}

// ---- criterion 12 ----------------------------------------------------------

std::string cli_path() {
    if (const char* env = std::getenv("AVGROB_CLI_BIN")) return env;
#ifdef AVGROB_CLI_PATH
    return AVGROB_CLI_PATH;
#else
    return "avgrob";
#endif
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome criterion_cli_determinism() {
    const fs::path dir =
        fs::temp_directory_path() / ("avgrob_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    ClassifierModel model = random_linear(3, 10, 2468);
    const fs::path model_path = dir / "model.json";
    save_model(model, model_path);

    const std::string data = " --data synth:n=15,c=3,d=10,spread=0.3,seed=5 ";
    std::vector<std::pair<std::string, std::string>> commands{
        {"estimate", "estimate --model " + model_path.string() + data +
                         "--estimator mc,taylor,mmse --sigma 0.1,0.3 --mc-samples 2000 "
                         "--mmse-samples 5 --seed 11"},
        {"compare", "compare --model " + model_path.string() + data +
                        "--estimator mc,taylor,softmax --sigma 0.2 --mc-samples 2000 --seed 12"},
        {"bias-report", "bias-report --model " + model_path.string() + data +
                            "--estimator taylor --sigma 0.25 --seed 13"},
        {"rank", "rank --model " + model_path.string() + data +
                     "--estimator taylor --sigma 0.25 --top-k 2 --seed 14"},
        {"verify-bounds",
         "verify-bounds --cases 4 --dim 220 --classes 2,3 --sigma 0.05,0.1 "
         "--bruteforce-samples 100000 --mmse-samples 2000 --seed 15"},
        {"bench", "bench --model " + model_path.string() + data +
                      "--estimator mc,taylor --sigma 0.2 --mc-samples 1000 --repetitions 2 "
                      "--seed 16"},
        {"convergence", "convergence --model " + model_path.string() + data +
                            "--sigma 0.3 --mc-grid 100,1000 --mmse-grid 2,5 "
                            "--reference-samples 20000 --repeats 2 --seed 17"},
    };

    std::string failure;
    for (const auto& [name, args] : commands) {
        std::vector<std::string> outputs;
        for (const std::string workers : {"1", "8"}) {
            for (int run = 0; run < 2; ++run) {
                const fs::path out_file =
                    dir / (name + "_w" + workers + "_r" + std::to_string(run) + ".out");
                const std::string cmd = cli_path() + " " + args + " --workers " + workers +
                                        " --output " + out_file.string() + " > " +
                                        (dir / "stdout.txt").string() + " 2>&1";
                const int status = std::system(cmd.c_str());
                if (status != 0) {
                    failure = name + " exited with status " + std::to_string(status);
                    break;
                }
                outputs.push_back(slurp(out_file));
            }
            if (!failure.empty()) break;
        }
        if (!failure.empty()) break;
        for (std::size_t i = 1; i < outputs.size(); ++i) {
            if (outputs[i] != outputs[0]) {
                failure = name + " output differs between runs/worker counts";
                break;
            }
        }
        if (!failure.empty()) break;
    }
    std::error_code ec;
    fs::remove_all(dir, ec);
    Outcome out;
    out.pass = failure.empty();
    out.detail = out.pass ? "7 subcommands byte-identical across reruns and workers 1/8"
                          : failure;
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
    auto wanted = [&](int n) {
        return only.empty() || std::find(only.begin(), only.end(), n) != only.end();
    };

    struct Entry {
        int number;
        const char* name;
        std::function<Outcome()> run;
    };

    OrderingData ordering;
    bool ordering_ready = false;
    auto ensure_ordering = [&]() {
        if (!ordering_ready) {
            ordering = run_ordering_experiment();
            ordering_ready = true;
        }
    };

    const std::vector<Entry> entries{
        {1, "linear exactness", criterion_linear_exactness},
        {2, "binary closed form", criterion_binary_closed_form},
        {3, "mvn-cdf oracle agreement", criterion_mvn_oracle},
        {4, "estimation-error bound sweep", criterion_bound_sweep},
        {5, "estimator ordering",
         [&]() {
             ensure_ordering();
             return criterion_estimator_ordering(ordering);
         }},
        {6, "sigma-shrink accuracy",
         [&]() {
             ensure_ordering();
             return criterion_sigma_shrink(ordering);
         }},
        {7, "mv-sigmoid approximation", criterion_mv_sigmoid},
        {8, "softmax equivalence at T = sigma*k", criterion_softmax_equivalence},
        {9, "CLT extension under uniform noise", criterion_clt_uniform},
        {10, "estimator efficiency", criterion_efficiency},
        {11, "bias-report ordering", criterion_bias_report_ordering},
        {12, "CLI determinism", criterion_cli_determinism},
    };

    int failures = 0;
    for (const auto& entry : entries) {
        if (!wanted(entry.number)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = entry.run();
        } catch (const std::exception& e) {
            outcome.pass = false;
            outcome.detail = std::string("exception: ") + e.what();
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::cout << (outcome.pass ? "[PASS]" : "[FAIL]") << " criterion " << entry.number
                  << " (" << entry.name << "): " << outcome.detail << " [" << seconds << "s]"
                  << std::endl;
        if (!outcome.pass) ++failures;
    }
    if (failures > 0)
        std::cout << failures << " criterion(s) failed" << std::endl;
    else
        std::cout << "all criteria passed" << std::endl;
    return failures;
}
