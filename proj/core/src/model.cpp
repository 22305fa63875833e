#include "avgrob/model.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "avgrob/errors.hpp"

namespace avgrob {

namespace {

void check_finite(const Eigen::MatrixXd& m, const char* what) {
    if (!m.allFinite()) throw InputError(std::string(what) + ": non-finite entries");
}

}  // namespace

void LinearModel::validate() const {
    if (weights.rows() < 2) throw InputError("LinearModel: need at least 2 classes");
    if (weights.cols() < 1) throw InputError("LinearModel: need input dim >= 1");
    if (biases.size() != weights.rows())
        throw InputError("LinearModel: bias length != class count");
    check_finite(weights, "LinearModel weights");
    check_finite(biases, "LinearModel biases");
}

double QuadraticBoundary::value(const Eigen::VectorXd& x) const {
    double q;
    if (dense_quad) {
        q = x.dot(*dense_quad * x);
    } else {
        q = iso * x.squaredNorm();
        if (factor.rows() > 0) q += (factor * x).squaredNorm();
    }
    return q + lin.dot(x) + offset;
}

Eigen::VectorXd QuadraticBoundary::gradient(const Eigen::VectorXd& x) const {
    return 2.0 * quad_matvec(x) + lin;
}

Eigen::VectorXd QuadraticBoundary::quad_matvec(const Eigen::VectorXd& v) const {
    if (dense_quad) return *dense_quad * v;
    Eigen::VectorXd out = iso * v;
    if (factor.rows() > 0) out.noalias() += factor.transpose() * (factor * v);
    return out;
}

double QuadraticBoundary::quad_trace() const {
    if (dense_quad) return dense_quad->trace();
    return factor.squaredNorm() + iso * static_cast<double>(lin.size());
}

Eigen::MatrixXd QuadraticBoundary::dense() const {
    if (dense_quad) return *dense_quad;
    const Eigen::Index d = lin.size();
    Eigen::MatrixXd a = iso * Eigen::MatrixXd::Identity(d, d);
    if (factor.rows() > 0) a.noalias() += factor.transpose() * factor;
    return a;
}

QuadraticBoundaryModel QuadraticBoundaryModel::from_dense(
    std::vector<Eigen::MatrixXd> quads, std::vector<Eigen::VectorXd> lins,
    std::vector<double> offsets) {
    if (quads.empty() || quads.size() != lins.size() || quads.size() != offsets.size())
        throw InputError("QuadraticBoundaryModel: inconsistent boundary lists");
    QuadraticBoundaryModel model;
    model.dim = static_cast<int>(lins[0].size());
    for (std::size_t i = 0; i < quads.size(); ++i) {
        const Eigen::MatrixXd& a = quads[i];
        if (a.rows() != model.dim || a.cols() != model.dim ||
            lins[i].size() != model.dim)
            throw InputError("QuadraticBoundaryModel: dimension mismatch");
        check_finite(a, "QuadraticBoundary A");
        check_finite(lins[i], "QuadraticBoundary u");
        if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12)
            throw InputError("QuadraticBoundaryModel: A not symmetric within 1e-12");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-10)
            throw InputError("QuadraticBoundaryModel: A not PSD (min eigenvalue < -1e-10)");
        QuadraticBoundary b;
        b.dense_quad = a;
        b.lin = std::move(lins[i]);
        b.offset = offsets[i];
        model.boundaries.push_back(std::move(b));
    }
    return model;
}

QuadraticBoundaryModel QuadraticBoundaryModel::from_factors(
    std::vector<Eigen::MatrixXd> factors, std::vector<double> isos,
    std::vector<Eigen::VectorXd> lins, std::vector<double> offsets) {
    if (lins.empty() || factors.size() != lins.size() || isos.size() != lins.size() ||
        offsets.size() != lins.size())
        throw InputError("QuadraticBoundaryModel: inconsistent boundary lists");
    QuadraticBoundaryModel model;
    model.dim = static_cast<int>(lins[0].size());
    for (std::size_t i = 0; i < lins.size(); ++i) {
        if (isos[i] < 0.0)
            throw InputError("QuadraticBoundaryModel: isotropic component must be >= 0");
        if (lins[i].size() != model.dim ||
            (factors[i].rows() > 0 && factors[i].cols() != model.dim))
            throw InputError("QuadraticBoundaryModel: dimension mismatch");
        QuadraticBoundary b;
        b.factor = std::move(factors[i]);
        b.iso = isos[i];
        b.lin = std::move(lins[i]);
        b.offset = offsets[i];
        model.boundaries.push_back(std::move(b));
    }
    return model;
}

int NetworkModel::input_dim() const {
    int n = 1;
    for (int s : input_shape) n *= s;
    return n;
}

ClassifierModel::ClassifierModel(LinearModel m) : model_(std::move(m)) {
    const auto& lm = std::get<LinearModel>(model_);
    lm.validate();
    n_classes_ = lm.n_classes();
    input_dim_ = lm.input_dim();
}

ClassifierModel::ClassifierModel(QuadraticBoundaryModel m) : model_(std::move(m)) {
    const auto& qm = std::get<QuadraticBoundaryModel>(model_);
    if (qm.boundaries.empty()) throw InputError("QuadraticBoundaryModel: no boundaries");
    n_classes_ = qm.n_classes();
    input_dim_ = qm.input_dim();
}

ClassifierModel::ClassifierModel(NetworkModel m) : model_(std::move(m)) {
    const auto& nm = std::get<NetworkModel>(model_);
    nm.validate();
    n_classes_ = nm.n_classes;
    input_dim_ = nm.input_dim();
}

namespace {

Logits forward_impl(const ClassifierModel& model, const Eigen::VectorXd& x) {
    if (x.size() != model.input_dim())
        throw InputError("forward: input size " + std::to_string(x.size()) +
                         " does not match model input dim " +
                         std::to_string(model.input_dim()));
    if (const auto* lm = model.as<LinearModel>()) {
        return Logits{lm->weights * x + lm->biases};
    }
    if (const auto* qm = model.as<QuadraticBoundaryModel>()) {
        Eigen::VectorXd values(qm->n_classes());
        values[0] = 0.0;
        for (int i = 0; i < qm->n_boundaries(); ++i)
            values[i + 1] = -qm->boundaries[i].value(x);
        return Logits{std::move(values)};
    }
    return network_forward(*model.as<NetworkModel>(), x);
}

int argmax_lowest(const Eigen::VectorXd& v) {
    int best = 0;
    for (int i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

// Rows are grad(f_t - f_i) for i != t in ascending class order.
Eigen::MatrixXd margin_gradients(const ClassifierModel& model, const Eigen::VectorXd& x,
                                 int target) {
    const int c = model.n_classes();
    if (const auto* lm = model.as<LinearModel>()) {
        Eigen::MatrixXd rows(c - 1, model.input_dim());
        int r = 0;
        for (int i = 0; i < c; ++i) {
            if (i == target) continue;
            rows.row(r++) = lm->weights.row(target) - lm->weights.row(i);
        }
        return rows;
    }
    if (const auto* qm = model.as<QuadraticBoundaryModel>()) {
        // grad f_0 = 0, grad f_i = -grad g_i
        Eigen::MatrixXd rows(c - 1, model.input_dim());
        Eigen::VectorXd grad_t = Eigen::VectorXd::Zero(model.input_dim());
        if (target > 0) grad_t = -qm->boundaries[target - 1].gradient(x);
        int r = 0;
        for (int i = 0; i < c; ++i) {
            if (i == target) continue;
            Eigen::VectorXd grad_i = Eigen::VectorXd::Zero(model.input_dim());
            if (i > 0) grad_i = -qm->boundaries[i - 1].gradient(x);
            rows.row(r++) = (grad_t - grad_i).transpose();
        }
        return rows;
    }
    const auto* nm = model.as<NetworkModel>();
    Eigen::MatrixXd seeds = Eigen::MatrixXd::Zero(c - 1, c);
    int r = 0;
    for (int i = 0; i < c; ++i) {
        if (i == target) continue;
        seeds(r, target) = 1.0;
        seeds(r, i) = -1.0;
        ++r;
    }
    return network_input_gradients(*nm, x, seeds);
}

BoundaryProfile assemble_profile(int target, double sigma, Eigen::VectorXd margins,
                                 Eigen::MatrixXd grad_rows) {
    BoundaryProfile profile;
    profile.target = target;
    profile.margins = std::move(margins);
    profile.grad_rows = std::move(grad_rows);
    const int k = static_cast<int>(profile.margins.size());
    const int d = static_cast<int>(profile.grad_rows.cols());
    profile.grad_norms.resize(k);
    profile.z.resize(k);
    profile.U.resize(k, d);
    for (int i = 0; i < k; ++i) {
        const double norm = profile.grad_rows.row(i).norm();
        profile.grad_norms[i] = norm;
        if (norm < kZeroGradTol) {
            // Flat boundary: saturate the standardized distance and point U
            // at the first basis vector.
            const double g = profile.margins[i];
            profile.z[i] = (std::abs(g) <= kZeroGradTol) ? 0.0 : (g > 0 ? kZClamp : -kZClamp);
            profile.U.row(i).setZero();
            profile.U(i, 0) = 1.0;
        } else {
            profile.z[i] = std::clamp(profile.margins[i] / (sigma * norm), -kZClamp, kZClamp);
            profile.U.row(i) = profile.grad_rows.row(i) / norm;
        }
    }
    return profile;
}

}  // namespace

Logits forward(const ClassifierModel& model, const Eigen::VectorXd& x) {
    return forward_impl(model, x);
}

int predict(const ClassifierModel& model, const Eigen::VectorXd& x) {
    return argmax_lowest(forward_impl(model, x).values);
}

BoundaryProfile boundary_profile(const ClassifierModel& model, const Eigen::VectorXd& x,
                                 int target, double sigma) {
    if (sigma <= 0.0) throw InputError("boundary_profile: sigma must be > 0");
    if (target < 0 || target >= model.n_classes())
        throw InputError("boundary_profile: target class out of range");
    const Logits logits = forward_impl(model, x);
    const int c = model.n_classes();
    Eigen::VectorXd margins(c - 1);
    int r = 0;
    for (int i = 0; i < c; ++i) {
        if (i == target) continue;
        margins[r++] = logits.values[target] - logits.values[i];
    }
    return assemble_profile(target, sigma, std::move(margins),
                            margin_gradients(model, x, target));
}

BoundaryProfile smoothed_boundary_profile_with_draws(
    const ClassifierModel& model, const Eigen::VectorXd& x, int target, double sigma,
    std::span<const Eigen::VectorXd> draws) {
    if (sigma <= 0.0) throw InputError("smoothed_boundary_profile: sigma must be > 0");
    if (draws.empty()) throw InputError("smoothed_boundary_profile: need at least one draw");
    if (target < 0 || target >= model.n_classes())
        throw InputError("smoothed_boundary_profile: target class out of range");

    const int c = model.n_classes();
    const int d = model.input_dim();
    Eigen::VectorXd margins = Eigen::VectorXd::Zero(c - 1);
    Eigen::MatrixXd grads = Eigen::MatrixXd::Zero(c - 1, d);
    for (const Eigen::VectorXd& eps : draws) {
        if (eps.size() != d)
            throw InputError("smoothed_boundary_profile: draw dimension mismatch");
        const Eigen::VectorXd xe = x + eps;
        const Logits logits = forward_impl(model, xe);
        int r = 0;
        for (int i = 0; i < c; ++i) {
            if (i == target) continue;
            margins[r++] += logits.values[target] - logits.values[i];
        }
        grads += margin_gradients(model, xe, target);
    }
    const double inv_n = 1.0 / static_cast<double>(draws.size());
    margins *= inv_n;
    grads *= inv_n;
    return assemble_profile(target, sigma, std::move(margins), std::move(grads));
}

void center_draws(std::vector<Eigen::VectorXd>& draws) {
    if (draws.empty()) return;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(draws[0].size());
    for (const auto& eps : draws) mean += eps;
    mean /= static_cast<double>(draws.size());
    for (auto& eps : draws) eps -= mean;
}

BoundaryProfile smoothed_boundary_profile(const ClassifierModel& model,
                                          const Eigen::VectorXd& x, int target,
                                          double sigma, int n_samples, Rng& rng) {
    if (n_samples < 1) throw InputError("smoothed_boundary_profile: need n_samples >= 1");
    if (sigma <= 0.0) throw InputError("smoothed_boundary_profile: sigma must be > 0");
    std::vector<Eigen::VectorXd> draws(n_samples);
    const int d = model.input_dim();
    for (int j = 0; j < n_samples; ++j) {
        draws[j].resize(d);
        for (int i = 0; i < d; ++i) draws[j][i] = sigma * rng.normal();
    }
    // Centering makes the draw set mean-free, so smoothing is the exact
    // identity on linear models at every N; the single-draw case degenerates
    // to the unsmoothed profile.
    center_draws(draws);
    return smoothed_boundary_profile_with_draws(model, x, target, sigma, draws);
}

}  // namespace avgrob
