#include <cmath>
#include <numeric>
#include <vector>

#include "avgrob/errors.hpp"
#include "avgrob/model.hpp"

namespace avgrob {

namespace {

int shape_size(const std::vector<int>& shape) {
    int n = 1;
    for (int s : shape) n *= s;
    return n;
}

std::vector<int> conv_out_shape(const Conv2dLayer& conv, const std::vector<int>& in) {
    if (in.size() != 3) throw InputError("conv2d: expected [channels, height, width] input");
    if (in[0] != conv.in_channels) throw InputError("conv2d: channel mismatch");
    if (conv.stride < 1) throw InputError("conv2d: stride must be >= 1");
    if (conv.padding < 0) throw InputError("conv2d: padding must be >= 0");
    const int oh = (in[1] + 2 * conv.padding - conv.kernel_h) / conv.stride + 1;
    const int ow = (in[2] + 2 * conv.padding - conv.kernel_w) / conv.stride + 1;
    if (oh < 1 || ow < 1) throw InputError("conv2d: kernel larger than padded input");
    return {conv.out_channels, oh, ow};
}

std::vector<int> pool_out_shape(const MaxPool2dLayer& pool, const std::vector<int>& in) {
    if (in.size() != 3) throw InputError("maxpool2d: expected [channels, height, width] input");
    if (pool.window < 1) throw InputError("maxpool2d: window must be >= 1");
    const int oh = in[1] / pool.window;
    const int ow = in[2] / pool.window;
    if (oh < 1 || ow < 1) throw InputError("maxpool2d: window larger than input");
    return {in[0], oh, ow};
}

std::vector<int> layer_out_shape(const Layer& layer, const std::vector<int>& in) {
    return std::visit(
        [&](const auto& l) -> std::vector<int> {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, DenseLayer>) {
                if (shape_size(in) != l.weights.cols())
                    throw InputError("dense: input size mismatch");
                if (l.bias.size() != l.weights.rows())
                    throw InputError("dense: bias size mismatch");
                return {static_cast<int>(l.weights.rows())};
            } else if constexpr (std::is_same_v<T, Conv2dLayer>) {
                return conv_out_shape(l, in);
            } else if constexpr (std::is_same_v<T, MaxPool2dLayer>) {
                return pool_out_shape(l, in);
            } else if constexpr (std::is_same_v<T, FlattenLayer>) {
                return {shape_size(in)};
            } else {
                return in;  // relu
            }
        },
        layer);
}

void conv_forward(const Conv2dLayer& conv, const std::vector<int>& in_shape,
                  const Eigen::VectorXd& in, const std::vector<int>& out_shape,
                  Eigen::VectorXd& out) {
    const int h = in_shape[1], w = in_shape[2];
    const int oh = out_shape[1], ow = out_shape[2];
    for (int oc = 0; oc < conv.out_channels; ++oc) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double acc = conv.bias[oc];
                for (int ic = 0; ic < conv.in_channels; ++ic) {
                    for (int r = 0; r < conv.kernel_h; ++r) {
                        const int y = oy * conv.stride + r - conv.padding;
                        if (y < 0 || y >= h) continue;
                        for (int c = 0; c < conv.kernel_w; ++c) {
                            const int x = ox * conv.stride + c - conv.padding;
                            if (x < 0 || x >= w) continue;
                            acc += conv.kernel_at(oc, ic, r, c) *
                                   in[(static_cast<std::size_t>(ic) * h + y) * w + x];
                        }
                    }
                }
                out[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox] = acc;
            }
        }
    }
}

void conv_backward(const Conv2dLayer& conv, const std::vector<int>& in_shape,
                   const std::vector<int>& out_shape, const Eigen::VectorXd& dout,
                   Eigen::VectorXd& din) {
    const int h = in_shape[1], w = in_shape[2];
    const int oh = out_shape[1], ow = out_shape[2];
    din.setZero();
    for (int oc = 0; oc < conv.out_channels; ++oc) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const double g = dout[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox];
                if (g == 0.0) continue;
                for (int ic = 0; ic < conv.in_channels; ++ic) {
                    for (int r = 0; r < conv.kernel_h; ++r) {
                        const int y = oy * conv.stride + r - conv.padding;
                        if (y < 0 || y >= h) continue;
                        for (int c = 0; c < conv.kernel_w; ++c) {
                            const int x = ox * conv.stride + c - conv.padding;
                            if (x < 0 || x >= w) continue;
                            din[(static_cast<std::size_t>(ic) * h + y) * w + x] +=
                                conv.kernel_at(oc, ic, r, c) * g;
                        }
                    }
                }
            }
        }
    }
}

void pool_forward(const MaxPool2dLayer& pool, const std::vector<int>& in_shape,
                  const Eigen::VectorXd& in, const std::vector<int>& out_shape,
                  Eigen::VectorXd& out) {
    const int ch = in_shape[0], h = in_shape[1], w = in_shape[2];
    const int oh = out_shape[1], ow = out_shape[2];
    const int k = pool.window;
    for (int c = 0; c < ch; ++c) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                for (int r = 0; r < k; ++r) {
                    for (int s = 0; s < k; ++s) {
                        const double v =
                            in[(static_cast<std::size_t>(c) * h + oy * k + r) * w + ox * k + s];
                        if (v > best) best = v;
                    }
                }
                out[(static_cast<std::size_t>(c) * oh + oy) * ow + ox] = best;
            }
        }
    }
}

// Gradient flows to the first maximal element in scan order.
void pool_backward(const MaxPool2dLayer& pool, const std::vector<int>& in_shape,
                   const Eigen::VectorXd& in, const std::vector<int>& out_shape,
                   const Eigen::VectorXd& dout, Eigen::VectorXd& din) {
    const int ch = in_shape[0], h = in_shape[1], w = in_shape[2];
    const int oh = out_shape[1], ow = out_shape[2];
    const int k = pool.window;
    din.setZero();
    for (int c = 0; c < ch; ++c) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                std::size_t best_idx = 0;
                for (int r = 0; r < k; ++r) {
                    for (int s = 0; s < k; ++s) {
                        const std::size_t idx =
                            (static_cast<std::size_t>(c) * h + oy * k + r) * w + ox * k + s;
                        if (in[idx] > best) {
                            best = in[idx];
                            best_idx = idx;
                        }
                    }
                }
                din[best_idx] += dout[(static_cast<std::size_t>(c) * oh + oy) * ow + ox];
            }
        }
    }
}

struct Tape {
    // acts[i] is the input of layer i; acts.back() is the network output.
    std::vector<Eigen::VectorXd> acts;
    std::vector<std::vector<int>> shapes;
};

Tape run_forward(const NetworkModel& net, const Eigen::VectorXd& x) {
    Tape tape;
    tape.acts.reserve(net.layers.size() + 1);
    tape.shapes.reserve(net.layers.size() + 1);
    tape.acts.push_back(x);
    tape.shapes.push_back(net.input_shape);
    for (const Layer& layer : net.layers) {
        const auto& in = tape.acts.back();
        const auto& in_shape = tape.shapes.back();
        std::vector<int> out_shape = layer_out_shape(layer, in_shape);
        Eigen::VectorXd out(shape_size(out_shape));
        std::visit(
            [&](const auto& l) {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, DenseLayer>) {
                    out.noalias() = l.weights * in + l.bias;
                } else if constexpr (std::is_same_v<T, ReluLayer>) {
                    out = in.cwiseMax(0.0);
                } else if constexpr (std::is_same_v<T, Conv2dLayer>) {
                    conv_forward(l, in_shape, in, out_shape, out);
                } else if constexpr (std::is_same_v<T, MaxPool2dLayer>) {
                    pool_forward(l, in_shape, in, out_shape, out);
                } else {
                    out = in;  // flatten
                }
            },
            layer);
        tape.acts.push_back(std::move(out));
        tape.shapes.push_back(std::move(out_shape));
    }
    return tape;
}

Eigen::VectorXd run_backward(const NetworkModel& net, const Tape& tape,
                             const Eigen::VectorXd& seed) {
    Eigen::VectorXd grad = seed;
    for (int li = static_cast<int>(net.layers.size()) - 1; li >= 0; --li) {
        const auto& in = tape.acts[li];
        const auto& in_shape = tape.shapes[li];
        const auto& out_shape = tape.shapes[li + 1];
        Eigen::VectorXd next(in.size());
        std::visit(
            [&](const auto& l) {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, DenseLayer>) {
                    next.noalias() = l.weights.transpose() * grad;
                } else if constexpr (std::is_same_v<T, ReluLayer>) {
                    // Subgradient 0 at the kink.
                    next = (in.array() > 0.0).select(grad.array(), 0.0);
                } else if constexpr (std::is_same_v<T, Conv2dLayer>) {
                    conv_backward(l, in_shape, out_shape, grad, next);
                } else if constexpr (std::is_same_v<T, MaxPool2dLayer>) {
                    pool_backward(l, in_shape, in, out_shape, grad, next);
                } else {
                    next = grad;  // flatten
                }
            },
            net.layers[li]);
        grad = std::move(next);
    }
    return grad;
}

}  // namespace

void NetworkModel::validate() const {
    if (n_classes < 2) throw InputError("NetworkModel: need at least 2 classes");
    if (input_shape.empty()) throw InputError("NetworkModel: empty input shape");
    for (int s : input_shape)
        if (s < 1) throw InputError("NetworkModel: non-positive input dimension");
    std::vector<int> shape = input_shape;
    for (const Layer& layer : layers) {
        shape = layer_out_shape(layer, shape);
        std::visit(
            [](const auto& l) {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, DenseLayer>) {
                    if (!l.weights.allFinite() || !l.bias.allFinite())
                        throw InputError("NetworkModel: non-finite dense parameters");
                } else if constexpr (std::is_same_v<T, Conv2dLayer>) {
                    if (!l.bias.allFinite())
                        throw InputError("NetworkModel: non-finite conv bias");
                    for (double v : l.kernels)
                        if (!std::isfinite(v))
                            throw InputError("NetworkModel: non-finite conv kernel");
                    if (static_cast<std::size_t>(l.out_channels) * l.in_channels *
                            l.kernel_h * l.kernel_w != l.kernels.size())
                        throw InputError("NetworkModel: conv kernel size mismatch");
                }
            },
            layer);
    }
    if (shape.size() != 1 || shape[0] != n_classes)
        throw InputError("NetworkModel: final layer output does not match class count");
}

Logits network_forward(const NetworkModel& net, const Eigen::VectorXd& x) {
    Tape tape = run_forward(net, x);
    return Logits{std::move(tape.acts.back())};
}

Eigen::MatrixXd network_input_gradients(const NetworkModel& net, const Eigen::VectorXd& x,
                                        const Eigen::MatrixXd& seeds, Logits* logits_out) {
    if (seeds.cols() != net.n_classes)
        throw InputError("network_input_gradients: seed width != class count");
    Tape tape = run_forward(net, x);
    if (logits_out) logits_out->values = tape.acts.back();
    Eigen::MatrixXd rows(seeds.rows(), x.size());
    for (Eigen::Index r = 0; r < seeds.rows(); ++r)
        rows.row(r) = run_backward(net, tape, seeds.row(r).transpose()).transpose();
    return rows;
}

}  // namespace avgrob
