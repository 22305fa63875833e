#include "avgrob/data_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "avgrob/errors.hpp"
#include "avgrob/rng.hpp"

namespace avgrob {

namespace {

using nlohmann::json;

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in, const char* what) {
    unsigned char buf[4];
    if (!in.read(reinterpret_cast<char*>(buf), 4))
        throw FormatError(std::string("truncated IDX header: ") + what);
    return (static_cast<std::uint32_t>(buf[0]) << 24) |
           (static_cast<std::uint32_t>(buf[1]) << 16) |
           (static_cast<std::uint32_t>(buf[2]) << 8) | static_cast<std::uint32_t>(buf[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
    unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                            static_cast<unsigned char>(v >> 16),
                            static_cast<unsigned char>(v >> 8),
                            static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(buf), 4);
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

json vector_to_json(const Eigen::VectorXd& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

Eigen::MatrixXd matrix_from_json(const json& j, const char* what) {
    if (!j.is_array() || j.empty() || !j[0].is_array())
        throw FormatError(std::string(what) + ": expected nested array");
    const std::size_t rows = j.size();
    const std::size_t cols = j[0].size();
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != cols)
            throw FormatError(std::string(what) + ": ragged rows");
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

Eigen::VectorXd vector_from_json(const json& j, const char* what) {
    if (!j.is_array()) throw FormatError(std::string(what) + ": expected array");
    Eigen::VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
    return v;
}

json layer_to_json(const Layer& layer) {
    return std::visit(
        [](const auto& l) -> json {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, DenseLayer>) {
                return {{"kind", "dense"},
                        {"weights", matrix_to_json(l.weights)},
                        {"bias", vector_to_json(l.bias)}};
            } else if constexpr (std::is_same_v<T, ReluLayer>) {
                return {{"kind", "relu"}};
            } else if constexpr (std::is_same_v<T, Conv2dLayer>) {
                json kernels = json::array();
                for (int oc = 0; oc < l.out_channels; ++oc) {
                    json per_in = json::array();
                    for (int ic = 0; ic < l.in_channels; ++ic) {
                        json kh = json::array();
                        for (int r = 0; r < l.kernel_h; ++r) {
                            json kw = json::array();
                            for (int c = 0; c < l.kernel_w; ++c)
                                kw.push_back(l.kernel_at(oc, ic, r, c));
                            kh.push_back(std::move(kw));
                        }
                        per_in.push_back(std::move(kh));
                    }
                    kernels.push_back(std::move(per_in));
                }
                return {{"kind", "conv2d"},
                        {"kernels", std::move(kernels)},
                        {"bias", vector_to_json(l.bias)},
                        {"stride", l.stride},
                        {"padding", l.padding}};
            } else if constexpr (std::is_same_v<T, MaxPool2dLayer>) {
                return {{"kind", "maxpool2d"}, {"window", l.window}};
            } else {
                return {{"kind", "flatten"}};
            }
        },
        layer);
}

Layer layer_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "dense") {
        DenseLayer l;
        l.weights = matrix_from_json(j.at("weights"), "dense weights");
        l.bias = vector_from_json(j.at("bias"), "dense bias");
        return l;
    }
    if (kind == "relu") return ReluLayer{};
    if (kind == "conv2d") {
        Conv2dLayer l;
        const json& k = j.at("kernels");
        if (!k.is_array() || k.empty() || !k[0].is_array() || k[0].empty() ||
            !k[0][0].is_array() || k[0][0].empty() || !k[0][0][0].is_array())
            throw FormatError("conv2d kernels: expected [out][in][kh][kw] nesting");
        l.out_channels = static_cast<int>(k.size());
        l.in_channels = static_cast<int>(k[0].size());
        l.kernel_h = static_cast<int>(k[0][0].size());
        l.kernel_w = static_cast<int>(k[0][0][0].size());
        l.kernels.reserve(static_cast<std::size_t>(l.out_channels) * l.in_channels *
                          l.kernel_h * l.kernel_w);
        for (const auto& per_in : k)
            for (const auto& kh : per_in)
                for (const auto& kw : kh)
                    for (const auto& v : kw) l.kernels.push_back(v.get<double>());
        l.bias = vector_from_json(j.at("bias"), "conv2d bias");
        l.stride = j.value("stride", 1);
        l.padding = j.value("padding", 0);
        return l;
    }
    if (kind == "maxpool2d") {
        MaxPool2dLayer l;
        l.window = j.at("window").get<int>();
        return l;
    }
    if (kind == "flatten") return FlattenLayer{};
    throw FormatError("unknown layer kind: " + kind);
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw IoError("cannot open " + images_path.string());
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw IoError("cannot open " + labels_path.string());

    if (read_be32(img, "image magic") != kImageMagic)
        throw FormatError("bad IDX image magic in " + images_path.string());
    const std::uint32_t n_images = read_be32(img, "image count");
    const std::uint32_t rows = read_be32(img, "rows");
    const std::uint32_t cols = read_be32(img, "cols");

    if (read_be32(lab, "label magic") != kLabelMagic)
        throw FormatError("bad IDX label magic in " + labels_path.string());
    const std::uint32_t n_labels = read_be32(lab, "label count");
    if (n_images != n_labels)
        throw FormatError("IDX count mismatch: " + std::to_string(n_images) + " images vs " +
                          std::to_string(n_labels) + " labels");

    Dataset ds;
    ds.shape = {static_cast<int>(rows), static_cast<int>(cols)};
    ds.name = images_path.stem().string();
    ds.inputs.reserve(n_images);
    std::vector<int> labels;
    labels.reserve(n_images);
    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    std::vector<unsigned char> buf(pixels);
    for (std::uint32_t i = 0; i < n_images; ++i) {
        if (!img.read(reinterpret_cast<char*>(buf.data()), pixels))
            throw FormatError("truncated IDX image data in " + images_path.string());
        Eigen::VectorXd x(pixels);
        for (std::size_t p = 0; p < pixels; ++p)
            x[p] = static_cast<double>(buf[p]) / 255.0;
        ds.inputs.push_back(std::move(x));
        char l;
        if (!lab.read(&l, 1))
            throw FormatError("truncated IDX label data in " + labels_path.string());
        labels.push_back(static_cast<unsigned char>(l));
    }
    ds.labels = std::move(labels);
    return ds;
}

void write_idx(const Dataset& dataset, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
    if (dataset.shape.size() != 2)
        throw InputError("write_idx: dataset shape must be {rows, cols}");
    if (!dataset.labels || dataset.labels->size() != dataset.inputs.size())
        throw InputError("write_idx: dataset must carry one label per point");
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw IoError("cannot write " + images_path.string());
    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw IoError("cannot write " + labels_path.string());

    write_be32(img, kImageMagic);
    write_be32(img, static_cast<std::uint32_t>(dataset.inputs.size()));
    write_be32(img, static_cast<std::uint32_t>(dataset.shape[0]));
    write_be32(img, static_cast<std::uint32_t>(dataset.shape[1]));
    write_be32(lab, kLabelMagic);
    write_be32(lab, static_cast<std::uint32_t>(dataset.inputs.size()));
    for (std::size_t i = 0; i < dataset.inputs.size(); ++i) {
        const Eigen::VectorXd& x = dataset.inputs[i];
        for (Eigen::Index p = 0; p < x.size(); ++p) {
            const double v = std::clamp(x[p], 0.0, 1.0) * 255.0;
            const unsigned char byte = static_cast<unsigned char>(std::lround(v));
            img.write(reinterpret_cast<const char*>(&byte), 1);
        }
        const char l = static_cast<char>((*dataset.labels)[i]);
        lab.write(&l, 1);
    }
    if (!img || !lab) throw IoError("short write while emitting IDX files");
}

Dataset load_csv(const std::filesystem::path& path, bool label_column) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    Dataset ds;
    ds.name = path.stem().string();
    std::vector<int> labels;
    std::string line;
    std::size_t expected_cols = 0;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> values;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        while (p < end) {
            double v;
            auto [next, ec] = std::from_chars(p, end, v);
            if (ec != std::errc())
                throw FormatError(path.string() + ":" + std::to_string(line_no) +
                                  ": bad number");
            values.push_back(v);
            p = next;
            if (p < end) {
                if (*p != ',')
                    throw FormatError(path.string() + ":" + std::to_string(line_no) +
                                      ": expected comma");
                ++p;
            }
        }
        if (values.empty())
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": empty row");
        if (expected_cols == 0) expected_cols = values.size();
        if (values.size() != expected_cols)
            throw FormatError(path.string() + ":" + std::to_string(line_no) +
                              ": ragged row (" + std::to_string(values.size()) + " vs " +
                              std::to_string(expected_cols) + " columns)");
        std::size_t dim = values.size();
        if (label_column) {
            if (dim < 2)
                throw FormatError(path.string() + ": label column requires >= 2 columns");
            --dim;
            const double l = values.back();
            if (l != std::floor(l) || l < 0)
                throw FormatError(path.string() + ":" + std::to_string(line_no) +
                                  ": label column must hold non-negative integers");
            labels.push_back(static_cast<int>(l));
        }
        Eigen::VectorXd x(dim);
        for (std::size_t i = 0; i < dim; ++i) x[i] = values[i];
        ds.inputs.push_back(std::move(x));
    }
    if (ds.inputs.empty()) throw FormatError(path.string() + ": no data rows");
    ds.shape = {static_cast<int>(ds.inputs[0].size())};
    if (label_column) ds.labels = std::move(labels);
    return ds;
}

Dataset synth_blobs(int n_per_class, int n_classes, int dim, double spread,
                    std::uint64_t seed) {
    if (n_per_class < 1 || n_classes < 1 || dim < 1)
        throw InputError("synth_blobs: counts and dim must be positive");
    if (spread < 0) throw InputError("synth_blobs: spread must be >= 0");
    Rng rng(seed);
    Dataset ds;
    ds.shape = {dim};
    ds.name = "synth_blobs";
    std::vector<int> labels;
    std::vector<Eigen::VectorXd> centers(n_classes);
    for (int c = 0; c < n_classes; ++c) {
        centers[c].resize(dim);
        for (int i = 0; i < dim; ++i) centers[c][i] = 2.0 * rng.uniform() - 1.0;
    }
    for (int c = 0; c < n_classes; ++c) {
        for (int j = 0; j < n_per_class; ++j) {
            Eigen::VectorXd x = centers[c];
            for (int i = 0; i < dim; ++i) x[i] += spread * rng.normal();
            ds.inputs.push_back(std::move(x));
            labels.push_back(c);
        }
    }
    ds.labels = std::move(labels);
    return ds;
}

void write_results(std::span<const ResultRecord> records, const std::filesystem::path& path,
                   ResultFormat format) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    if (format == ResultFormat::csv) {
        out << "index,estimator,sigma,class,label,value,cdf_error,samples\n";
        for (const ResultRecord& r : records) {
            out << r.point_index << ',' << estimator_name(r.kind) << ','
                << format_double(r.sigma) << ',' << r.target_class << ',';
            if (r.label) out << *r.label;
            out << ',' << format_double(r.value) << ',';
            if (r.cdf_error) out << format_double(*r.cdf_error);
            out << ',' << r.samples << '\n';
        }
    } else {
        for (const ResultRecord& r : records) {
            json obj{{"index", r.point_index},
                     {"estimator", estimator_name(r.kind)},
                     {"sigma", r.sigma},
                     {"class", r.target_class},
                     {"value", r.value},
                     {"samples", r.samples}};
            if (r.label) obj["label"] = *r.label;
            if (r.cdf_error) obj["cdf_error"] = *r.cdf_error;
            out << obj.dump() << '\n';
        }
    }
    if (!out) throw IoError("short write to " + path.string());
}

ClassifierModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": invalid JSON: " + e.what());
    }
    try {
        const std::string type = doc.at("type").get<std::string>();
        if (type == "linear") {
            const json& layers = doc.at("layers");
            if (!layers.is_array() || layers.size() != 1)
                throw FormatError("linear model must carry exactly one dense layer");
            Layer layer = layer_from_json(layers[0]);
            const auto* dense = std::get_if<DenseLayer>(&layer);
            if (!dense) throw FormatError("linear model layer must be dense");
            return ClassifierModel(LinearModel{dense->weights, dense->bias});
        }
        if (type == "network") {
            NetworkModel net;
            for (const auto& s : doc.at("input_shape")) net.input_shape.push_back(s.get<int>());
            for (const auto& l : doc.at("layers")) net.layers.push_back(layer_from_json(l));
            if (net.layers.empty()) throw FormatError("network model has no layers");
            // Final width defines the class count.
            std::visit(
                [&net](const auto& l) {
                    using T = std::decay_t<decltype(l)>;
                    if constexpr (std::is_same_v<T, DenseLayer>)
                        net.n_classes = static_cast<int>(l.weights.rows());
                    else
                        throw FormatError("network model must end with a dense layer");
                },
                net.layers.back());
            return ClassifierModel(std::move(net));
        }
        if (type == "quadratic") {
            std::vector<Eigen::MatrixXd> quads;
            std::vector<Eigen::VectorXd> lins;
            std::vector<double> offsets;
            for (const auto& b : doc.at("boundaries")) {
                quads.push_back(matrix_from_json(b.at("A"), "quadratic A"));
                lins.push_back(vector_from_json(b.at("u"), "quadratic u"));
                offsets.push_back(b.at("c").get<double>());
            }
            return ClassifierModel(QuadraticBoundaryModel::from_dense(
                std::move(quads), std::move(lins), std::move(offsets)));
        }
        throw FormatError("unknown model type: " + type);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void save_model(const ClassifierModel& model, const std::filesystem::path& path) {
    json doc;
    if (const auto* lm = model.as<LinearModel>()) {
        doc["type"] = "linear";
        doc["input_shape"] = json::array({lm->input_dim()});
        doc["layers"] = json::array({layer_to_json(DenseLayer{lm->weights, lm->biases})});
    } else if (const auto* qm = model.as<QuadraticBoundaryModel>()) {
        doc["type"] = "quadratic";
        doc["input_shape"] = json::array({qm->dim});
        json boundaries = json::array();
        for (const auto& b : qm->boundaries) {
            boundaries.push_back({{"A", matrix_to_json(b.dense())},
                                  {"u", vector_to_json(b.lin)},
                                  {"c", b.offset}});
        }
        doc["boundaries"] = std::move(boundaries);
    } else {
        const auto* nm = model.as<NetworkModel>();
        doc["type"] = "network";
        doc["input_shape"] = nm->input_shape;
        json layers = json::array();
        for (const Layer& l : nm->layers) layers.push_back(layer_to_json(l));
        doc["layers"] = std::move(layers);
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
    if (!out) throw IoError("short write to " + path.string());
}

}  // namespace avgrob
