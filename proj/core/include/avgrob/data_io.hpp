#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avgrob/estimators.hpp"
#include "avgrob/model.hpp"

namespace avgrob {

struct Dataset {
    std::vector<Eigen::VectorXd> inputs;
    std::optional<std::vector<int>> labels;
    std::vector<int> shape;  // per-point shape, e.g. {28, 28} or {d}
    std::string name;

    std::size_t size() const { return inputs.size(); }
    int point_dim() const {
        int n = 1;
        for (int s : shape) n *= s;
        return n;
    }
};

struct ResultRecord {
    std::size_t point_index = 0;
    EstimatorKind kind = EstimatorKind::taylor;
    double sigma = 0.0;
    double value = 0.0;
    int target_class = 0;
    std::optional<int> label;
    std::optional<double> cdf_error;
    std::int64_t samples = 0;
};

enum class ResultFormat { csv, jsonl };

// IDX ingestion: big-endian, image magic 0x00000803, label magic 0x00000801,
// pixels scaled to [0,1] as value/255.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

// Writes [0,1] inputs back to IDX bytes (value * 255 rounded); test fixtures
// and round-trip checks.
void write_idx(const Dataset& dataset, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

// One point per row of comma-separated doubles; optional trailing integer
// label column.
Dataset load_csv(const std::filesystem::path& path, bool label_column);

// C Gaussian clusters with centers drawn in [-1, 1]^d, per-coordinate spread,
// labels attached; reproducible from the seed.
Dataset synth_blobs(int n_per_class, int n_classes, int dim, double spread,
                    std::uint64_t seed);

void write_results(std::span<const ResultRecord> records, const std::filesystem::path& path,
                   ResultFormat format);

ClassifierModel load_model(const std::filesystem::path& path);
void save_model(const ClassifierModel& model, const std::filesystem::path& path);

}  // namespace avgrob
