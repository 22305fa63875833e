// avgrob: average-case robustness estimation over datasets and models.

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "avgrob/data_io.hpp"
#include "avgrob/errors.hpp"
#include "avgrob/estimators.hpp"
#include "avgrob/model.hpp"
#include "avgrob/oracle.hpp"

namespace {

using namespace avgrob;

struct CommonOpts {
    std::string model_path;
    std::string data_spec;
    std::string format = "csv";
    bool label_column = false;
    std::string labels_path;
    std::string estimators = "mmse";
    std::string sigma_grid = "0.1";
    int mc_samples = 10000;
    int mmse_samples = 5;
    double temperature = 1.0;
    std::string noise = "gaussian";
    std::string noise_scaling = "coord";
    std::uint64_t seed = 0;
    int workers = 1;
    std::string output;
    std::string output_format = "csv";
    int top_k = 5;
};

void add_model_flag(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--model", o.model_path, "Model JSON file")->required();
}

void add_data_flags(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--data", o.data_spec, "Dataset path or synth:n=..,c=..,d=..,spread=..")
        ->required();
    cmd->add_option("--format", o.format, "Dataset format for paths: idx|csv")
        ->check(CLI::IsMember({"idx", "csv"}));
    cmd->add_option("--labels", o.labels_path, "IDX label file (with --format idx)");
    cmd->add_flag("--label-column", o.label_column,
                  "Treat the trailing CSV column as an integer label");
}

void add_noise_flags(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--sigma", o.sigma_grid, "Noise scale or comma grid, e.g. 0.05,0.1,0.5");
    cmd->add_option("--mc-samples", o.mc_samples, "Monte-Carlo samples M");
    cmd->add_option("--mmse-samples", o.mmse_samples, "MMSE smoothing samples N");
    cmd->add_option("--temperature", o.temperature, "Softmax temperature T");
    cmd->add_option("--noise", o.noise, "Noise distribution: gaussian|uniform")
        ->check(CLI::IsMember({"gaussian", "uniform"}));
    cmd->add_option("--noise-scaling", o.noise_scaling,
                    "coord: eps ~ N(0, sigma^2 I); radius: eps ~ N(0, sigma^2/d I)")
        ->check(CLI::IsMember({"coord", "radius"}));
}

void add_run_flags(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--seed", o.seed, "Base RNG seed");
    cmd->add_option("--workers", o.workers, "Worker threads (AVGROB_THREADS overrides)");
    cmd->add_option("--output", o.output, "Output file");
    cmd->add_option("--output-format", o.output_format, "csv|jsonl")
        ->check(CLI::IsMember({"csv", "jsonl"}));
}

int effective_workers(const CommonOpts& o) {
    if (const char* env = std::getenv("AVGROB_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end && *end == '\0' && v > 0) return static_cast<int>(v);
    }
    return std::max(1, o.workers);
}

std::vector<double> parse_sigma_grid(const std::string& grid) {
    std::vector<double> sigmas;
    std::stringstream ss(grid);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        sigmas.push_back(std::stod(tok));
        if (!(sigmas.back() > 0.0)) throw InputError("--sigma values must be > 0");
    }
    if (sigmas.empty()) throw InputError("--sigma grid is empty");
    return sigmas;
}

std::vector<EstimatorKind> parse_estimators(const std::string& list) {
    std::vector<EstimatorKind> kinds;
    std::stringstream ss(list);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        auto kind = estimator_from_name(tok);
        if (!kind) throw InputError("unknown estimator: " + tok);
        kinds.push_back(*kind);
    }
    if (kinds.empty()) throw InputError("--estimator list is empty");
    return kinds;
}

Dataset load_data(const CommonOpts& o) {
    if (o.data_spec.rfind("synth:", 0) == 0) {
        int n = 50, c = 3, d = 16;
        double spread = 0.3;
        std::uint64_t seed = o.seed;
        std::stringstream ss(o.data_spec.substr(6));
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            const auto eq = tok.find('=');
            if (eq == std::string::npos) throw InputError("bad synth spec token: " + tok);
            const std::string key = tok.substr(0, eq);
            const std::string val = tok.substr(eq + 1);
            if (key == "n") n = std::stoi(val);
            else if (key == "c") c = std::stoi(val);
            else if (key == "d") d = std::stoi(val);
            else if (key == "spread") spread = std::stod(val);
            else if (key == "seed") seed = std::stoull(val);
            else throw InputError("unknown synth spec key: " + key);
        }
        return synth_blobs(n, c, d, spread, seed);
    }
    if (o.format == "idx") {
        if (o.labels_path.empty())
            throw InputError("--format idx requires --labels LABEL_FILE");
        return load_idx(o.data_spec, o.labels_path);
    }
    return load_csv(o.data_spec, o.label_column);
}

EstimatorConfig make_config(const CommonOpts& o, EstimatorKind kind, double sigma) {
    EstimatorConfig config;
    config.kind = kind;
    config.sigma = sigma;
    config.mc_samples = o.mc_samples;
    config.mmse_samples = o.mmse_samples;
    config.temperature = o.temperature;
    config.seed = o.seed;
    config.noise_kind = o.noise == "uniform" ? NoiseKind::uniform : NoiseKind::gaussian;
    config.noise_scaling = o.noise_scaling == "radius" ? NoiseScaling::per_radius
                                                       : NoiseScaling::per_coordinate;
    return config;
}

double quantile(std::vector<double> sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

struct BatchRun {
    EstimatorKind kind;
    double sigma;
    std::vector<BatchItem> items;
};

std::vector<BatchRun> run_batches(const ClassifierModel& model, const Dataset& data,
                                  const CommonOpts& o,
                                  const std::vector<EstimatorKind>& kinds,
                                  const std::vector<double>& sigmas) {
    std::vector<BatchRun> runs;
    const int workers = effective_workers(o);
    for (EstimatorKind kind : kinds) {
        for (double sigma : sigmas) {
            BatchRun run;
            run.kind = kind;
            run.sigma = sigma;
            run.items = estimate_batch(model, data.inputs, make_config(o, kind, sigma), workers);
            runs.push_back(std::move(run));
        }
    }
    return runs;
}

std::vector<ResultRecord> to_records(const BatchRun& run, const Dataset& data) {
    std::vector<ResultRecord> records;
    records.reserve(run.items.size());
    for (const BatchItem& item : run.items) {
        if (!item.ok) continue;
        ResultRecord r;
        r.point_index = item.index;
        r.kind = run.kind;
        r.sigma = run.sigma;
        r.value = item.estimate.value;
        r.target_class = item.estimate.target_class;
        if (data.labels) r.label = (*data.labels)[item.index];
        r.cdf_error = item.estimate.cdf_error;
        r.samples = item.estimate.samples_used;
        records.push_back(std::move(r));
    }
    return records;
}

std::size_t report_failures(const std::vector<BatchRun>& runs) {
    std::size_t failures = 0;
    for (const BatchRun& run : runs)
        for (const BatchItem& item : run.items)
            if (!item.ok) {
                std::cerr << "point " << item.index << " (" << estimator_name(run.kind)
                          << ", sigma=" << run.sigma << ") failed: " << item.error << "\n";
                ++failures;
            }
    return failures;
}

ResultFormat parse_result_format(const std::string& f) {
    return f == "jsonl" ? ResultFormat::jsonl : ResultFormat::csv;
}

int cmd_estimate(const CommonOpts& o) {
    ClassifierModel model = load_model(o.model_path);
    Dataset data = load_data(o);
    const auto kinds = parse_estimators(o.estimators);
    const auto sigmas = parse_sigma_grid(o.sigma_grid);
    const auto runs = run_batches(model, data, o, kinds, sigmas);
    const std::size_t failures = report_failures(runs);

    std::vector<ResultRecord> records;
    for (const BatchRun& run : runs) {
        auto batch_records = to_records(run, data);
        records.insert(records.end(), batch_records.begin(), batch_records.end());

        std::vector<double> values;
        values.reserve(batch_records.size());
        for (const auto& r : batch_records) values.push_back(r.value);
        std::sort(values.begin(), values.end());
        const double mean =
            values.empty() ? 0.0
                           : std::accumulate(values.begin(), values.end(), 0.0) /
                                 static_cast<double>(values.size());
        std::cout << estimator_name(run.kind) << " sigma=" << run.sigma << " n=" << values.size()
                  << " mean=" << mean << " median=" << quantile(values, 0.5)
                  << " q05=" << quantile(values, 0.05) << " q95=" << quantile(values, 0.95)
                  << "\n";
    }
    if (!o.output.empty())
        write_results(records, o.output, parse_result_format(o.output_format));
    if (!records.empty() || failures == 0) return 0;
    return 1;  // every point failed
}

int cmd_compare(const CommonOpts& o) {
    const auto kinds = parse_estimators(o.estimators);
    if (std::find(kinds.begin(), kinds.end(), EstimatorKind::mc) == kinds.end())
        throw CLI::ValidationError("--estimator",
                                   "compare requires the mc reference estimator in the list");
    ClassifierModel model = load_model(o.model_path);
    Dataset data = load_data(o);
    const auto sigmas = parse_sigma_grid(o.sigma_grid);

    std::ostringstream table;
    table << "sigma,estimator,mean_abs_error,mean_rel_error\n";
    for (double sigma : sigmas) {
        auto runs = run_batches(model, data, o, kinds, {sigma});
        report_failures(runs);
        const BatchRun* mc_run = nullptr;
        for (const auto& run : runs)
            if (run.kind == EstimatorKind::mc) mc_run = &run;
        for (const auto& run : runs) {
            if (run.kind == EstimatorKind::mc) continue;
            double abs_sum = 0.0, rel_sum = 0.0;
            std::size_t n = 0;
            for (std::size_t i = 0; i < run.items.size(); ++i) {
                if (!run.items[i].ok || !mc_run->items[i].ok) continue;
                const double ref = mc_run->items[i].estimate.value;
                const double diff = std::abs(run.items[i].estimate.value - ref);
                abs_sum += diff;
                rel_sum += diff / std::max(ref, 1e-12);
                ++n;
            }
            const double denom = std::max<std::size_t>(n, 1);
            table << sigma << ',' << estimator_name(run.kind) << ','
                  << abs_sum / static_cast<double>(denom) << ','
                  << rel_sum / static_cast<double>(denom) << "\n";
        }
    }
    std::cout << table.str();
    if (!o.output.empty()) {
        std::ofstream out(o.output);
        if (!out) throw IoError("cannot write " + o.output);
        out << table.str();
    }
    return 0;
}

int cmd_bias_report(const CommonOpts& o) {
    ClassifierModel model = load_model(o.model_path);
    Dataset data = load_data(o);
    if (!data.labels) throw InputError("bias-report requires a labeled dataset");
    const auto kinds = parse_estimators(o.estimators);
    if (kinds.size() != 1) throw InputError("bias-report takes exactly one estimator");
    const auto sigmas = parse_sigma_grid(o.sigma_grid);
    const int n_classes = model.n_classes();

    std::ostringstream table;
    table << "sigma,class,count,mean,std,q05,q25,q50,q75,q95\n";
    for (double sigma : sigmas) {
        auto runs = run_batches(model, data, o, kinds, {sigma});
        report_failures(runs);
        const auto& items = runs[0].items;
        std::vector<std::vector<double>> per_class(n_classes);
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (!items[i].ok) continue;
            const int label = (*data.labels)[i];
            if (label < 0 || label >= n_classes)
                throw InputError("label " + std::to_string(label) + " out of range for model");
            per_class[label].push_back(items[i].estimate.value);
        }
        double max_mean = -1.0, min_mean = 2.0;
        for (int c = 0; c < n_classes; ++c) {
            auto& v = per_class[c];
            std::sort(v.begin(), v.end());
            const double n = static_cast<double>(v.size());
            const double mean =
                v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / n;
            double var = 0.0;
            for (double x : v) var += (x - mean) * (x - mean);
            const double sd = v.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
            if (!v.empty()) {
                max_mean = std::max(max_mean, mean);
                min_mean = std::min(min_mean, mean);
            }
            table << sigma << ',' << c << ',' << v.size() << ',' << mean << ',' << sd << ','
                  << quantile(v, 0.05) << ',' << quantile(v, 0.25) << ',' << quantile(v, 0.50)
                  << ',' << quantile(v, 0.75) << ',' << quantile(v, 0.95) << "\n";
        }
        const double gap = (max_mean >= 0.0 && min_mean <= 1.0) ? max_mean - min_mean : 0.0;
        std::cout << "sigma=" << sigma << " max-min class-mean gap: " << gap << "\n";
    }
    std::cout << table.str();
    if (!o.output.empty()) {
        std::ofstream out(o.output);
        if (!out) throw IoError("cannot write " + o.output);
        out << table.str();
    }
    return 0;
}

int cmd_rank(const CommonOpts& o) {
    ClassifierModel model = load_model(o.model_path);
    Dataset data = load_data(o);
    const auto kinds = parse_estimators(o.estimators);
    if (kinds.size() != 1) throw InputError("rank takes exactly one estimator");
    const auto sigmas = parse_sigma_grid(o.sigma_grid);
    if (sigmas.size() != 1) throw InputError("rank takes exactly one sigma");
    if (o.top_k < 1) throw InputError("--top-k must be >= 1");

    auto runs = run_batches(model, data, o, kinds, sigmas);
    report_failures(runs);
    const auto& items = runs[0].items;

    // Group by true label when available, else by predicted class.
    std::vector<std::vector<std::pair<double, std::size_t>>> groups(model.n_classes());
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (!items[i].ok) continue;
        const int group = data.labels ? (*data.labels)[i] : items[i].estimate.target_class;
        if (group < 0 || group >= model.n_classes()) continue;
        groups[group].push_back({items[i].estimate.value, i});
    }

    std::ostringstream table;
    table << "class,which,order,index,value\n";
    for (int c = 0; c < model.n_classes(); ++c) {
        auto& g = groups[c];
        std::sort(g.begin(), g.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first < b.first;
            return a.second < b.second;  // stable tie-break by index
        });
        const std::size_t k = std::min<std::size_t>(o.top_k, g.size());
        for (std::size_t i = 0; i < k; ++i)
            table << c << ",bottom," << i << ',' << g[i].second << ',' << g[i].first << "\n";
        for (std::size_t i = 0; i < k; ++i) {
            const auto& e = g[g.size() - 1 - i];
            table << c << ",top," << i << ',' << e.second << ',' << e.first << "\n";
        }
    }
    std::cout << table.str();
    if (!o.output.empty()) {
        std::ofstream out(o.output);
        if (!out) throw IoError("cannot write " + o.output);
        out << table.str();
    }
    return 0;
}

struct VerifyOpts {
    int cases = 50;
    int dim = 400;
    std::string classes = "2,3,4";
    std::string sigma_grid = "0.05,0.1,0.2";
    std::int64_t bruteforce_samples = 1000000;
    int mmse_samples = 10000;
    std::uint64_t seed = 0;
    int workers = 1;
    std::string output;
};

int cmd_verify_bounds(const VerifyOpts& v) {
    SweepConfig config;
    config.n_cases = v.cases;
    config.dim = v.dim;
    config.class_counts.clear();
    {
        std::stringstream ss(v.classes);
        std::string tok;
        while (std::getline(ss, tok, ','))
            if (!tok.empty()) config.class_counts.push_back(std::stoi(tok));
    }
    config.sigmas = parse_sigma_grid(v.sigma_grid);
    config.bruteforce_samples = v.bruteforce_samples;
    config.mmse_samples = v.mmse_samples;
    config.seed = v.seed;
    config.workers = v.workers;
    if (const char* env = std::getenv("AVGROB_THREADS")) {
        char* end = nullptr;
        const long n = std::strtol(env, &end, 10);
        if (end && *end == '\0' && n > 0) config.workers = static_cast<int>(n);
    }

    const auto results = bound_sweep(config);
    int taylor_ok = 0, mmse_ok = 0, ordered = 0;
    std::ostringstream lines;
    for (const auto& r : results) {
        nlohmann::json obj{
            {"digest", r.digest},
            {"n_classes", r.n_classes},
            {"dim", r.dim},
            {"sigma", r.sigma},
            {"taylor",
             {{"error", r.taylor.empirical_error},
              {"bound", r.taylor.bound},
              {"satisfied", r.taylor.satisfied}}},
            {"mmse",
             {{"error", r.mmse.empirical_error},
              {"bound", r.mmse.bound},
              {"satisfied", r.mmse.satisfied}}}};
        lines << obj.dump() << "\n";
        taylor_ok += r.taylor.satisfied ? 1 : 0;
        mmse_ok += r.mmse.satisfied ? 1 : 0;
        ordered += r.mmse.bound <= r.taylor.bound ? 1 : 0;
    }
    const double n = static_cast<double>(results.size());
    std::cout << "cases=" << results.size()
              << " taylor_satisfied=" << static_cast<double>(taylor_ok) / n
              << " mmse_satisfied=" << static_cast<double>(mmse_ok) / n
              << " mmse_bound<=taylor_bound=" << static_cast<double>(ordered) / n << "\n";
    if (!v.output.empty()) {
        std::ofstream out(v.output);
        if (!out) throw IoError("cannot write " + v.output);
        out << lines.str();
    }
    return 0;
}

int cmd_bench(const CommonOpts& o, int repetitions, bool single_threaded) {
    ClassifierModel model = load_model(o.model_path);
    Dataset data = load_data(o);
    const auto kinds = parse_estimators(o.estimators);
    const auto sigmas = parse_sigma_grid(o.sigma_grid);
    if (sigmas.size() != 1) throw InputError("bench takes exactly one sigma");
    const int workers = single_threaded ? 1 : effective_workers(o);

    struct Row {
        EstimatorKind kind;
        std::int64_t samples;
        double median_seconds;
        double mean_value;
    };
    std::vector<Row> rows;
    for (EstimatorKind kind : kinds) {
        const EstimatorConfig config = make_config(o, kind, sigmas[0]);
        std::vector<double> times;
        double mean_value = 0.0;
        for (int rep = 0; rep < repetitions; ++rep) {
            const auto start = std::chrono::steady_clock::now();
            auto items = estimate_batch(model, data.inputs, config, workers);
            const auto stop = std::chrono::steady_clock::now();
            times.push_back(std::chrono::duration<double>(stop - start).count());
            double sum = 0.0;
            std::size_t n = 0;
            for (const auto& item : items)
                if (item.ok) {
                    sum += item.estimate.value;
                    ++n;
                }
            mean_value = n ? sum / static_cast<double>(n) : 0.0;
        }
        std::sort(times.begin(), times.end());
        Row row;
        row.kind = kind;
        row.samples = kind == EstimatorKind::mc      ? o.mc_samples
                      : kind == EstimatorKind::mmse || kind == EstimatorKind::mmse_mvs
                          ? o.mmse_samples
                          : 0;
        row.median_seconds = times[times.size() / 2];
        row.mean_value = mean_value;
        rows.push_back(row);
    }

    double mc_time = 0.0;
    for (const Row& r : rows)
        if (r.kind == EstimatorKind::mc) mc_time = r.median_seconds;
    std::cout << "estimator,samples,median_seconds,speedup_vs_mc\n";
    for (const Row& r : rows) {
        std::cout << estimator_name(r.kind) << ',' << r.samples << ',' << r.median_seconds
                  << ',';
        if (mc_time > 0.0 && r.median_seconds > 0.0)
            std::cout << mc_time / r.median_seconds;
        std::cout << "\n";
    }
    if (!o.output.empty()) {
        // Timings are not reproducible; the output file carries only the
        // deterministic value summaries.
        std::ofstream out(o.output);
        if (!out) throw IoError("cannot write " + o.output);
        out << "estimator,samples,mean_value\n";
        for (const Row& r : rows) {
            char buf[40];
            std::snprintf(buf, sizeof(buf), "%.17g", r.mean_value);
            out << estimator_name(r.kind) << ',' << r.samples << ',' << buf << "\n";
        }
    }
    return 0;
}

int cmd_convergence(const CommonOpts& o, const std::string& mc_grid,
                    const std::string& mmse_grid, int reference_samples, int repeats) {
    ClassifierModel model = load_model(o.model_path);
    Dataset data = load_data(o);
    const auto sigmas = parse_sigma_grid(o.sigma_grid);
    if (sigmas.size() != 1) throw InputError("convergence takes exactly one sigma");
    const double sigma = sigmas[0];
    const int workers = effective_workers(o);

    // High-M reference.
    CommonOpts ref = o;
    ref.mc_samples = reference_samples;
    auto ref_items =
        estimate_batch(model, data.inputs, make_config(ref, EstimatorKind::mc, sigma), workers);

    auto parse_grid = [](const std::string& grid) {
        std::vector<int> out;
        std::stringstream ss(grid);
        std::string tok;
        while (std::getline(ss, tok, ','))
            if (!tok.empty()) out.push_back(std::stoi(tok));
        return out;
    };

    std::ostringstream table;
    table << "estimator,samples,repeat,mean_abs_error,mean_rel_error\n";
    auto emit = [&](EstimatorKind kind, const std::vector<int>& grid) {
        for (int samples : grid) {
            for (int rep = 0; rep < repeats; ++rep) {
                CommonOpts varied = o;
                varied.seed = o.seed + static_cast<std::uint64_t>(rep) * 0x9e3779b9ULL;
                if (kind == EstimatorKind::mc) varied.mc_samples = samples;
                else varied.mmse_samples = samples;
                auto items = estimate_batch(model, data.inputs,
                                            make_config(varied, kind, sigma), workers);
                double abs_sum = 0.0, rel_sum = 0.0;
                std::size_t n = 0;
                for (std::size_t i = 0; i < items.size(); ++i) {
                    if (!items[i].ok || !ref_items[i].ok) continue;
                    const double r = ref_items[i].estimate.value;
                    const double diff = std::abs(items[i].estimate.value - r);
                    abs_sum += diff;
                    rel_sum += diff / std::max(r, 1e-12);
                    ++n;
                }
                const double denom = std::max<std::size_t>(n, 1);
                table << estimator_name(kind) << ',' << samples << ',' << rep << ','
                      << abs_sum / static_cast<double>(denom) << ','
                      << rel_sum / static_cast<double>(denom) << "\n";
            }
        }
    };
    emit(EstimatorKind::mc, parse_grid(mc_grid));
    emit(EstimatorKind::mmse, parse_grid(mmse_grid));

    std::cout << table.str();
    if (!o.output.empty()) {
        std::ofstream out(o.output);
        if (!out) throw IoError("cannot write " + o.output);
        out << table.str();
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Average-case robustness estimation"};
    app.require_subcommand(1);

    CommonOpts o;
    o.estimators = "mmse";

    auto* estimate = app.add_subcommand("estimate", "Estimate robustness over a dataset");
    add_model_flag(estimate, o);
    add_data_flags(estimate, o);
    add_noise_flags(estimate, o);
    add_run_flags(estimate, o);
    estimate->add_option("--estimator", o.estimators,
                         "Comma list: mc,taylor,taylor_mvs,mmse,mmse_mvs,softmax");

    CommonOpts oc;
    oc.estimators = "mc,taylor,taylor_mvs,mmse,mmse_mvs,softmax";
    auto* compare = app.add_subcommand("compare", "Compare estimators against the mc reference");
    add_model_flag(compare, oc);
    add_data_flags(compare, oc);
    add_noise_flags(compare, oc);
    add_run_flags(compare, oc);
    compare->add_option("--estimator", oc.estimators, "Comma list; must include mc");

    CommonOpts ob;
    ob.estimators = "mmse";
    auto* bias = app.add_subcommand("bias-report", "Per-class robustness distribution report");
    add_model_flag(bias, ob);
    add_data_flags(bias, ob);
    add_noise_flags(bias, ob);
    add_run_flags(bias, ob);
    bias->add_option("--estimator", ob.estimators, "Single estimator");

    CommonOpts orank;
    orank.estimators = "mmse";
    auto* rank = app.add_subcommand("rank", "Top-k / bottom-k points per class");
    add_model_flag(rank, orank);
    add_data_flags(rank, orank);
    add_noise_flags(rank, orank);
    add_run_flags(rank, orank);
    rank->add_option("--estimator", orank.estimators, "Single estimator");
    rank->add_option("--top-k", orank.top_k, "Entries per class and side");

    VerifyOpts v;
    auto* verify = app.add_subcommand("verify-bounds", "Estimation-error bound sweep");
    verify->add_option("--cases", v.cases, "Number of random quadratic cases");
    verify->add_option("--dim", v.dim, "Input dimension (>= 200)");
    verify->add_option("--classes", v.classes, "Comma list of class counts");
    verify->add_option("--sigma", v.sigma_grid, "Comma grid of noise scales");
    verify->add_option("--bruteforce-samples", v.bruteforce_samples, "MC samples per case");
    verify->add_option("--mmse-samples", v.mmse_samples, "Smoothing samples for mmse");
    verify->add_option("--seed", v.seed, "Base RNG seed");
    verify->add_option("--workers", v.workers, "Worker threads");
    verify->add_option("--output", v.output, "JSONL report path");

    CommonOpts obench;
    obench.estimators = "mc,taylor,taylor_mvs,mmse,mmse_mvs,softmax";
    int repetitions = 5;
    bool single_threaded = true;
    auto* bench = app.add_subcommand("bench", "Wall-clock comparison of estimators");
    add_model_flag(bench, obench);
    add_data_flags(bench, obench);
    add_noise_flags(bench, obench);
    add_run_flags(bench, obench);
    bench->add_option("--estimator", obench.estimators, "Comma list");
    bench->add_option("--repetitions", repetitions, "Timing repetitions (median reported)");
    bench->add_flag("--single-threaded,!--multi-threaded", single_threaded,
                    "Force workers=1 for fair ratios (default on)");

    CommonOpts oconv;
    std::string mc_grid = "100,316,1000,3162,10000";
    std::string mmse_grid = "1,2,5,10,20,50";
    int reference_samples = 100000;
    int repeats = 1;
    auto* conv = app.add_subcommand("convergence", "Error vs sample count curves");
    add_model_flag(conv, oconv);
    add_data_flags(conv, oconv);
    add_noise_flags(conv, oconv);
    add_run_flags(conv, oconv);
    conv->add_option("--mc-grid", mc_grid, "Comma grid of M values");
    conv->add_option("--mmse-grid", mmse_grid, "Comma grid of N values");
    conv->add_option("--reference-samples", reference_samples, "Reference M");
    conv->add_option("--repeats", repeats, "Seed repetitions per grid point");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*estimate) return cmd_estimate(o);
        if (*compare) return cmd_compare(oc);
        if (*bias) return cmd_bias_report(ob);
        if (*rank) return cmd_rank(orank);
        if (*verify) return cmd_verify_bounds(v);
        if (*bench) return cmd_bench(obench, repetitions, single_threaded);
        if (*conv) return cmd_convergence(oconv, mc_grid, mmse_grid, reference_samples, repeats);
    } catch (const CLI::ValidationError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
