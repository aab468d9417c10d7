#include "vadkit/crossval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <thread>

#include <json.hpp>

namespace vadkit::cv {

const char* axis_name(Axis a) {
    switch (a) {
        case Axis::Conv1Kernel: return "conv1_kernel";
        case Axis::Conv1Width: return "conv1_width";
        case Axis::Conv2Kernel: return "conv2_kernel";
        case Axis::Conv2Width: return "conv2_width";
        case Axis::DenseWidth: return "dense_width";
        case Axis::LstmWidth: return "lstm_width";
        case Axis::Dropout: return "dropout";
        case Axis::BatchSize: return "batch_size";
        case Axis::SeqLen: return "seq_len";
        case Axis::Bidirectional: return "bidirectional";
    }
    return "?";
}

std::optional<Axis> axis_from_name(const std::string& name) {
    for (Axis a : {Axis::Conv1Kernel, Axis::Conv1Width, Axis::Conv2Kernel, Axis::Conv2Width,
                   Axis::DenseWidth, Axis::LstmWidth, Axis::Dropout, Axis::BatchSize,
                   Axis::SeqLen, Axis::Bidirectional})
        if (name == axis_name(a)) return a;
    return std::nullopt;
}

bool axis_affects_size(Axis a) {
    switch (a) {
        case Axis::Dropout:
        case Axis::BatchSize:
        case Axis::SeqLen: return false;
        default: return true;
    }
}

void apply_axis(model::ModelConfig& mc, train::TrainConfig& tc, Axis axis, double value) {
    switch (axis) {
        case Axis::Conv1Kernel:
            mc.conv1_kh = mc.conv1_kw = static_cast<int>(value);
            break;
        case Axis::Conv1Width: mc.conv1_width = static_cast<int>(value); break;
        case Axis::Conv2Kernel:
            mc.conv2_kh = mc.conv2_kw = static_cast<int>(value);
            break;
        case Axis::Conv2Width: mc.conv2_width = static_cast<int>(value); break;
        case Axis::DenseWidth: mc.dense_width = static_cast<int>(value); break;
        case Axis::LstmWidth: mc.lstm_width = static_cast<int>(value); break;
        case Axis::Dropout:
            tc.dropout_rate = value;
            mc.dropout_rate = value;
            break;
        case Axis::BatchSize: tc.batch_size = static_cast<int>(value); break;
        case Axis::SeqLen: tc.seq_len = static_cast<int>(value); break;
        case Axis::Bidirectional: mc.bidirectional = value != 0.0; break;
    }
}

FoldPlan make_folds(std::size_t n_items, int k_outer, int k_inner, std::uint64_t seed) {
    if (!(static_cast<int>(n_items) >= k_outer && k_outer >= 2))
        throw ArgumentError("make_folds: need n_items >= k_outer >= 2");
    if (k_inner < 2) throw ArgumentError("make_folds: need k_inner >= 2");

    FoldPlan plan;
    plan.k_outer = k_outer;
    plan.k_inner = k_inner;
    plan.seed = seed;

    std::vector<std::size_t> order(n_items);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
    std::shuffle(order.begin(), order.end(), rng);

    plan.outer_of_item.assign(n_items, 0);
    for (std::size_t i = 0; i < n_items; ++i)
        plan.outer_of_item[order[i]] = static_cast<int>(i % k_outer);

    plan.inner_of_item.assign(k_outer, std::vector<int>(n_items, -1));
    for (int f = 0; f < k_outer; ++f) {
        auto& inner = plan.inner_of_item[f];
        if (k_inner == k_outer - 1) {
            // reuse the outer partition: inner fold j = j-th other outer fold
            for (std::size_t i = 0; i < n_items; ++i) {
                const int of = plan.outer_of_item[i];
                if (of == f) continue;
                inner[i] = of < f ? of : of - 1;
            }
        } else {
            std::vector<std::size_t> train_items;
            for (std::size_t i = 0; i < n_items; ++i)
                if (plan.outer_of_item[i] != f) train_items.push_back(i);
            std::mt19937 inner_rng(
                static_cast<std::mt19937::result_type>(seed ^ (0x9E3779B9u * (f + 1))));
            std::shuffle(train_items.begin(), train_items.end(), inner_rng);
            for (std::size_t j = 0; j < train_items.size(); ++j)
                inner[train_items[j]] = static_cast<int>(j % k_inner);
        }
    }
    return plan;
}

std::vector<double> SweepResult::accuracies(Axis axis, double value) const {
    std::vector<double> out;
    for (const auto& c : cells)
        if (c.axis == axis && c.value == value && !c.failed) out.push_back(c.accuracy);
    return out;
}

double median(std::vector<double> xs) {
    if (xs.empty()) throw ArgumentError("median of empty list");
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : (xs[n / 2 - 1] + xs[n / 2]) / 2.0;
}

double SweepResult::median_accuracy(Axis axis, double value) const {
    auto accs = accuracies(axis, value);
    if (accs.empty()) return -1.0;  // every inner cell failed; never selected
    return median(std::move(accs));
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c,
                       std::uint64_t d) {
    std::uint64_t x = seed ^ (a * 0x9E3779B97F4A7C15ull) ^ (b * 0xBF58476D1CE4E5B9ull) ^
                      (c * 0x94D049BB133111EBull) ^ (d * 0xD6E8FEB86659FD93ull);
    x ^= x >> 31;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 29;
    return x;
}

// Normalize with stats from the training items only, then build examples.
struct CellData {
    std::vector<train::TrainingExample> train_examples;
    std::vector<train::TrainingExample> val_examples;
};

CellData build_cell_data(const std::vector<CvItem>& data, const std::vector<std::size_t>& train_idx,
                         const std::vector<std::size_t>& val_idx, int seq_len) {
    std::vector<const features::ImageSequence*> train_seqs;
    for (std::size_t i : train_idx) train_seqs.push_back(&data[i].images);
    const auto stats = features::compute_band_stats(train_seqs);

    CellData out;
    auto add = [&](std::vector<train::TrainingExample>& dst, std::size_t i) {
        auto normed = features::normalize(data[i].images, stats);
        auto exs = train::make_examples(normed, data[i].frames, seq_len);
        for (auto& e : exs) dst.push_back(std::move(e));
    };
    for (std::size_t i : train_idx) add(out.train_examples, i);
    for (std::size_t i : val_idx) add(out.val_examples, i);
    return out;
}

void run_parallel(std::size_t n_jobs, int threads, const std::function<void(std::size_t)>& job) {
    if (threads <= 1 || n_jobs <= 1) {
        for (std::size_t i = 0; i < n_jobs; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const int n_threads = std::min<std::size_t>(threads, n_jobs);
    std::vector<std::exception_ptr> errors(n_threads);
    for (int t = 0; t < n_threads; ++t)
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = next++; i < n_jobs; i = next++) job(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace

int thread_budget(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("VADKIT_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

SweepResult sweep_outer_fold(const std::vector<CvItem>& data, const FoldPlan& plan,
                             int outer_fold, const SweepGrid& grid, const CvOptions& opts) {
    const auto& inner = plan.inner_of_item[outer_fold];

    SweepResult result;
    std::size_t axis_idx = 0;
    for (const auto& [axis, values] : grid) {
        for (std::size_t vi = 0; vi < values.size(); ++vi)
            for (int f = 0; f < plan.k_inner; ++f) {
                SweepCell cell;
                cell.axis = axis;
                cell.value = values[vi];
                cell.inner_fold = f;
                result.cells.push_back(cell);
            }
        ++axis_idx;
    }

    run_parallel(result.cells.size(), thread_budget(opts.threads), [&](std::size_t ci) {
        auto& cell = result.cells[ci];
        std::vector<std::size_t> train_idx, val_idx;
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (inner[i] < 0) continue;  // outer-test item, never touched here
            (inner[i] == cell.inner_fold ? val_idx : train_idx).push_back(i);
        }
        model::ModelConfig mc = opts.base_model;
        train::TrainConfig tc = opts.base_train;
        apply_axis(mc, tc, cell.axis, cell.value);
        tc.seed = mix_seed(opts.seed, outer_fold + 1, static_cast<std::uint64_t>(cell.axis) + 1,
                           std::hash<double>{}(cell.value), cell.inner_fold + 1);
        try {
            auto cd = build_cell_data(data, train_idx, val_idx, tc.seq_len);
            auto res = train::train(cd.train_examples, mc, tc, cd.val_examples);
            cell.accuracy = train::accuracy(res.params, cd.val_examples);
        } catch (const TrainingError& e) {
            std::cerr << "warning: sweep cell failed (" << axis_name(cell.axis) << "="
                      << cell.value << ", inner fold " << cell.inner_fold << "): " << e.what()
                      << '\n';
            cell.failed = true;
        }
    });
    return result;
}

namespace {

std::size_t params_for_value(const CvOptions& opts, Axis axis, double value) {
    model::ModelConfig mc = opts.base_model;
    train::TrainConfig tc = opts.base_train;
    apply_axis(mc, tc, axis, value);
    return model::count_params(mc);
}

double pick_value(const SweepResult& results, const SweepGrid& grid, const CvOptions& opts,
                  Axis axis, bool prefer_smallest) {
    const auto& values = grid.at(axis);
    if (values.empty()) throw ArgumentError(std::string("empty axis: ") + axis_name(axis));

    if (prefer_smallest) {
        double best = values[0];
        for (double v : values) {
            if (params_for_value(opts, axis, v) < params_for_value(opts, axis, best) ||
                (params_for_value(opts, axis, v) == params_for_value(opts, axis, best) && v < best))
                best = v;
        }
        return best;
    }

    double best = values[0];
    double best_med = results.median_accuracy(axis, best);
    for (double v : values) {
        const double med = results.median_accuracy(axis, v);
        if (med > best_med) {
            best = v;
            best_med = med;
        } else if (med == best_med && v != best) {
            // tie: fewer parameters, then the smaller literal value
            const std::size_t pv = params_for_value(opts, axis, v);
            const std::size_t pb = params_for_value(opts, axis, best);
            if (pv < pb || (pv == pb && v < best)) best = v;
        }
    }
    return best;
}

}  // namespace

Selection select_best(const SweepResult& results, const SweepGrid& grid, const CvOptions& opts) {
    Selection sel{opts.base_model, opts.base_train};
    for (const auto& [axis, values] : grid)
        apply_axis(sel.model_config, sel.train_config, axis,
                   pick_value(results, grid, opts, axis, false));
    return sel;
}

Selection select_small(const SweepResult& results, const SweepGrid& grid, const CvOptions& opts) {
    Selection sel{opts.base_model, opts.base_train};
    for (const auto& [axis, values] : grid) {
        double lo_med = 1.0, hi_med = 0.0;
        for (double v : values) {
            const double med = results.median_accuracy(axis, v);
            lo_med = std::min(lo_med, med);
            hi_med = std::max(hi_med, med);
        }
        const double gap = hi_med - lo_med;
        const bool keep_best = gap > opts.small_threshold || !axis_affects_size(axis);
        apply_axis(sel.model_config, sel.train_config, axis,
                   pick_value(results, grid, opts, axis, !keep_best));
    }
    // size axes can interact through the flattened feature-map width; never
    // let the compact selection end up larger than the best one
    auto best = select_best(results, grid, opts);
    if (model::count_params(sel.model_config) > model::count_params(best.model_config))
        return best;
    return sel;
}

CvReport run_nested_cv(const std::vector<CvItem>& data, const SweepGrid& grid,
                       const CvOptions& opts) {
    auto plan = make_folds(data.size(), opts.k_outer, opts.k_inner, opts.seed);

    // leakage check: outer-test items must be invisible to every inner split
    for (int f = 0; f < plan.k_outer; ++f)
        for (std::size_t i = 0; i < data.size(); ++i) {
            const bool in_test = plan.outer_of_item[i] == f;
            const bool in_inner = plan.inner_of_item[f][i] >= 0;
            if (in_test == in_inner)
                throw InternalError("fold plan leakage: item " + std::to_string(i) +
                                    " in outer fold " + std::to_string(f));
        }

    CvReport report;
    for (int f = 0; f < plan.k_outer; ++f) {
        auto sweep = sweep_outer_fold(data, plan, f, grid, opts);
        auto best = select_best(sweep, grid, opts);
        auto small = select_small(sweep, grid, opts);

        std::vector<std::size_t> train_idx, test_idx;
        for (std::size_t i = 0; i < data.size(); ++i)
            (plan.outer_of_item[i] == f ? test_idx : train_idx).push_back(i);

        FoldReportRow row;
        row.fold = f;
        auto fit = [&](const Selection& sel, std::size_t& n_params, double& acc,
                       model::ModelParams& out_params) {
            train::TrainConfig tc = sel.train_config;
            tc.seed = mix_seed(opts.seed, f + 1, 0xFEED, 0, 0);
            auto cd = build_cell_data(data, train_idx, test_idx, tc.seq_len);
            auto res = train::train(cd.train_examples, sel.model_config, tc);
            n_params = model::count_params(sel.model_config);
            acc = train::accuracy(res.params, cd.val_examples);
            out_params = std::move(res.params);
        };
        model::ModelParams best_params, small_params;
        fit(best, row.best_params, row.best_acc, best_params);
        fit(small, row.small_params, row.small_acc, small_params);

        report.rows.push_back(row);
        report.sweeps.push_back(std::move(sweep));
        report.best_selections.push_back(best);
        report.small_selections.push_back(small);
        report.best_models.push_back(std::move(best_params));
        report.small_models.push_back(std::move(small_params));
    }

    auto agg = [&](auto get) {
        double sum = 0.0;
        for (const auto& r : report.rows) sum += get(r);
        const double mean = sum / report.rows.size();
        double var = 0.0;
        for (const auto& r : report.rows) var += (get(r) - mean) * (get(r) - mean);
        const double sd = report.rows.size() > 1 ? std::sqrt(var / (report.rows.size() - 1)) : 0.0;
        return std::pair<double, double>(mean, sd);
    };
    auto [mp, sp] = agg([](const FoldReportRow& r) { return static_cast<double>(r.best_params); });
    auto [ma, sa] = agg([](const FoldReportRow& r) { return r.best_acc; });
    auto [mps, sps] =
        agg([](const FoldReportRow& r) { return static_cast<double>(r.small_params); });
    auto [mas, sas] = agg([](const FoldReportRow& r) { return r.small_acc; });
    report.mean = {-1, static_cast<std::size_t>(std::llround(mp)), ma,
                   static_cast<std::size_t>(std::llround(mps)), mas};
    report.stddev = {-2, static_cast<std::size_t>(std::llround(sp)), sa,
                     static_cast<std::size_t>(std::llround(sps)), sas};
    return report;
}

void save_report_csv(const CvReport& report, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw FormatError("cannot open for writing: " + path);
    f << "fold,best_params,best_acc,small_params,small_acc\n";
    f.precision(9);
    for (const auto& r : report.rows)
        f << r.fold << ',' << r.best_params << ',' << r.best_acc << ',' << r.small_params << ','
          << r.small_acc << '\n';
    f << "mean," << report.mean.best_params << ',' << report.mean.best_acc << ','
      << report.mean.small_params << ',' << report.mean.small_acc << '\n';
    f << "std," << report.stddev.best_params << ',' << report.stddev.best_acc << ','
      << report.stddev.small_params << ',' << report.stddev.small_acc << '\n';
}

void save_boxplot_csv(const CvReport& report, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw FormatError("cannot open for writing: " + path);
    f << "axis,value,fold,accuracy\n";
    f.precision(9);
    for (std::size_t fold = 0; fold < report.sweeps.size(); ++fold)
        for (const auto& c : report.sweeps[fold].cells)
            if (!c.failed)
                f << axis_name(c.axis) << ',' << c.value << ',' << fold << ',' << c.accuracy
                  << '\n';
}

void save_sweep_json(const CvReport& report, const std::string& path) {
    nlohmann::json j;
    j["outer_folds"] = nlohmann::json::array();
    for (std::size_t fold = 0; fold < report.sweeps.size(); ++fold) {
        nlohmann::json jf;
        jf["fold"] = fold;
        jf["cells"] = nlohmann::json::array();
        for (const auto& c : report.sweeps[fold].cells) {
            jf["cells"].push_back({{"axis", axis_name(c.axis)},
                                   {"value", c.value},
                                   {"inner_fold", c.inner_fold},
                                   {"accuracy", c.accuracy},
                                   {"failed", c.failed}});
        }
        j["outer_folds"].push_back(jf);
    }
    std::ofstream f(path);
    if (!f) throw FormatError("cannot open for writing: " + path);
    f << j.dump(2) << '\n';
}

SweepGrid load_grid_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open grid file: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("grid file " + path + ": " + e.what());
    }
    SweepGrid grid;
    for (auto it = j.begin(); it != j.end(); ++it) {
        auto axis = axis_from_name(it.key());
        if (!axis) throw ParseError("grid file " + path + ": unknown axis '" + it.key() + "'");
        std::vector<double> values;
        for (const auto& v : it.value()) values.push_back(v.get<double>());
        if (values.empty())
            throw ParseError("grid file " + path + ": axis '" + it.key() + "' has no values");
        grid[*axis] = values;
    }
    return grid;
}

}  // namespace vadkit::cv
