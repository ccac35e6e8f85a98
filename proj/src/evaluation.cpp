#include "spiopt/evaluation.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "spiopt/io_util.hpp"

namespace spiopt {

PsnrResult psnr(std::span<const double> reference, std::span<const double> reconstruction)
{
    if (reference.size() != reconstruction.size() || reference.empty())
        throw ShapeError("psnr: image sizes " + std::to_string(reference.size()) + " and " +
                         std::to_string(reconstruction.size()) + " differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        const double d = reference[i] - reconstruction[i];
        acc += d * d;
    }
    const double err = acc / static_cast<double>(reference.size());
    if (err == 0.0) return {kPsnrCap, true};
    return {std::min(kPsnrCap, -10.0 * std::log10(err)), false};
}

double AccuracyReport::class_accuracy(int c) const
{
    if (class_total.at(c) == 0) return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(class_correct[c]) / static_cast<double>(class_total[c]);
}

AccuracyReport accuracy(std::span<const int> predictions, std::span<const int> labels)
{
    if (predictions.size() != labels.size() || labels.empty())
        throw std::invalid_argument("accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                                    std::to_string(labels.size()) + " labels");
    AccuracyReport r;
    r.total = labels.size();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int l = labels[i];
        if (l < 0 || l >= kNumClasses) throw std::out_of_range("accuracy: label out of range");
        ++r.class_total[l];
        if (predictions[i] == l) {
            ++r.correct;
            ++r.class_correct[l];
        }
    }
    r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
    return r;
}

std::vector<int> argmax_rows(const Matrix& p)
{
    std::vector<int> out(p.rows());
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        Eigen::Index best = 0;
        p.row(r).maxCoeff(&best);
        out[r] = static_cast<int>(best);
    }
    return out;
}

Evaluation evaluate_outputs(Task task, const Matrix& outputs, const Dataset& test)
{
    if (static_cast<std::size_t>(outputs.rows()) != test.size() || test.empty())
        throw std::invalid_argument("evaluate: output rows do not match the test set");
    Evaluation e;
    e.task = task;
    e.outputs = outputs;
    if (task == Task::Classify) {
        e.classes = accuracy(argmax_rows(outputs), labels_of(test));
        e.metric = e.classes.accuracy;
        return e;
    }
    double total = 0.0;
    for (std::size_t n = 0; n < test.size(); ++n) {
        const auto p = psnr(test.images[n].pixels, {outputs.data() + n * outputs.cols(), kImagePixels});
        total += p.db;
        e.identical += p.identical;
    }
    e.metric = total / static_cast<double>(test.size());
    return e;
}

Evaluation evaluate(const RateModel& model, const Dataset& test)
{
    return evaluate_outputs(model.decoder.task, model.predict(measure_batch(model.bank, pixel_matrix(test))), test);
}

Evaluation evaluate_acquired(const RateModel& model, const Dataset& test, const NoiseModel& noise, std::uint64_t seed,
                             double scale)
{
    const Matrix y = simulate_acquisition_batch(model.bank, pixel_matrix(test), noise, seed, scale);
    return evaluate_outputs(model.decoder.task, model.predict(y), test);
}

PatternBank baseline_bank(const std::string& strategy, std::size_t count, std::uint64_t seed)
{
    if (strategy == "random") return random_bank(seed, count);
    if (strategy == "hadamard") return hadamard_bank(count);
    throw std::invalid_argument("unknown baseline strategy '" + strategy + "'");
}

void run_cells(std::size_t n, const std::function<void(std::size_t)>& cell)
{
    std::size_t threads = 1;
    if (const char* env = std::getenv("SPIOPT_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) threads = static_cast<std::size_t>(v);
    }
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) cell(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < n; i += threads) {
                try {
                    cell(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

namespace {

struct Cell {
    std::size_t report;
    double rate;
    std::size_t count;
    Evaluation result;
};

void fill_report(EvalReport& r, const Cell& c)
{
    r.rates.push_back(c.rate);
    r.counts.push_back(c.count);
    r.metric.push_back(c.result.metric);
    r.classes.push_back(c.result.classes);
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::vector<EvalReport> sweep_rates(const Checkpoint& ckpt, const std::vector<std::string>& strategies,
                                    const std::vector<double>& rates, const Dataset& train, const Dataset& test)
{
    for (std::size_t i = 1; i < rates.size(); ++i)
        if (!(rates[i] > rates[i - 1])) throw std::invalid_argument("sweep: rate grid must be strictly increasing");
    const auto t0 = std::chrono::steady_clock::now();
    const auto& cfg = ckpt.config;
    std::vector<Cell> cells;
    for (std::size_t s = 0; s < strategies.size(); ++s)
        for (double r : rates) {
            // Rates are K/784 for every strategy so the curves share an axis.
            const std::size_t k = count_for_rate(r, kImagePixels);
            if (strategies[s] == "learned" && k > ckpt.patterns())
                throw std::invalid_argument("sweep: rate " + format_double(r) + " needs " + std::to_string(k) +
                                            " patterns, checkpoint holds " + std::to_string(ckpt.patterns()));
            cells.push_back({s, r, k, {}});
        }
    run_cells(cells.size(), [&](std::size_t i) {
        Cell& c = cells[i];
        const auto& strategy = strategies[c.report];
        if (strategy == "learned") {
            c.result = evaluate(finetune_decoder(ckpt, select_top(ckpt, c.count), train, cfg.fine_tune_epochs), test);
        } else {
            const auto bank = baseline_bank(strategy, c.count, cfg.seed);
            c.result = evaluate(train_baseline(cfg, bank, train, cfg.epochs + cfg.fine_tune_epochs, strategy), test);
        }
    });

    std::vector<EvalReport> reports(strategies.size());
    for (std::size_t s = 0; s < strategies.size(); ++s) {
        reports[s].task = cfg.task;
        reports[s].strategy = strategies[s];
        reports[s].lambda = cfg.stage_one_rate;
        reports[s].n_test = test.size();
        reports[s].seed = cfg.seed;
    }
    for (const auto& c : cells) fill_report(reports[c.report], c);
    const double elapsed = seconds_since(t0);
    for (auto& r : reports) r.runtime_seconds = elapsed;
    return reports;
}

std::vector<EvalReport> first_stage_rate_study(const TrainConfig& base, const std::vector<double>& lambdas,
                                               const std::vector<double>& rates, const Dataset& train,
                                               const Dataset& test)
{
    std::vector<EvalReport> reports(lambdas.size());
    run_cells(lambdas.size(), [&](std::size_t li) {
        const auto t0 = std::chrono::steady_clock::now();
        TrainConfig cfg = base;
        cfg.stage_one_rate = lambdas[li];
        const Checkpoint ckpt = train_joint(cfg, train);
        EvalReport& r = reports[li];
        r.task = cfg.task;
        r.strategy = "learned";
        r.lambda = lambdas[li];
        r.n_test = test.size();
        r.seed = cfg.seed;
        for (double rate : rates) {
            const std::size_t k = count_for_rate(rate, kImagePixels);
            if (rate > lambdas[li] + 1e-12 || k > ckpt.patterns()) continue;
            auto model = finetune_decoder(ckpt, select_top(ckpt, k), train, cfg.fine_tune_epochs);
            fill_report(r, {li, rate, k, evaluate(model, test)});
        }
        r.runtime_seconds = seconds_since(t0);
    });
    return reports;
}

BandStudy weight_band_study(const Checkpoint& ckpt, const Dataset& train, const Dataset& test, std::size_t width)
{
    if (ckpt.config.task != Task::Classify) throw std::invalid_argument("band study needs a classification checkpoint");
    const std::size_t bands = ckpt.patterns() / width;
    if (bands == 0) throw std::invalid_argument("band study: checkpoint smaller than one band");
    BandStudy study;
    study.rows.resize(bands + 1);
    run_cells(bands + 1, [&](std::size_t b) {
        const RateSelection sel = b < bands ? weight_band_selection(ckpt, b * width, width)
                                            : random_selection(ckpt, ckpt.config.seed, width);
        const auto model = finetune_decoder(ckpt, sel, train, ckpt.config.fine_tune_epochs);
        study.rows[b] = {b < bands ? std::to_string(b * width + 1) : "random", sel.rate, evaluate(model, test).metric};
    });
    study.top_minus_bottom = study.rows.front().accuracy - study.rows[bands - 1].accuracy;
    return study;
}

BandStudy weight_band_study(const TrainConfig& config, std::size_t patterns, const Dataset& train, const Dataset& test,
                            std::size_t width)
{
    TrainConfig cfg = config;
    cfg.task = Task::Classify;
    cfg.stage_one_rate = static_cast<double>(patterns) / static_cast<double>(kImagePixels);
    return weight_band_study(train_joint(cfg, train), train, test, width);
}

std::string sweep_csv(const std::vector<EvalReport>& reports)
{
    std::ostringstream out;
    out << "task,strategy,lambda,rate,K,metric,n_test,seed\n";
    for (const auto& r : reports)
        for (std::size_t i = 0; i < r.rates.size(); ++i)
            out << to_string(r.task) << ',' << r.strategy << ',' << format_double(r.lambda) << ','
                << format_double(r.rates[i]) << ',' << r.counts[i] << ',' << format_double(r.metric[i]) << ','
                << r.n_test << ',' << r.seed << '\n';
    return out.str();
}

std::string band_csv(const BandStudy& study)
{
    std::ostringstream out;
    out << "band_start,rate,accuracy\n";
    for (const auto& row : study.rows)
        out << row.band << ',' << format_double(row.rate) << ',' << format_double(row.accuracy) << '\n';
    return out.str();
}

std::string per_class_csv(const std::vector<EvalReport>& reports)
{
    std::ostringstream out;
    out << "strategy,lambda,rate,class,accuracy,count\n";
    for (const auto& r : reports) {
        if (r.task != Task::Classify) continue;
        for (std::size_t i = 0; i < r.rates.size(); ++i)
            for (int c = 0; c < kNumClasses; ++c) {
                if (r.classes[i].class_total[c] == 0) continue;
                out << r.strategy << ',' << format_double(r.lambda) << ',' << format_double(r.rates[i]) << ',' << c
                    << ',' << format_double(r.classes[i].class_accuracy(c)) << ',' << r.classes[i].class_total[c]
                    << '\n';
            }
    }
    return out.str();
}

void write_plot_data(const std::vector<EvalReport>& reports, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    for (const auto& r : reports) {
        std::ostringstream out;
        out << "# rate " << (r.task == Task::Reconstruct ? "psnr_db" : "accuracy") << '\n';
        for (std::size_t i = 0; i < r.rates.size(); ++i)
            out << format_double(r.rates[i]) << ' ' << format_double(r.metric[i]) << '\n';
        write_file_atomic(dir / (r.strategy + "_lambda" + format_double(r.lambda) + ".dat"), out.str());
    }
}

}  // namespace spiopt
