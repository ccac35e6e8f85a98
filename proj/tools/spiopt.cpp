// Command-line front end for training, rate selection, fine-tuning and the
// evaluation studies. Errors go to stderr as a single line:
//
//   error kind=<config|dataset|input|runtime> [key=<name>] message="..."
//
// with exit status 2 for configuration errors, 3 for a missing dataset and 1
// for everything else.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <unistd.h>

#include "spiopt/config.hpp"
#include "spiopt/evaluation.hpp"
#include "spiopt/io_util.hpp"

using namespace spiopt;
namespace fs = std::filesystem;

namespace {

struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> test_subset;
    std::string dataset_dir;
    bool synthetic = false;
    std::string out;
    bool force = false;
    std::string ckpt;
    std::string model;
    std::optional<double> rate;
    std::string image;
    double noise = 0.0;
};

std::string hex(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Config file first, then flags. `epochs_are_finetune` routes --epochs to the
// fine-tuning budget for commands that never run stage one.
RunConfig resolve(const Options& o, bool epochs_are_finetune = false)
{
    RunConfig rc = o.config.empty() ? RunConfig{} : parse_run_config(read_text_file(o.config));
    if (o.seed) rc.train.seed = *o.seed;
    if (o.epochs) (epochs_are_finetune ? rc.train.fine_tune_epochs : rc.train.epochs) = *o.epochs;
    if (!o.dataset_dir.empty()) rc.data.dataset_dir = o.dataset_dir;
    if (o.synthetic) rc.data.synthetic = true;
    if (o.test_subset) rc.data.test_subset = *o.test_subset;
    try {
        rc.train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("train", e.what());
    }
    return rc;
}

nlohmann::ordered_json manifest_for(const std::string& command, const RunConfig& rc)
{
    const std::string text = run_config_text(rc);
    nlohmann::ordered_json m;
    m["kind"] = command;
    m["version"] = SPIOPT_VERSION;
    m["config_hash"] = hex(fnv1a(text));
    m["seed"] = rc.train.seed;
    m["config"] = text;
    return m;
}

// Builds an output directory next to its final location and renames it into
// place, so readers never see a half-written result and existing results are
// only replaced with --force.
class StagedDir {
public:
    StagedDir(const std::string& target, bool force) : target_(target)
    {
        if (target.empty()) throw InputError("--out is required");
        if (fs::exists(target_) && !force) throw InputError(target + " exists; pass --force to replace it");
        staging_ = target_;
        staging_ += ".partial-" + std::to_string(::getpid());
        fs::remove_all(staging_);
        fs::create_directories(staging_);
    }
    ~StagedDir()
    {
        std::error_code ec;
        if (!committed_) fs::remove_all(staging_, ec);
    }
    const fs::path& path() const { return staging_; }
    void commit(const nlohmann::ordered_json& manifest)
    {
        if (!fs::exists(staging_ / "manifest.json")) write_file_atomic(staging_ / "manifest.json", manifest.dump(2) + "\n");
        if (fs::exists(target_)) fs::remove_all(target_);
        fs::rename(staging_, target_);
        committed_ = true;
    }

private:
    fs::path target_, staging_;
    bool committed_ = false;
};

Checkpoint load_ckpt(const Options& o)
{
    if (o.ckpt.empty()) throw InputError("--ckpt is required");
    return load_checkpoint(o.ckpt);
}

double require_rate(const Options& o)
{
    if (!o.rate) throw InputError("--rate is required");
    return *o.rate;
}

// Commands that start from a checkpoint train with its settings; the config
// file and flags still choose the data, and --epochs sets the fine-tune budget.
RunConfig resolve_for(const Options& o, const Checkpoint& ckpt)
{
    RunConfig rc = resolve(o, true);
    const std::size_t tune = rc.train.fine_tune_epochs;
    const bool tune_set = o.epochs.has_value();
    rc.train = ckpt.config;
    if (tune_set) rc.train.fine_tune_epochs = tune;
    return rc;
}

void print_loss(const std::string& what, const std::vector<double>& loss)
{
    if (!loss.empty()) std::cout << what << " final_loss=" << format_double(loss.back()) << '\n';
}

int cmd_train(const Options& o)
{
    const RunConfig rc = resolve(o);
    const auto data = load_data(rc.data, rc.train.seed);
    StagedDir out(o.out, o.force);
    const Checkpoint ckpt = train_joint(rc.train, data.train, [](std::size_t epoch, double loss) {
        std::cout << "epoch " << epoch << " loss=" << format_double(loss) << std::endl;
    });
    save_checkpoint(ckpt, out.path());
    write_file_atomic(out.path() / "run_config.txt", run_config_text(rc));
    out.commit({});
    std::cout << "patterns=" << ckpt.patterns() << " checkpoint=" << o.out << '\n';
    return 0;
}

int cmd_select(const Options& o)
{
    const Checkpoint ckpt = load_ckpt(o);
    const RateSelection sel = select_for_rate(ckpt, require_rate(o));
    std::cout << "K=" << sel.count() << " rate=" << format_double(sel.rate) << '\n';
    std::ostringstream csv;
    csv << "order,pattern_index,score\n";
    for (std::size_t i = 0; i < sel.count(); ++i)
        csv << i << ',' << sel.indices[i] << ',' << format_double(sel.scale[i]) << '\n';
    if (o.out.empty()) {
        std::cout << csv.str();
    } else {
        if (fs::exists(o.out) && !o.force) throw InputError(o.out + " exists; pass --force to replace it");
        write_file_atomic(o.out, csv.str());
    }
    return 0;
}

int cmd_finetune(const Options& o)
{
    const Checkpoint ckpt = load_ckpt(o);
    const RunConfig rc = resolve_for(o, ckpt);
    const auto data = load_data(rc.data, rc.train.seed);
    const RateSelection sel = select_for_rate(ckpt, require_rate(o));
    StagedDir out(o.out, o.force);
    const RateModel model = finetune_decoder(ckpt, sel, data.train, rc.train.fine_tune_epochs);
    save_rate_model(model, sel, ckpt, out.path());
    out.commit({});
    std::cout << "K=" << sel.count() << " epochs=" << rc.train.fine_tune_epochs << '\n';
    print_loss("finetune", model.epoch_loss);
    return 0;
}

// A saved fine-tuned model, or one tuned on the spot from --rate.
RateModel model_for(const Options& o, const Checkpoint& ckpt, const Dataset& train, RateSelection& sel)
{
    if (!o.model.empty()) return load_rate_model(ckpt, o.model, &sel);
    sel = select_for_rate(ckpt, require_rate(o));
    return finetune_decoder(ckpt, sel, train, o.epochs ? *o.epochs : ckpt.config.fine_tune_epochs);
}

std::string outputs_csv(const Evaluation& e)
{
    std::ostringstream out;
    for (Eigen::Index r = 0; r < e.outputs.rows(); ++r) {
        for (Eigen::Index c = 0; c < e.outputs.cols(); ++c) out << (c ? "," : "") << format_double(e.outputs(r, c));
        out << '\n';
    }
    return out.str();
}

int cmd_eval(const Options& o)
{
    const Checkpoint ckpt = load_ckpt(o);
    const RunConfig rc = resolve_for(o, ckpt);
    const auto data = load_data(rc.data, rc.train.seed);
    RateSelection sel;
    const RateModel model = model_for(o, ckpt, data.train, sel);
    const Evaluation e = evaluate(model, data.test);
    const std::string metric = ckpt.config.task == Task::Reconstruct ? "psnr_db" : "accuracy";
    std::cout << "task=" << to_string(ckpt.config.task) << " K=" << sel.count() << " rate=" << format_double(sel.rate)
              << ' ' << metric << '=' << format_double(e.metric) << " n_test=" << data.test.size() << '\n';
    if (o.out.empty()) return 0;

    StagedDir out(o.out, o.force);
    EvalReport r{ckpt.config.task, model.label, ckpt.config.stage_one_rate, {sel.rate}, {sel.count()},
                 {e.metric},       {e.classes}, data.test.size(),           ckpt.config.seed, 0.0};
    write_file_atomic(out.path() / "eval.csv", sweep_csv({r}));
    write_file_atomic(out.path() / "outputs.csv", outputs_csv(e));
    if (ckpt.config.task == Task::Classify) write_file_atomic(out.path() / "per_class.csv", per_class_csv({r}));
    auto m = manifest_for("eval", rc);
    m["checkpoint_hash"] = checkpoint_hash(ckpt);
    m["identical_images"] = e.identical;
    out.commit(m);
    return 0;
}

void flag_rate_monotonicity(const std::vector<EvalReport>& reports)
{
    for (const auto& r : reports)
        if (r.metric.size() > 1 && r.metric.back() < r.metric.front())
            std::cerr << "warning: " << r.strategy << " scores lower at rate " << format_double(r.rates.back())
                      << " than at " << format_double(r.rates.front()) << '\n';
}

void write_reports(const fs::path& dir, const std::vector<EvalReport>& reports, const std::string& name)
{
    write_file_atomic(dir / (name + ".csv"), sweep_csv(reports));
    if (!reports.empty() && reports.front().task == Task::Classify)
        write_file_atomic(dir / "per_class.csv", per_class_csv(reports));
    write_plot_data(reports, dir / "plots");
    for (const auto& r : reports) {
        std::cout << r.strategy << " lambda=" << format_double(r.lambda);
        for (std::size_t i = 0; i < r.rates.size(); ++i)
            std::cout << ' ' << format_double(r.rates[i]) << ':' << format_double(r.metric[i]);
        std::cout << '\n';
    }
}

int cmd_sweep(const Options& o)
{
    RunConfig rc = resolve(o);
    const auto data = load_data(rc.data, rc.train.seed);
    StagedDir out(o.out, o.force);
    std::optional<Checkpoint> ckpt;
    if (!o.ckpt.empty()) {
        ckpt = load_checkpoint(o.ckpt);
        rc.train = ckpt->config;
    } else {
        ckpt = train_joint(rc.train, data.train);
        save_checkpoint(*ckpt, out.path() / "checkpoint");
    }
    const auto reports = sweep_rates(*ckpt, rc.strategies, rc.rates, data.train, data.test);
    write_reports(out.path(), reports, "sweep");
    flag_rate_monotonicity(reports);
    auto m = manifest_for("sweep", rc);
    m["checkpoint_hash"] = checkpoint_hash(*ckpt);
    out.commit(m);
    return 0;
}

int cmd_lambdastudy(const Options& o)
{
    const RunConfig rc = resolve(o);
    const auto data = load_data(rc.data, rc.train.seed);
    StagedDir out(o.out, o.force);
    const auto reports = first_stage_rate_study(rc.train, rc.lambdas, rc.rates, data.train, data.test);
    write_reports(out.path(), reports, "lambda_study");
    out.commit(manifest_for("lambdastudy", rc));
    return 0;
}

int cmd_bandstudy(const Options& o)
{
    const RunConfig rc = resolve(o);
    const auto data = load_data(rc.data, rc.train.seed);
    StagedDir out(o.out, o.force);
    const BandStudy study = weight_band_study(rc.train, rc.band_patterns, data.train, data.test, rc.band_width);
    write_file_atomic(out.path() / "bands.csv", band_csv(study));
    for (const auto& row : study.rows) std::cout << "band " << row.band << " accuracy=" << format_double(row.accuracy) << '\n';
    std::cout << "top_minus_bottom=" << format_double(study.top_minus_bottom) << '\n';
    out.commit(manifest_for("bandstudy", rc));
    return 0;
}

// --image is a 28x28 PGM, or test:<n> for image n of the configured test split.
int cmd_simulate(const Options& o)
{
    const Checkpoint ckpt = load_ckpt(o);
    const RunConfig rc = resolve_for(o, ckpt);
    if (o.image.empty()) throw InputError("--image is required");
    if (o.noise < 0.0) throw InputError("--noise must be non-negative");

    const bool needs_data = o.image.starts_with("test:") || o.model.empty() || o.noise > 0.0;
    std::optional<DataSplits> data;
    if (needs_data) data = load_data(rc.data, rc.train.seed);
    // A test image is acquired with the rest of its split so that it goes
    // through exactly the batches evaluation uses.
    Dataset batch;
    std::size_t row = 0;
    if (o.image.starts_with("test:")) {
        row = std::stoul(o.image.substr(5));
        if (row >= data->test.size()) throw InputError("test image " + std::to_string(row) + " out of range");
        batch = data->test;
    } else {
        Image im;
        const auto px = read_pgm(o.image, kImageSide, kImageSide);
        std::copy(px.begin(), px.end(), im.pixels.begin());
        batch.images.push_back(im);
    }

    RateSelection sel;
    const RateModel model = model_for(o, ckpt, needs_data ? data->train : Dataset{}, sel);
    double scale = 1.0;
    if (o.noise > 0.0) scale = measurement_scale(measure_batch(model.bank, pixel_matrix(data->train)));
    const std::uint64_t seed = o.seed ? *o.seed : ckpt.config.seed;
    const Matrix all = simulate_acquisition_batch(model.bank, pixel_matrix(batch), NoiseModel::gaussian(o.noise), seed,
                                                  scale);
    const Matrix predicted = model.predict(all);
    const Matrix y = all.row(row), out = predicted.row(row);

    std::cout << "K=" << sel.count() << " noise=" << format_double(o.noise) << '\n';
    if (ckpt.config.task == Task::Classify) {
        Eigen::Index best = 0;
        out.row(0).maxCoeff(&best);
        std::cout << "prediction=" << best << '\n';
    }
    std::cout << "outputs=";
    for (Eigen::Index c = 0; c < out.cols(); ++c) std::cout << (c ? "," : "") << format_double(out(0, c));
    std::cout << '\n';

    if (!o.out.empty()) {
        StagedDir dir(o.out, o.force);
        std::ostringstream csv;
        csv << "order,pattern_index,value\n";
        for (std::size_t k = 0; k < sel.count(); ++k)
            csv << k << ',' << sel.indices[k] << ',' << format_double(y(0, k)) << '\n';
        write_file_atomic(dir.path() / "measurements.csv", csv.str());
        if (ckpt.config.task == Task::Reconstruct)
            write_pgm(dir.path() / "reconstruction.pgm", {out.data(), kImagePixels}, kImageSide, kImageSide);
        auto m = manifest_for("simulate", rc);
        m["checkpoint_hash"] = checkpoint_hash(ckpt);
        m["noise_sigma"] = o.noise;
        m["noise_scale"] = scale;
        dir.commit(m);
    }
    return 0;
}

std::string quoted(const std::string& s)
{
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Weighted pattern optimization for rate-adaptive single-pixel imaging"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* c, bool data) {
        c->add_option("--config", o.config, "key=value run configuration")->check(CLI::ExistingFile);
        c->add_option("--seed", o.seed, "Override the configured seed");
        c->add_option("--epochs", o.epochs, "Stage-one epochs (fine-tune epochs for finetune/eval/simulate)");
        if (data) {
            c->add_option("--dataset-dir", o.dataset_dir, "Directory with the MNIST IDX files");
            c->add_flag("--synthetic", o.synthetic, "Use generated scenes instead of MNIST");
            c->add_option("--test-subset", o.test_subset, "Test images to use, 0 for the whole split");
        }
        c->add_flag("--force", o.force, "Replace existing output");
    };

    std::map<std::string, std::function<int(const Options&)>> handlers;
    auto sub = [&](const std::string& name, const std::string& help, std::function<int(const Options&)> fn,
                   bool data = true) {
        CLI::App* c = app.add_subcommand(name, help);
        common(c, data);
        handlers[name] = std::move(fn);
        return c;
    };

    auto* train = sub("train", "Stage one: learn patterns, excitation head and decoder", cmd_train);
    train->add_option("--out", o.out, "Checkpoint directory")->required();

    auto* select = sub("select", "Print the top-ranked patterns for a sampling rate", cmd_select, false);
    select->add_option("--ckpt", o.ckpt)->required();
    select->add_option("--rate", o.rate)->required();
    select->add_option("--out", o.out, "Write the selection as CSV");

    auto* finetune = sub("finetune", "Stage two: fit the decoder to a selected binary sub-bank", cmd_finetune);
    finetune->add_option("--ckpt", o.ckpt)->required();
    finetune->add_option("--rate", o.rate)->required();
    finetune->add_option("--out", o.out, "Model directory")->required();

    auto* eval = sub("eval", "Evaluate a fine-tuned model on the test split", cmd_eval);
    eval->add_option("--ckpt", o.ckpt)->required();
    eval->add_option("--model", o.model, "Directory written by finetune");
    eval->add_option("--rate", o.rate, "Fine-tune at this rate instead of loading --model");
    eval->add_option("--out", o.out, "Directory for eval.csv and raw outputs");

    auto* sweep = sub("sweep", "Learned and baseline curves over the rate grid", cmd_sweep);
    sweep->add_option("--ckpt", o.ckpt, "Reuse a stage-one checkpoint instead of training one");
    sweep->add_option("--out", o.out)->required();

    sub("bandstudy", "Accuracy of consecutive bands of ranked patterns", cmd_bandstudy)
        ->add_option("--out", o.out)
        ->required();
    sub("lambdastudy", "Effect of the stage-one sampling rate", cmd_lambdastudy)->add_option("--out", o.out)->required();

    auto* simulate = sub("simulate", "Simulated detector acquisition of one image", cmd_simulate);
    simulate->add_option("--ckpt", o.ckpt)->required();
    simulate->add_option("--model", o.model);
    simulate->add_option("--rate", o.rate);
    simulate->add_option("--image", o.image, "28x28 PGM file or test:<n>")->required();
    simulate->add_option("--noise", o.noise, "Noise sigma in units of the measurement scale");
    simulate->add_option("--out", o.out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        for (auto* c : app.get_subcommands()) return handlers.at(c->get_name())(o);
    } catch (const ConfigError& e) {
        std::cerr << "error kind=config key=" << e.key() << " message=" << quoted(e.what()) << '\n';
        return 2;
    } catch (const DatasetError& e) {
        std::cerr << "error kind=dataset message=" << quoted(e.what()) << '\n';
        return 3;
    } catch (const InputError& e) {
        std::cerr << "error kind=input message=" << quoted(e.what()) << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error kind=runtime message=" << quoted(e.what()) << '\n';
        return 1;
    }
    return 1;
}
