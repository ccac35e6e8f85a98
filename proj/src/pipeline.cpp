#include "spiopt/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "spiopt/config.hpp"
#include "spiopt/io_util.hpp"

namespace spiopt {

namespace {

constexpr double kRateTolerance = 1e-9;

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows)
{
    Matrix out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = m.row(rows[i]);
    return out;
}

std::vector<int> gather(const std::vector<int>& v, std::span<const std::size_t> rows)
{
    std::vector<int> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(v[r]);
    return out;
}

Tensor to_tensor(const Matrix& m)
{
    return Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                  std::vector<double>(m.data(), m.data() + m.size()));
}

Tensor to_tensor(const std::vector<double>& v)
{
    return Tensor({v.size()}, v);
}

Matrix scaled_inputs(const Matrix& measurements, const ChannelStats& stats, std::span<const double> scale)
{
    Matrix z = standardize(measurements, stats);
    for (Eigen::Index n = 0; n < z.rows(); ++n)
        for (Eigen::Index c = 0; c < z.cols(); ++c) z(n, c) *= scale[c];
    return z;
}

std::vector<int> task_labels(const TrainConfig& config, const Dataset& d)
{
    return config.task == Task::Classify ? labels_of(d) : std::vector<int>(d.size(), 0);
}

// Decoder fit on frozen measurements. Noise, when configured, is redrawn
// every epoch.
std::vector<double> fit_decoder(const TrainConfig& config, const Decoder& decoder, ParameterSet& params,
                                const Matrix& measurements, const ChannelStats& stats, std::span<const double> scale,
                                const Dataset& train, std::size_t epochs, const Rng& rng)
{
    const Matrix pixels = pixel_matrix(train);
    const auto labels = task_labels(config, train);
    const std::size_t n = train.size();
    const double noise_scale = config.noise_sigma > 0.0 ? measurement_scale(measurements) : 0.0;
    Matrix inputs = scaled_inputs(measurements, stats, scale);

    std::vector<double> log;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        if (config.noise_sigma > 0.0) {
            Rng noise = rng.split("noise", epoch);
            Matrix noisy = measurements;
            for (Eigen::Index i = 0; i < noisy.size(); ++i) noisy.data()[i] += noise.normal(0.0, config.noise_sigma * noise_scale);
            inputs = scaled_inputs(noisy, stats, scale);
        }
        const auto order = rng.split("shuffle", epoch).permutation(n);
        double total = 0.0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::span<const std::size_t> rows(order.data() + start, std::min(config.batch_size, n - start));
            Tape tape;
            Var out = decoder.forward(tape, params, tape.constant(to_tensor(gather_rows(inputs, rows))));
            Var loss = decoder.loss(out, gather_rows(pixels, rows), gather(labels, rows));
            total += loss.value().values[0] * static_cast<double>(rows.size());
            tape.backward(loss);
            adam_step(params, config.learning_rate);
        }
        log.push_back(total / static_cast<double>(n));
    }
    return log;
}

}  // namespace

std::size_t count_for_rate(double rate, std::size_t n)
{
    if (!(rate > 0.0 && rate <= 1.0)) throw std::invalid_argument("rate must be in (0,1], got " + format_double(rate));
    const auto k = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n) + kRateTolerance));
    return std::max<std::size_t>(1, std::min(k, n));
}

std::size_t TrainConfig::patterns() const
{
    return count_for_rate(stage_one_rate, kImagePixels);
}

Decoder TrainConfig::decoder(std::size_t inputs) const
{
    Decoder d;
    d.task = task;
    d.inputs = inputs;
    d.channels = channels;
    d.hidden = hidden;
    return d;
}

void TrainConfig::validate() const
{
    if (!(stage_one_rate > 0.0 && stage_one_rate <= 1.0)) throw std::invalid_argument("lambda must be in (0,1]");
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    if (!(learning_rate > 0.0) || !(bank_learning_rate > 0.0)) throw std::invalid_argument("learning rates must be > 0");
    if (reduction == 0) throw std::invalid_argument("reduction must be positive");
    if (channels < 2 || channels % 2) throw std::invalid_argument("channels must be even and >= 2");
    if (hidden == 0) throw std::invalid_argument("hidden must be positive");
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be >= 0");
}

Checkpoint train_joint(const TrainConfig& config, const Dataset& train, const EpochCallback& on_epoch)
{
    config.validate();
    if (train.empty()) throw std::invalid_argument("train_joint: empty dataset");
    const std::size_t m = config.patterns();
    const Rng root(config.seed);

    ParameterSet encoder;
    {
        Rng r = root.split("bank");
        Tensor bank({m, kImagePixels});
        for (auto& v : bank.values) v = r.uniform(0.0, 1.0);
        encoder.add("bank", std::move(bank));
    }
    ExcitationHead head{m, config.reduction};
    ParameterSet head_params;
    {
        Rng r = root.split("head");
        head.init(head_params, r);
    }
    const Decoder decoder = config.decoder(m);
    ParameterSet decoder_params;
    {
        Rng r = root.split("decoder");
        decoder.init(decoder_params, r);
    }

    const Matrix pixels = pixel_matrix(train);
    const auto labels = task_labels(config, train);
    const std::size_t n = train.size();
    auto bank_matrix = [&] {
        const auto& v = encoder.value("bank").values;
        return Matrix(Eigen::Map<const Matrix>(v.data(), static_cast<Eigen::Index>(m), kImagePixels));
    };

    std::vector<double> epoch_loss;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        // Standardization follows the bank as it moves; refreshed once per epoch.
        const ChannelStats stats = channel_stats(pixels * bank_matrix().transpose());
        const auto scale = stats.scale();
        const auto shift = stats.shift();
        const auto order = root.split("shuffle", epoch).permutation(n);
        double total = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < n; start += config.batch_size, ++batch_index) {
            const std::span<const std::size_t> rows(order.data() + start, std::min(config.batch_size, n - start));
            try {
                Tape tape;
                Var x = tape.constant(to_tensor(gather_rows(pixels, rows)));
                Var y = scale_shift(matmul_nt(x, tape.parameter(encoder, "bank")), scale, shift);
                Var w = excite(tape, head_params, head, y);
                Var out = decoder.forward(tape, decoder_params, apply_weights(y, w));
                Var loss = decoder.loss(out, gather_rows(pixels, rows), gather(labels, rows));
                total += loss.value().values[0] * static_cast<double>(rows.size());
                tape.backward(loss);
                adam_step(encoder, config.bank_learning_rate);
                adam_step(head_params, config.learning_rate);
                adam_step(decoder_params, config.learning_rate);
            } catch (const NumericError& e) {
                throw NumericError("train_joint: epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index) + ": " + e.what());
            }
            for (auto& v : encoder.value("bank").values) v = std::clamp(v, 0.0, 1.0);
        }
        epoch_loss.push_back(total / static_cast<double>(n));
        if (on_epoch) on_epoch(epoch, epoch_loss.back());
    }

    PatternBank gray(bank_matrix(), PatternDomain::Gray, PatternProvenance::Learned);
    ChannelStats gray_stats = channel_stats(measure_batch(gray, pixels));
    const auto scores = extract_static_scores(head_params, head, gray, gray_stats, train);
    PatternBank binary = binarize_bank(gray);
    ChannelStats binary_stats = channel_stats(measure_batch(binary, pixels));
    return Checkpoint{config,
                      std::move(gray),
                      std::move(binary),
                      head,
                      std::move(head_params),
                      std::move(decoder_params),
                      std::move(gray_stats),
                      std::move(binary_stats),
                      rank(scores.values),
                      std::move(epoch_loss)};
}

std::vector<double> floyd_steinberg(std::span<const double> values, std::size_t height, std::size_t width)
{
    if (values.size() != height * width) throw std::invalid_argument("floyd_steinberg: size mismatch");
    std::vector<double> buf(values.begin(), values.end());
    std::vector<double> out(values.size());
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
            const std::size_t i = y * width + x;
            const double q = buf[i] >= 0.5 ? 1.0 : 0.0;
            const double err = buf[i] - q;
            out[i] = q;
            if (x + 1 < width) buf[i + 1] += err * 7.0 / 16.0;
            if (y + 1 < height) {
                if (x > 0) buf[i + width - 1] += err * 3.0 / 16.0;
                buf[i + width] += err * 5.0 / 16.0;
                if (x + 1 < width) buf[i + width + 1] += err * 1.0 / 16.0;
            }
        }
    return out;
}

PatternBank binarize_bank(const PatternBank& gray)
{
    for (Eigen::Index i = 0; i < gray.patterns().size(); ++i) {
        const double v = gray.patterns().data()[i];
        if (!(v >= 0.0 && v <= 1.0)) throw PatternError("binarize_bank: value " + format_double(v) + " outside [0,1]");
    }
    Matrix out(gray.count(), gray.resolution());
    for (std::size_t k = 0; k < gray.count(); ++k) {
        const auto bits = floyd_steinberg(gray.row(k), gray.height(), gray.width());
        std::copy(bits.begin(), bits.end(), out.data() + k * gray.resolution());
    }
    const auto provenance =
        gray.provenance() == PatternProvenance::Learned ? PatternProvenance::LearnedBinarized : gray.provenance();
    return PatternBank(std::move(out), PatternDomain::Binary, provenance, gray.height(), gray.width());
}

namespace {

RateSelection selection_of(const Checkpoint& ckpt, std::vector<std::size_t> indices)
{
    RateSelection s;
    s.rate = static_cast<double>(indices.size()) / static_cast<double>(kImagePixels);
    for (auto k : indices) s.scale.push_back(ckpt.ranking.scores.at(k));
    s.indices = std::move(indices);
    return s;
}

}  // namespace

RateSelection select_for_rate(const Checkpoint& ckpt, double rate)
{
    return select_top(ckpt, count_for_rate(rate, ckpt.patterns()));
}

RateSelection select_top(const Checkpoint& ckpt, std::size_t count)
{
    if (count == 0 || count > ckpt.patterns())
        throw std::invalid_argument("select: " + std::to_string(count) + " patterns requested, checkpoint holds " +
                                    std::to_string(ckpt.patterns()));
    const auto& p = ckpt.ranking.permutation;
    return selection_of(ckpt, {p.begin(), p.begin() + static_cast<std::ptrdiff_t>(count)});
}

RateSelection weight_band_selection(const Checkpoint& ckpt, std::size_t start, std::size_t width)
{
    if (width == 0 || start + width > ckpt.patterns())
        throw std::invalid_argument("band [" + std::to_string(start) + ", " + std::to_string(start + width) +
                                    ") exceeds " + std::to_string(ckpt.patterns()) + " ranked patterns");
    const auto& p = ckpt.ranking.permutation;
    return selection_of(ckpt, {p.begin() + static_cast<std::ptrdiff_t>(start),
                                p.begin() + static_cast<std::ptrdiff_t>(start + width)});
}

RateSelection random_selection(const Checkpoint& ckpt, std::uint64_t seed, std::size_t width)
{
    if (width == 0 || width > ckpt.patterns()) throw std::invalid_argument("random selection wider than the bank");
    auto perm = Rng(seed).split("random-band").permutation(ckpt.patterns());
    perm.resize(width);
    return selection_of(ckpt, std::move(perm));
}

Matrix RateModel::inputs(const Matrix& measurements) const
{
    return scaled_inputs(measurements, stats, scale);
}

Matrix RateModel::predict(const Matrix& measurements) const
{
    return decoder.run(params, inputs(measurements));
}

RateModel finetune_decoder(const Checkpoint& ckpt, const RateSelection& selection, const Dataset& train,
                           std::size_t epochs)
{
    const std::size_t k = selection.count();
    if (k == 0 || selection.scale.size() != k) throw std::invalid_argument("finetune: malformed selection");
    for (std::size_t i = 0; i < k; ++i)
        if (selection.indices[i] >= ckpt.patterns() || selection.scale[i] != ckpt.ranking.scores[selection.indices[i]])
            throw std::invalid_argument("finetune: selection was not derived from this checkpoint");

    RateModel model{"learned", ckpt.config.decoder(k), ckpt.decoder_params.clone_values(),
                    ckpt.binary.select_rows(selection.indices), ckpt.binary_stats.select(selection.indices),
                    selection.scale, {}};
    const Rng rng = Rng(ckpt.config.seed).split("finetune", k);
    if (k != ckpt.patterns()) {
        Rng init = rng.split("input-layer");
        model.decoder.init_input_layer(model.params, init);
    }
    model.epoch_loss = fit_decoder(ckpt.config, model.decoder, model.params, measure_batch(model.bank, pixel_matrix(train)),
                                   model.stats, model.scale, train, epochs, rng);
    return model;
}

RateModel train_baseline(const TrainConfig& config, const PatternBank& bank, const Dataset& train, std::size_t epochs,
                         const std::string& label)
{
    config.validate();
    if (bank.domain() != PatternDomain::Binary) throw PatternError("baseline banks must be binary");
    const Matrix y = measure_batch(bank, pixel_matrix(train));
    RateModel model{label, config.decoder(bank.count()), {}, bank, channel_stats(y),
                    std::vector<double>(bank.count(), 1.0), {}};
    const Rng rng = Rng(config.seed).split("baseline-" + label, bank.count());
    Rng init = rng.split("init");
    model.decoder.init(model.params, init);
    model.epoch_loss = fit_decoder(config, model.decoder, model.params, y, model.stats, model.scale, train, epochs, rng);
    return model;
}

namespace {

const char* kContainerFile = "checkpoint.bin";

Tensor matrix_tensor(const Matrix& m)
{
    return to_tensor(m);
}

Matrix tensor_matrix(const Tensor& t)
{
    if (t.rank() != 2) throw FormatError("checkpoint: expected a matrix, got " + shape_string(t.shape));
    Matrix m(t.shape[0], t.shape[1]);
    std::copy(t.values.begin(), t.values.end(), m.data());
    return m;
}

const Tensor& entry(const TensorMap& map, const std::string& name)
{
    auto it = map.find(name);
    if (it == map.end()) throw FormatError("checkpoint: missing entry " + name);
    return it->second;
}

std::string training_log_csv(const std::vector<double>& loss)
{
    std::ostringstream out;
    out << "epoch,loss\n";
    for (std::size_t e = 0; e < loss.size(); ++e) out << e << ',' << format_double(loss[e]) << '\n';
    return out.str();
}

std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

namespace {

TensorMap checkpoint_tensors(const Checkpoint& ckpt)
{
    TensorMap t = parameter_values(ckpt.head_params);
    for (auto& [k, v] : parameter_values(ckpt.decoder_params)) t.emplace(k, v);
    t.emplace("bank.gray", matrix_tensor(ckpt.gray.patterns()));
    t.emplace("bank.binary", matrix_tensor(ckpt.binary.patterns()));
    t.emplace("stats.gray.mean", to_tensor(ckpt.gray_stats.mean));
    t.emplace("stats.gray.std", to_tensor(ckpt.gray_stats.stddev));
    t.emplace("stats.binary.mean", to_tensor(ckpt.binary_stats.mean));
    t.emplace("stats.binary.std", to_tensor(ckpt.binary_stats.stddev));
    t.emplace("ranking.scores", to_tensor(ckpt.ranking.scores));
    std::vector<double> perm(ckpt.ranking.permutation.begin(), ckpt.ranking.permutation.end());
    t.emplace("ranking.permutation", to_tensor(perm));
    if (!ckpt.epoch_loss.empty()) t.emplace("log.epoch_loss", to_tensor(ckpt.epoch_loss));
    return t;
}

std::string tensors_hash(const TensorMap& t)
{
    const auto bytes = encode_tensors(t);
    return hex64(fnv1a(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size())));
}

}  // namespace

std::string checkpoint_hash(const Checkpoint& ckpt)
{
    return tensors_hash(checkpoint_tensors(ckpt));
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    const TensorMap t = checkpoint_tensors(ckpt);
    save_tensors(dir / kContainerFile, t);
    write_file_atomic(dir / "config.txt", config_text(ckpt.config));
    write_ranking_csv(dir / "ranking.csv", ckpt.ranking);
    write_file_atomic(dir / "training_log.csv", training_log_csv(ckpt.epoch_loss));

    nlohmann::ordered_json manifest;
    manifest["kind"] = "checkpoint";
    manifest["version"] = SPIOPT_VERSION;
    manifest["config_hash"] = hex64(config_hash(ckpt.config));
    manifest["seed"] = ckpt.config.seed;
    manifest["patterns"] = ckpt.patterns();
    manifest["content_hash"] = tensors_hash(t);
    manifest["files"] = {kContainerFile, "config.txt", "ranking.csv", "training_log.csv"};
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir)
{
    if (!std::filesystem::exists(dir / kContainerFile))
        throw FormatError("no checkpoint at " + dir.string() + " (missing " + kContainerFile + ")");
    const TrainConfig config = parse_train_config(read_text_file(dir / "config.txt"));
    const TensorMap t = load_tensors(dir / kContainerFile);

    PatternBank gray(tensor_matrix(entry(t, "bank.gray")), PatternDomain::Gray, PatternProvenance::Learned);
    PatternBank binary(tensor_matrix(entry(t, "bank.binary")), PatternDomain::Binary,
                       PatternProvenance::LearnedBinarized);
    const std::size_t m = gray.count();
    PatternRanking ranking;
    ranking.scores = entry(t, "ranking.scores").values;
    for (double v : entry(t, "ranking.permutation").values) ranking.permutation.push_back(static_cast<std::size_t>(v));
    if (ranking.size() != m || ranking.scores.size() != m || binary.count() != m)
        throw FormatError("checkpoint: ranking and bank sizes disagree");

    std::vector<double> loss;
    if (t.count("log.epoch_loss")) loss = t.at("log.epoch_loss").values;
    ExcitationHead head{m, config.reduction};
    return Checkpoint{config,
                      std::move(gray),
                      std::move(binary),
                      head,
                      parameters_from(t, head.prefix),
                      parameters_from(t, "dec."),
                      {entry(t, "stats.gray.mean").values, entry(t, "stats.gray.std").values},
                      {entry(t, "stats.binary.mean").values, entry(t, "stats.binary.std").values},
                      std::move(ranking),
                      std::move(loss)};
}

void save_rate_model(const RateModel& model, const RateSelection& selection, const Checkpoint& ckpt,
                     const std::filesystem::path& dir)
{
    if (selection.count() != model.bank.count()) throw std::invalid_argument("save_rate_model: selection size mismatch");
    std::filesystem::create_directories(dir);
    TensorMap t = parameter_values(model.params);
    t.emplace("selection.indices", to_tensor(std::vector<double>(selection.indices.begin(), selection.indices.end())));
    if (!model.epoch_loss.empty()) t.emplace("log.epoch_loss", to_tensor(model.epoch_loss));
    save_tensors(dir / "model.bin", t);

    std::ostringstream csv;
    csv << "order,pattern_index,score\n";
    for (std::size_t i = 0; i < selection.count(); ++i)
        csv << i << ',' << selection.indices[i] << ',' << format_double(selection.scale[i]) << '\n';
    write_file_atomic(dir / "selection.csv", csv.str());

    nlohmann::ordered_json manifest;
    manifest["kind"] = "rate_model";
    manifest["version"] = SPIOPT_VERSION;
    manifest["label"] = model.label;
    manifest["checkpoint_hash"] = checkpoint_hash(ckpt);
    manifest["patterns"] = selection.count();
    manifest["rate"] = selection.rate;
    manifest["content_hash"] = tensors_hash(t);
    manifest["files"] = {"model.bin", "selection.csv"};
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

RateModel load_rate_model(const Checkpoint& ckpt, const std::filesystem::path& dir, RateSelection* selection)
{
    if (!std::filesystem::exists(dir / "model.bin")) throw FormatError("no fine-tuned model at " + dir.string());
    const auto manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
    if (manifest.value("checkpoint_hash", "") != checkpoint_hash(ckpt))
        throw FormatError("model at " + dir.string() + " was not tuned from this checkpoint");
    const TensorMap t = load_tensors(dir / "model.bin");
    std::vector<std::size_t> indices;
    for (double v : entry(t, "selection.indices").values) indices.push_back(static_cast<std::size_t>(v));
    if (indices.empty()) throw FormatError("model at " + dir.string() + " selects no patterns");
    for (auto k : indices)
        if (k >= ckpt.patterns()) throw FormatError("model selects pattern " + std::to_string(k) + " out of range");
    RateSelection sel = selection_of(ckpt, indices);

    RateModel model{manifest.value("label", "learned"), ckpt.config.decoder(indices.size()), parameters_from(t, "dec."),
                    ckpt.binary.select_rows(indices), ckpt.binary_stats.select(indices), sel.scale, {}};
    if (t.count("log.epoch_loss")) model.epoch_loss = t.at("log.epoch_loss").values;
    // Shapes must match what the decoder would have built itself.
    ParameterSet expected;
    Rng rng(0);
    model.decoder.init(expected, rng);
    for (const auto& [name, p] : expected)
        if (!model.params.contains(name) || model.params.value(name).shape != p.value.shape)
            throw FormatError("model parameter " + name + " missing or misshapen");
    if (selection) *selection = std::move(sel);
    return model;
}

}  // namespace spiopt
