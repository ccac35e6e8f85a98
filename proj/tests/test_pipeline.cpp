#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "spiopt/config.hpp"
#include "spiopt/evaluation.hpp"
#include "spiopt/io_util.hpp"
#include "spiopt/pipeline.hpp"

using namespace spiopt;
namespace fs = std::filesystem;

namespace {

struct FsCase {
    std::string name;
    std::size_t height, width;
    std::vector<double> input;
    std::vector<double> bits;
};

std::vector<FsCase> load_fs_reference()
{
    std::ifstream in(fs::path(SPIOPT_TEST_DATA_DIR) / "fs_reference.txt");
    std::vector<FsCase> out;
    std::string header, values, bits;
    while (std::getline(in, header) && std::getline(in, values) && std::getline(in, bits)) {
        FsCase c;
        std::istringstream hs(header);
        std::string tag;
        hs >> tag >> c.name >> c.height >> c.width;
        std::istringstream vs(values);
        for (std::string tok; vs >> tok;) c.input.push_back(std::strtod(tok.c_str(), nullptr));
        for (char b : bits) c.bits.push_back(b == '1' ? 1.0 : 0.0);
        out.push_back(std::move(c));
    }
    return out;
}

PatternBank constant_bank(double v)
{
    return PatternBank(Matrix::Constant(1, kImagePixels, v), PatternDomain::Gray, PatternProvenance::Learned);
}

TrainConfig small_config(Task task, double lambda, std::size_t epochs)
{
    TrainConfig c;
    c.task = task;
    c.stage_one_rate = lambda;
    c.epochs = epochs;
    c.fine_tune_epochs = 2;
    c.batch_size = 32;
    c.channels = 8;
    c.hidden = 32;
    c.seed = 5;
    return c;
}

// Untrained full-rate checkpoint; cheap enough for selection tests.
const Checkpoint& untrained_full()
{
    static const Checkpoint ckpt = train_joint(small_config(Task::Classify, 1.0, 0), synthetic_dataset(1, 50));
    return ckpt;
}

std::string file_bytes(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Dither, TrivialFields)
{
    EXPECT_EQ(binarize_bank(constant_bank(0.0)).patterns(), Matrix::Zero(1, kImagePixels));
    EXPECT_EQ(binarize_bank(constant_bank(1.0)).patterns(), Matrix::Ones(1, kImagePixels));
    const auto b = binarize_bank(constant_bank(0.3));
    EXPECT_EQ(b.domain(), PatternDomain::Binary);
    EXPECT_EQ(b.provenance(), PatternProvenance::LearnedBinarized);
}

TEST(Dither, ConstantFieldCounts)
{
    // Ones per 28x28 field from an independent implementation. Error pushed
    // past the right and bottom edges is dropped, so sparse fields lose a few
    // pixels of mass and dense ones gain a few.
    const int expected[9] = {72, 152, 232, 309, 392, 475, 552, 632, 712};
    for (int tenths = 1; tenths <= 9; ++tenths) {
        const double ones = binarize_bank(constant_bank(tenths / 10.0)).patterns().sum();
        EXPECT_EQ(ones, expected[tenths - 1]) << "v = " << tenths / 10.0;
    }
}

TEST(Dither, IdempotentOnBinaryInput)
{
    auto bank = random_bank(3, 20);
    PatternBank as_gray(bank.patterns(), PatternDomain::Gray, PatternProvenance::Learned);
    const auto once = binarize_bank(as_gray);
    EXPECT_EQ(once.patterns(), bank.patterns());
    PatternBank again(once.patterns(), PatternDomain::Gray, PatternProvenance::Learned);
    EXPECT_EQ(binarize_bank(again).patterns(), once.patterns());
}

TEST(Dither, BitExactAgainstReferenceTrace)
{
    const auto cases = load_fs_reference();
    ASSERT_GE(cases.size(), 10u);
    for (const auto& c : cases) {
        ASSERT_EQ(c.input.size(), c.height * c.width) << c.name;
        EXPECT_EQ(floyd_steinberg(c.input, c.height, c.width), c.bits) << c.name;
    }
}

TEST(Dither, RejectsBadInput)
{
    Matrix m = Matrix::Constant(1, kImagePixels, 0.5);
    m(0, 3) = 1.5;
    EXPECT_THROW(PatternBank(m, PatternDomain::Gray, PatternProvenance::Learned), PatternError);
    EXPECT_THROW(floyd_steinberg(std::vector<double>(10, 0.5), 3, 3), std::invalid_argument);
}

TEST(Selection, CountsFromRate)
{
    const auto& ckpt = untrained_full();
    ASSERT_EQ(ckpt.patterns(), 784u);
    EXPECT_EQ(select_for_rate(ckpt, 0.1).count(), 78u);
    EXPECT_EQ(select_for_rate(ckpt, 1.0).count(), 784u);
    EXPECT_EQ(select_for_rate(ckpt, 0.026).count(), 20u);
    EXPECT_EQ(select_for_rate(ckpt, 0.0001).count(), 1u);
    EXPECT_THROW(select_for_rate(ckpt, 0.0), std::invalid_argument);
    EXPECT_THROW(select_for_rate(ckpt, 1.01), std::invalid_argument);
    EXPECT_EQ(count_for_rate(0.3, 784), 235u);
}

TEST(Selection, TopIndicesFollowRankingAndNest)
{
    const auto& ckpt = untrained_full();
    const std::vector<double> rates{0.01, 0.02, 0.026, 0.03, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0};
    for (std::size_t i = 0; i < rates.size(); ++i) {
        const auto a = select_for_rate(ckpt, rates[i]);
        for (std::size_t j = 0; j < a.count(); ++j) {
            EXPECT_EQ(a.indices[j], ckpt.ranking.permutation[j]);
            EXPECT_EQ(a.scale[j], ckpt.ranking.scores[a.indices[j]]);
        }
        for (std::size_t k = i + 1; k < rates.size(); ++k) {
            const auto b = select_for_rate(ckpt, rates[k]);
            ASSERT_LE(a.count(), b.count());
            EXPECT_TRUE(std::equal(a.indices.begin(), a.indices.end(), b.indices.begin()));
        }
    }
}

TEST(Selection, WeightBandsAreDisjointAndCover)
{
    const Checkpoint ckpt = train_joint(small_config(Task::Classify, 100.0 / 784.0, 0), synthetic_dataset(2, 40));
    ASSERT_EQ(ckpt.patterns(), 100u);
    std::set<std::size_t> seen;
    for (std::size_t start = 0; start < 100; start += 20) {
        const auto band = weight_band_selection(ckpt, start, 20);
        EXPECT_EQ(band.count(), 20u);
        EXPECT_NEAR(band.rate, 20.0 / 784.0, 1e-15);
        for (auto k : band.indices) EXPECT_TRUE(seen.insert(k).second);
    }
    EXPECT_EQ(seen.size(), 100u);
    const auto top = weight_band_selection(ckpt, 0, 20);
    EXPECT_TRUE(std::equal(top.indices.begin(), top.indices.end(), ckpt.ranking.permutation.begin()));
    EXPECT_THROW(weight_band_selection(ckpt, 90, 20), std::invalid_argument);

    const auto r1 = random_selection(ckpt, 4), r2 = random_selection(ckpt, 4);
    EXPECT_EQ(r1.indices, r2.indices);
    EXPECT_EQ(std::set<std::size_t>(r1.indices.begin(), r1.indices.end()).size(), 20u);
}

TEST(TrainJoint, ZeroEpochsIsInitialization)
{
    const auto cfg = small_config(Task::Reconstruct, 0.05, 0);
    const Dataset d = synthetic_dataset(3, 30);
    const Checkpoint ckpt = train_joint(cfg, d);
    EXPECT_EQ(ckpt.patterns(), 39u);
    EXPECT_TRUE(ckpt.epoch_loss.empty());
    EXPECT_EQ(ckpt.gray.domain(), PatternDomain::Gray);
    EXPECT_EQ(ckpt.binary.domain(), PatternDomain::Binary);
    EXPECT_EQ(ckpt.ranking.size(), ckpt.patterns());

    Rng r = Rng(cfg.seed).split("bank");
    for (Eigen::Index i = 0; i < ckpt.gray.patterns().size(); ++i)
        ASSERT_EQ(ckpt.gray.patterns().data()[i], r.uniform(0.0, 1.0));
    EXPECT_EQ(ckpt.binary.patterns(), binarize_bank(ckpt.gray).patterns());
    const auto scores = extract_static_scores(ckpt.head_params, ckpt.head, ckpt.gray, ckpt.gray_stats, d);
    EXPECT_EQ(ckpt.ranking.scores, scores.values);
}

TEST(TrainJoint, LossDecreasesOnSyntheticData)
{
    for (Task task : {Task::Reconstruct, Task::Classify}) {
        auto cfg = small_config(task, 0.1, 5);
        const Checkpoint ckpt = train_joint(cfg, synthetic_dataset(4, 300));
        ASSERT_EQ(ckpt.epoch_loss.size(), 5u);
        EXPECT_LT(ckpt.epoch_loss.back(), ckpt.epoch_loss.front()) << to_string(task);
        for (Eigen::Index i = 0; i < ckpt.gray.patterns().size(); ++i) {
            ASSERT_GE(ckpt.gray.patterns().data()[i], 0.0);
            ASSERT_LE(ckpt.gray.patterns().data()[i], 1.0);
        }
    }
}

TEST(TrainJoint, DeterministicCheckpointFiles)
{
    const auto cfg = small_config(Task::Classify, 0.05, 2);
    const Dataset d = synthetic_dataset(6, 120);
    const auto base = fs::temp_directory_path() / "spiopt_ckpt_det";
    fs::remove_all(base);
    save_checkpoint(train_joint(cfg, d), base / "a");
    save_checkpoint(train_joint(cfg, d), base / "b");
    for (const char* f : {"checkpoint.bin", "config.txt", "ranking.csv", "training_log.csv", "manifest.json"})
        EXPECT_EQ(file_bytes(base / "a" / f), file_bytes(base / "b" / f)) << f;
    fs::remove_all(base);
}

TEST(Checkpoint, SaveLoadRoundTrip)
{
    const auto cfg = small_config(Task::Reconstruct, 0.03, 1);
    const Dataset d = synthetic_dataset(7, 40);
    const Checkpoint a = train_joint(cfg, d);
    const auto dir = fs::temp_directory_path() / "spiopt_ckpt_roundtrip";
    fs::remove_all(dir);
    save_checkpoint(a, dir);
    const Checkpoint b = load_checkpoint(dir);
    EXPECT_EQ(config_text(b.config), config_text(a.config));
    EXPECT_EQ(b.gray.patterns(), a.gray.patterns());
    EXPECT_EQ(b.binary.patterns(), a.binary.patterns());
    EXPECT_EQ(b.ranking.permutation, a.ranking.permutation);
    EXPECT_EQ(b.ranking.scores, a.ranking.scores);
    EXPECT_EQ(b.binary_stats.mean, a.binary_stats.mean);
    EXPECT_EQ(b.binary_stats.stddev, a.binary_stats.stddev);
    EXPECT_EQ(b.epoch_loss, a.epoch_loss);
    EXPECT_EQ(parameter_values(b.decoder_params), parameter_values(a.decoder_params));
    EXPECT_EQ(parameter_values(b.head_params), parameter_values(a.head_params));
    EXPECT_EQ(read_text_file(dir / "ranking.csv"), ranking_csv(a.ranking));
    EXPECT_THROW(load_checkpoint(dir / "missing"), FormatError);
    fs::remove_all(dir);
}

TEST(Finetune, ZeroEpochsKeepsDeepLayersAndFreezesEncoder)
{
    const auto cfg = small_config(Task::Classify, 0.1, 1);
    const Dataset d = synthetic_dataset(8, 60);
    const Checkpoint ckpt = train_joint(cfg, d);
    const auto before_bank = ckpt.binary.patterns();
    const auto before_scores = ckpt.ranking.scores;
    const auto sel = select_for_rate(ckpt, 0.5);
    const RateModel m = finetune_decoder(ckpt, sel, d, 0);
    for (const auto& name : {"dec.fc2.w", "dec.fc2.b", "dec.fc3.w", "dec.fc3.b"})
        EXPECT_EQ(m.params.value(name), ckpt.decoder_params.value(name)) << name;
    EXPECT_EQ(m.params.value("dec.fc1.w").shape, (Shape{32, sel.count()}));
    EXPECT_EQ(m.bank.patterns(), ckpt.binary.select_rows(sel.indices).patterns());

    // Only decoder parameters exist on the fine-tune side, so nothing can reach the bank.
    const RateModel tuned = finetune_decoder(ckpt, sel, d, 1);
    for (const auto& [name, p] : tuned.params) EXPECT_TRUE(name.starts_with("dec.")) << name;
    EXPECT_EQ(ckpt.binary.patterns(), before_bank);
    EXPECT_EQ(ckpt.ranking.scores, before_scores);

    // Inference uses exactly the stored binary statistics of the selected channels.
    const auto stored = ckpt.binary_stats.select(sel.indices);
    EXPECT_EQ(tuned.stats.mean, stored.mean);
    EXPECT_EQ(tuned.stats.stddev, stored.stddev);

    auto bad = sel;
    bad.scale[0] += 0.25;
    EXPECT_THROW(finetune_decoder(ckpt, bad, d, 0), std::invalid_argument);
}

TEST(Finetune, FullRateKeepsInputLayer)
{
    const auto cfg = small_config(Task::Classify, 0.05, 1);
    const Dataset d = synthetic_dataset(9, 40);
    const Checkpoint ckpt = train_joint(cfg, d);
    const RateModel m = finetune_decoder(ckpt, select_for_rate(ckpt, 1.0), d, 0);
    EXPECT_EQ(m.params.value("dec.fc1.w"), ckpt.decoder_params.value("dec.fc1.w"));
}

TEST(Synthetic, ClassifierSeparatesQuadrants)
{
    TrainConfig cfg;
    cfg.task = Task::Classify;
    cfg.epochs = 5;
    cfg.seed = 11;
    const Dataset train = synthetic_dataset(11, 2000);
    const Dataset test = synthetic_dataset(11, 500, Split::Test);
    const Checkpoint ckpt = train_joint(cfg, train);
    EXPECT_GT(evaluate(finetune_decoder(ckpt, select_for_rate(ckpt, 1.0), train, 5), test).metric, 0.90);
}

TEST(Synthetic, MoreMeasurementsReconstructBetter)
{
    // Classification saturates on the quadrant scenes, so compare PSNR.
    TrainConfig cfg;
    cfg.task = Task::Reconstruct;
    cfg.stage_one_rate = 0.1;
    cfg.epochs = 5;
    cfg.seed = 13;
    const Dataset train = synthetic_dataset(13, 1000);
    const Dataset test = synthetic_dataset(13, 200, Split::Test);
    const Checkpoint ckpt = train_joint(cfg, train);
    const double tenth = evaluate(finetune_decoder(ckpt, select_top(ckpt, 78), train, 5), test).metric;
    const double hundredth = evaluate(finetune_decoder(ckpt, select_top(ckpt, 7), train, 5), test).metric;
    EXPECT_GT(tenth, hundredth);
}

TEST(Config, ParsesDefaultsAndRejectsUnknownKeys)
{
    const auto c = parse_run_config("# comment\n task = classify \nlambda=0.5\nrates=0.1, 0.2\n\nsynthetic=true\n");
    EXPECT_EQ(c.train.task, Task::Classify);
    EXPECT_EQ(c.train.stage_one_rate, 0.5);
    EXPECT_EQ(c.rates, (std::vector<double>{0.1, 0.2}));
    EXPECT_TRUE(c.data.synthetic);
    EXPECT_EQ(c.train.epochs, TrainConfig{}.epochs);
    try {
        parse_run_config("epochs=3\nlearning_rat=0.1\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.key(), "learning_rat");
    }
    EXPECT_THROW(parse_run_config("epochs=three\n"), ConfigError);
    EXPECT_THROW(parse_run_config("just a line\n"), ConfigError);
    EXPECT_EQ(parse_run_config(run_config_text(c)).train.seed, c.train.seed);
    EXPECT_EQ(run_config_text(parse_run_config(run_config_text(c))), run_config_text(c));
    EXPECT_EQ(config_text(parse_train_config(config_text(c.train))), config_text(c.train));
}

TEST(RateModelFiles, RoundTripAndCheckpointBinding)
{
    const auto cfg = small_config(Task::Classify, 0.1, 1);
    const Dataset d = synthetic_dataset(12, 60);
    const Checkpoint ckpt = train_joint(cfg, d);
    const auto sel = select_for_rate(ckpt, 0.3);
    const RateModel m = finetune_decoder(ckpt, sel, d, 1);
    const auto dir = fs::temp_directory_path() / "spiopt_rate_model";
    fs::remove_all(dir);
    save_rate_model(m, sel, ckpt, dir);

    RateSelection loaded_sel;
    const RateModel back = load_rate_model(ckpt, dir, &loaded_sel);
    EXPECT_EQ(loaded_sel.indices, sel.indices);
    EXPECT_EQ(loaded_sel.scale, sel.scale);
    EXPECT_EQ(back.bank.patterns(), m.bank.patterns());
    EXPECT_EQ(back.epoch_loss, m.epoch_loss);
    const Matrix y = measure_batch(m.bank, pixel_matrix(d));
    EXPECT_EQ(back.predict(y), m.predict(y));

    const Checkpoint other = train_joint(small_config(Task::Classify, 0.1, 2), d);
    EXPECT_THROW(load_rate_model(other, dir), FormatError);
    fs::remove_all(dir);
}
