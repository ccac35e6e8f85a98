#include <gtest/gtest.h>

#include <cmath>

#include "spiopt/evaluation.hpp"
#include "support/oracles.hpp"

using namespace spiopt;

namespace {

std::vector<double> random_image(Rng& rng)
{
    std::vector<double> v(kImagePixels);
    for (auto& x : v) x = rng.uniform(0.0, 1.0);
    return v;
}

TrainConfig tiny(Task task)
{
    TrainConfig c;
    c.task = task;
    c.stage_one_rate = 0.05;
    c.epochs = 1;
    c.fine_tune_epochs = 1;
    c.batch_size = 32;
    c.channels = 4;
    c.hidden = 16;
    c.seed = 3;
    return c;
}

}  // namespace

TEST(Psnr, Examples)
{
    const std::vector<double> a(784, 0.5), b(784, 0.75);
    EXPECT_NEAR(psnr(a, b).db, 12.0412, 1e-4);
    EXPECT_FALSE(psnr(a, b).identical);
    const auto same = psnr(a, a);
    EXPECT_TRUE(same.identical);
    EXPECT_EQ(same.db, kPsnrCap);
    EXPECT_THROW(psnr(a, std::vector<double>(783, 0.5)), ShapeError);
}

TEST(Psnr, SymmetricAndMatchesOracle)
{
    Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        const auto a = random_image(rng), b = random_image(rng);
        EXPECT_EQ(psnr(a, b).db, psnr(b, a).db);
        EXPECT_NEAR(psnr(a, b).db, test_support::psnr_oracle(a, b), 1e-9);
    }
}

TEST(Accuracy, Examples)
{
    const std::vector<int> labels{0, 1, 2, 2, 9};
    EXPECT_EQ(accuracy(labels, labels).accuracy, 1.0);
    const auto r = accuracy(std::vector<int>{0, 1, 0, 2, 0}, labels);
    EXPECT_EQ(r.correct, 3u);
    EXPECT_DOUBLE_EQ(r.accuracy, 0.6);
    EXPECT_DOUBLE_EQ(r.class_accuracy(2), 0.5);
    EXPECT_EQ(r.class_accuracy(9), 0.0);
    EXPECT_TRUE(std::isnan(r.class_accuracy(5)));
    EXPECT_THROW(accuracy(std::vector<int>{1}, labels), std::invalid_argument);
}

TEST(Accuracy, ArgmaxTakesFirstMaximum)
{
    Matrix p = Matrix::Zero(2, 10);
    p(0, 3) = 0.9;
    p.row(1).setConstant(0.1);
    EXPECT_EQ(argmax_rows(p), (std::vector<int>{3, 0}));
}

TEST(Evaluate, AcquisitionWithoutNoiseMatchesEvaluation)
{
    const Dataset train = synthetic_dataset(2, 60), test = synthetic_dataset(2, 20, Split::Test);
    for (Task task : {Task::Reconstruct, Task::Classify}) {
        const Checkpoint ckpt = train_joint(tiny(task), train);
        const RateModel m = finetune_decoder(ckpt, select_for_rate(ckpt, 0.03), train, 1);
        const auto a = evaluate(m, test);
        const auto b = evaluate_acquired(m, test, NoiseModel::gaussian(0.0), 17, 1.0);
        EXPECT_EQ(a.outputs, b.outputs) << to_string(task);
        EXPECT_EQ(a.metric, b.metric);
    }
}

TEST(Sweep, RowsAndDeterminism)
{
    const Dataset train = synthetic_dataset(4, 60), test = synthetic_dataset(4, 20, Split::Test);
    const Checkpoint ckpt = train_joint(tiny(Task::Classify), train);
    const std::vector<std::string> strategies{"learned", "random", "hadamard"};
    const std::vector<double> rates{0.01, 0.03, 0.05};
    const auto a = sweep_rates(ckpt, strategies, rates, train, test);
    ASSERT_EQ(a.size(), 3u);
    for (const auto& r : a) {
        EXPECT_EQ(r.rates, rates);
        EXPECT_EQ(r.counts, (std::vector<std::size_t>{7, 23, 39}));
        for (double v : r.metric) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
    const std::string csv = sweep_csv(a);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 10);
    EXPECT_TRUE(csv.starts_with("task,strategy,lambda,rate,K,metric,n_test,seed\n"));
    EXPECT_EQ(sweep_csv(sweep_rates(ckpt, strategies, rates, train, test)), csv);
    EXPECT_THROW(sweep_rates(ckpt, strategies, {0.03, 0.01}, train, test), std::invalid_argument);
    EXPECT_THROW(sweep_rates(ckpt, {"learned"}, {0.1}, train, test), std::invalid_argument);
}

TEST(Sweep, LambdaStudySkipsRatesAboveLambda)
{
    const Dataset train = synthetic_dataset(5, 40), test = synthetic_dataset(5, 10, Split::Test);
    const auto reports = first_stage_rate_study(tiny(Task::Classify), {0.02, 0.05}, {0.01, 0.03, 0.05}, train, test);
    ASSERT_EQ(reports.size(), 2u);
    EXPECT_EQ(reports[0].rates, (std::vector<double>{0.01}));
    EXPECT_EQ(reports[1].rates, (std::vector<double>{0.01, 0.03, 0.05}));
    EXPECT_EQ(reports[1].counts, (std::vector<std::size_t>{7, 23, 39}));
}

TEST(BandStudy, RowsAndCsv)
{
    const Dataset train = synthetic_dataset(6, 40), test = synthetic_dataset(6, 10, Split::Test);
    auto cfg = tiny(Task::Classify);
    const auto study = weight_band_study(cfg, 60, train, test, 20);
    ASSERT_EQ(study.rows.size(), 4u);
    EXPECT_EQ(study.rows[0].band, "1");
    EXPECT_EQ(study.rows[2].band, "41");
    EXPECT_EQ(study.rows[3].band, "random");
    EXPECT_DOUBLE_EQ(study.top_minus_bottom, study.rows[0].accuracy - study.rows[2].accuracy);
    const std::string csv = band_csv(study);
    EXPECT_TRUE(csv.starts_with("band_start,rate,accuracy\n1,"));
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST(RunCells, ThreadedMatchesSerialAndPropagatesErrors)
{
    std::vector<int> out(17, 0);
    setenv("SPIOPT_THREADS", "4", 1);
    run_cells(out.size(), [&](std::size_t i) { out[i] = static_cast<int>(i * i); });
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], static_cast<int>(i * i));
    EXPECT_THROW(run_cells(5, [](std::size_t i) {
                     if (i == 3) throw std::runtime_error("cell");
                 }),
                 std::runtime_error);
    unsetenv("SPIOPT_THREADS");
}
