#include <gtest/gtest.h>

#include <cmath>

#include "spiopt/excitation.hpp"
#include "support/gradcheck.hpp"

using namespace spiopt;

namespace {

ParameterSet zero_head(const ExcitationHead& head)
{
    ParameterSet ps;
    ps.add(head.w1(), Tensor::zeros({head.hidden(), head.channels}));
    ps.add(head.b1(), Tensor::zeros({head.hidden()}));
    ps.add(head.w2(), Tensor::zeros({head.channels, head.hidden()}));
    ps.add(head.b2(), Tensor::zeros({head.channels}));
    return ps;
}

ParameterSet random_head(const ExcitationHead& head, std::uint64_t seed)
{
    ParameterSet ps;
    Rng rng(seed);
    head.init(ps, rng);
    for (auto& [name, p] : ps)
        if (name.ends_with(".b"))
            for (auto& v : p.value.values) v = rng.uniform(-0.5, 0.5);
    return ps;
}

std::vector<double> random_vector(Rng& rng, std::size_t n, double lo, double hi)
{
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

Dataset random_images(Rng& rng, std::size_t n)
{
    Dataset d;
    for (std::size_t i = 0; i < n; ++i) {
        Image im;
        for (auto& p : im.pixels) p = rng.uniform(0.0, 1.0);
        d.images.push_back(im);
    }
    return d;
}

}  // namespace

TEST(Squeeze, IdentityAndIdempotent)
{
    const std::vector<double> y{1, 2, 3};
    EXPECT_EQ(squeeze(y), y);
    EXPECT_EQ(squeeze(squeeze(y)), squeeze(y));
    EXPECT_THROW(squeeze(std::vector<double>{}), std::invalid_argument);
}

TEST(Excite, HiddenWidthIsCeilOfRatio)
{
    EXPECT_EQ((ExcitationHead{784, 16}.hidden()), 49u);
    EXPECT_EQ((ExcitationHead{100, 16}.hidden()), 7u);
    EXPECT_EQ((ExcitationHead{1, 16}.hidden()), 1u);
}

TEST(Excite, ZeroDescriptorAndZeroBiasGiveExactlyHalf)
{
    ExcitationHead head{784, 16};
    ParameterSet ps;
    Rng rng(1);
    head.init(ps, rng);
    const auto w = excite(ps, head, std::vector<double>(784, 0.0));
    ASSERT_EQ(w.size(), 784u);
    for (double v : w.values) EXPECT_EQ(v, 0.5);

    const auto z = excite(zero_head(head), head, random_vector(rng, 784, -5, 5));
    for (double v : z.values) EXPECT_EQ(v, 0.5);
}

TEST(Excite, OutputsStrictlyInsideUnitInterval)
{
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = 1 + rng.index(200);
        ExcitationHead head{m, 1 + rng.index(16)};
        const auto ps = random_head(head, trial);
        const auto w = excite(ps, head, random_vector(rng, m, -4, 4));
        ASSERT_EQ(w.size(), m);
        for (double v : w.values) {
            EXPECT_GT(v, 0.0);
            EXPECT_LT(v, 1.0);
        }
    }
}

TEST(Excite, LengthMismatchRejected)
{
    ExcitationHead head{10, 2};
    const auto ps = zero_head(head);
    EXPECT_THROW(excite(ps, head, std::vector<double>(9, 0.0)), ShapeError);
}

TEST(Excite, BatchRowsMatchSingleCalls)
{
    ExcitationHead head{30, 4};
    const auto ps = random_head(head, 3);
    Rng rng(4);
    Matrix d(5, 30);
    for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = rng.uniform(-2, 2);
    const Matrix w = excite_batch(ps, head, d);
    for (Eigen::Index r = 0; r < d.rows(); ++r) {
        const auto single = excite(ps, head, {d.data() + r * 30, 30});
        for (std::size_t c = 0; c < 30; ++c) EXPECT_NEAR(w(r, c), single.values[c], 1e-14);
    }
}

TEST(ApplyWeights, Examples)
{
    Rng rng(2);
    const auto y = random_vector(rng, 40, -10, 10);
    EXPECT_EQ(apply_weights(y, WeightVector{std::vector<double>(40, 1.0)}), y);
    for (double v : apply_weights(y, WeightVector{std::vector<double>(40, 0.0)})) EXPECT_EQ(v, 0.0);
    const WeightVector w{random_vector(rng, 40, 0, 1)};
    const auto out = apply_weights(y, w);
    for (std::size_t i = 0; i < 40; ++i) EXPECT_NEAR(out[i], y[i] * w.values[i], 1e-15);
    EXPECT_THROW(apply_weights(y, WeightVector{std::vector<double>(39, 1.0)}), ShapeError);
}

TEST(ApplyWeights, GradientsFlowIntoExcitationParameters)
{
    // loss = sum(excite(d) * d) with the head as the only trainable part.
    ExcitationHead head{6, 2};
    ParameterSet ps = random_head(head, 9);
    Rng rng(10);
    const Tensor d({3, 6}, random_vector(rng, 18, -1.5, 1.5));
    auto build = [&](Tape& t) {
        Var x = t.constant(d);
        return sum(apply_weights(x, excite(t, ps, head, x)));
    };
    const auto result = spiopt::test_support::gradient_check(ps, build);
    EXPECT_TRUE(result.ok) << "worst " << result.worst << " error " << result.max_error;

    Tape tape;
    tape.backward(build(tape));
    double norm = 0.0;
    for (auto& [name, p] : ps)
        for (double g : p.grad.values) norm += g * g;
    EXPECT_GT(norm, 0.0);
}

TEST(StaticScores, MeanOfExcitationOverDataset)
{
    Rng rng(5);
    auto bank = random_bank(3, 12);
    ExcitationHead head{12, 4};
    const auto ps = random_head(head, 6);
    Dataset d = random_images(rng, 2);
    const ChannelStats stats = channel_stats(measure_batch(bank, pixel_matrix(d)));

    // One image: the scores are that image's weights.
    Dataset one;
    one.images.push_back(d.images[0]);
    auto standardized = [&](const Image& im) {
        const auto y = measure(bank, im).values;
        std::vector<double> z(y.size());
        for (std::size_t c = 0; c < y.size(); ++c) z[c] = (y[c] - stats.mean[c]) / stats.stddev[c];
        return z;
    };
    const auto w0 = excite(ps, head, squeeze(standardized(d.images[0])));
    const auto w1 = excite(ps, head, squeeze(standardized(d.images[1])));
    const auto s1 = extract_static_scores(ps, head, bank, stats, one);
    for (std::size_t k = 0; k < 12; ++k) EXPECT_NEAR(s1.values[k], w0.values[k], 1e-12);

    const auto s2 = extract_static_scores(ps, head, bank, stats, d);
    for (std::size_t k = 0; k < 12; ++k) EXPECT_NEAR(s2.values[k], (w0.values[k] + w1.values[k]) / 2.0, 1e-12);

    for (double v : extract_static_scores(zero_head(head), head, bank, stats, d).values) EXPECT_EQ(v, 0.5);
    EXPECT_THROW(extract_static_scores(ps, head, bank, stats, Dataset{}), std::invalid_argument);
}

TEST(Rank, Examples)
{
    EXPECT_EQ(rank(std::vector<double>{0.2, 0.9, 0.5}).permutation, (std::vector<std::size_t>{1, 2, 0}));
    EXPECT_EQ(rank(std::vector<double>(5, 0.3)).permutation, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
    EXPECT_EQ(rank(std::vector<double>{0.5, 0.7, 0.5, 0.7}).permutation, (std::vector<std::size_t>{1, 3, 0, 2}));
}

TEST(Rank, ValidPermutationAndOrderInvariant)
{
    Rng rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t m = 1 + rng.index(300);
        std::vector<double> s(m);
        // Coarse values force plenty of ties.
        for (auto& v : s) v = std::round(rng.uniform(0, 1) * 20) / 20;
        const auto r = rank(s);
        std::vector<bool> seen(m, false);
        for (auto k : r.permutation) {
            ASSERT_LT(k, m);
            EXPECT_FALSE(seen[k]);
            seen[k] = true;
        }
        for (std::size_t i = 0; i + 1 < m; ++i) EXPECT_GE(s[r.permutation[i]], s[r.permutation[i + 1]]);

        const double c = rng.uniform(0.01, 100);
        std::vector<double> scaled(m), warped(m);
        for (std::size_t i = 0; i < m; ++i) {
            scaled[i] = c * s[i];
            warped[i] = std::exp(3 * s[i]) + 2;
        }
        EXPECT_EQ(rank(scaled).permutation, r.permutation);
        EXPECT_EQ(rank(warped).permutation, r.permutation);
    }
}

TEST(Rank, CsvColumns)
{
    const auto r = rank(std::vector<double>{0.25, 0.75});
    EXPECT_EQ(ranking_csv(r), "pattern_index,score,rank\n0,0.25,2\n1,0.75,1\n");
}
