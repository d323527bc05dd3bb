#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "celm/data.hpp"
#include "celm/nn.hpp"
#include "temp_dir.hpp"

using test_support::TempDir;

using namespace celm;

namespace {

Dataset balanced(std::size_t k, std::size_t per_class, std::uint64_t seed = 7) {
    return synth_dataset(k, per_class, 4, seed);
}

std::size_t support(const LabelAllocation& a, std::size_t i) {
    std::size_t s = 0;
    for (std::size_t c = 0; c < a.cols(); ++c) s += a(i, c) > 0;
    return s;
}

void expect_tallies(const Dataset& ds, const Partition& p) {
    std::set<std::size_t> seen;
    for (std::size_t i = 0; i < p.clients.size(); ++i) {
        const auto counts = p.clients[i].class_counts();
        for (std::size_t c = 0; c < counts.size(); ++c) EXPECT_EQ(counts[c], p.allocation(i, c));
        for (auto idx : p.indices[i]) EXPECT_TRUE(seen.insert(idx).second) << "sample " << idx << " assigned twice";
    }
    const auto supply = ds.class_counts();
    const auto cols = p.allocation.col_sums();
    for (std::size_t c = 0; c < supply.size(); ++c) EXPECT_LE(cols[c], supply[c]);
}

}  // namespace

TEST(Synth, LinearModelSeparatesTwoClusters) {
    auto rng = substream(11, streams::data);
    const auto ds = synth_dataset_from_means({{2, 0}, {-2, 0}}, 500, rng);
    MlpModel m({DenseLayer(Tensor({2, 2}), Tensor({2}))});
    Sgd sgd(0.5);
    for (int step = 0; step < 200; ++step) sgd.step(m, loss_and_param_grad(m, ds.inputs, ds.labels).grads);
    const auto pred = predict(m, ds.inputs);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == ds.labels[i];
    EXPECT_GT(static_cast<Real>(hit) / static_cast<Real>(pred.size()), 0.95);
}

TEST(Synth, SameSeedSameData) {
    EXPECT_EQ(synth_dataset(4, 50, 8, 3).inputs, synth_dataset(4, 50, 8, 3).inputs);
    EXPECT_NE(synth_dataset(4, 50, 8, 3).inputs, synth_dataset(4, 50, 8, 4).inputs);
}

TEST(Synth, EmptyAndDegenerateRejected) {
    EXPECT_THROW(synth_dataset(4, 0, 8, 1), DomainError);
    EXPECT_THROW(synth_dataset(1, 10, 8, 1), DomainError);
    EXPECT_THROW(synth_dataset(3, 10, 1, 1), DomainError);
}

TEST(Synth, TrainTestShareMeansButNotNoise) {
    const auto tt = synth_train_test(3, 40, 20, 5, 9);
    EXPECT_EQ(tt.train.inputs, synth_dataset(3, 40, 5, 9).inputs);
    EXPECT_EQ(tt.test.size(), 60u);
}

TEST(Idx, FourImageRoundTrip) {
    TempDir dir;
    Dataset ds;
    ds.num_classes = 3;
    ds.inputs = Tensor({4, 6});
    for (std::size_t i = 0; i < ds.inputs.size(); ++i) ds.inputs[i] = static_cast<Real>((i * 37) % 256) / 255.0;
    ds.labels = {2, 0, 1, 2};
    write_idx(ds, 2, 3, dir.file("img.idx"), dir.file("lab.idx"));
    const auto back = load_idx(dir.file("img.idx"), dir.file("lab.idx"));
    EXPECT_EQ(back.inputs, ds.inputs);
    EXPECT_EQ(back.labels, ds.labels);
    EXPECT_EQ(back.num_classes, 3u);
    EXPECT_EQ(back.image_rows, 2u);
    EXPECT_EQ(back.image_cols, 3u);
}

TEST(Idx, KnownBytes) {
    TempDir dir;
    const unsigned char img[] = {0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 255};
    const unsigned char lab[] = {0, 0, 8, 1, 0, 0, 0, 1, 4};
    dir.write_bytes("i", img, sizeof img);
    dir.write_bytes("l", lab, sizeof lab);
    const auto ds = load_idx(dir.file("i"), dir.file("l"));
    EXPECT_EQ(ds.inputs.values(), (std::vector<Real>{0.0, 1.0}));
    EXPECT_EQ(ds.labels, (std::vector<std::size_t>{4}));
    EXPECT_EQ(ds.num_classes, 5u);
}

TEST(Idx, LabelCountMismatchIsFormatError) {
    TempDir dir;
    const unsigned char img[] = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 1, 7, 9};
    const unsigned char lab[] = {0, 0, 8, 1, 0, 0, 0, 1, 4};
    dir.write_bytes("i", img, sizeof img);
    dir.write_bytes("l", lab, sizeof lab);
    try {
        load_idx(dir.file("i"), dir.file("l"));
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), 4u);
    }
}

TEST(Idx, EmptyBadMagicTruncated) {
    TempDir dir;
    const unsigned char lab[] = {0, 0, 8, 1, 0, 0, 0, 1, 4};
    dir.write_bytes("l", lab, sizeof lab);
    dir.write_bytes("empty", nullptr, 0);
    EXPECT_THROW(load_idx(dir.file("empty"), dir.file("l")), FormatError);

    const unsigned char bad[] = {0, 0, 8, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0};
    dir.write_bytes("bad", bad, sizeof bad);
    try {
        load_idx(dir.file("bad"), dir.file("l"));
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), 0u);
    }

    const unsigned char short_img[] = {0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 1, 2};
    dir.write_bytes("short", short_img, sizeof short_img);
    try {
        load_idx(dir.file("short"), dir.file("l"));
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), sizeof short_img);
    }
}

TEST(Partition, IidSplitsEvenly) {
    const auto ds = balanced(4, 101);
    PartitionSpec spec;
    spec.regime = Regime::Iid;
    spec.clients = 2;
    const auto p = partition(ds, spec);
    expect_tallies(ds, p);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(static_cast<Real>(p.allocation(i, c)), 50.5, 1.0);
}

TEST(Partition, DeterministicGivenSeed) {
    const auto ds = balanced(5, 80);
    PartitionSpec spec;
    spec.regime = Regime::Dirichlet;
    spec.alpha = 0.3;
    spec.seed = 42;
    const auto a = partition(ds, spec);
    const auto b = partition(ds, spec);
    EXPECT_EQ(a.allocation, b.allocation);
    EXPECT_EQ(a.indices, b.indices);
    spec.seed = 43;
    EXPECT_NE(partition(ds, spec).allocation, a.allocation);
}

TEST(Partition, DirichletConservesAndHasNoEmptyClient) {
    const auto ds = balanced(6, 100);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        PartitionSpec spec;
        spec.regime = Regime::Dirichlet;
        spec.alpha = 0.05;
        spec.seed = seed;
        const auto p = partition(ds, spec);
        expect_tallies(ds, p);
        const auto cols = p.allocation.col_sums();
        for (auto c : cols) EXPECT_EQ(c, 100u);
        for (auto r : p.allocation.row_sums()) EXPECT_GE(r, 1u);
    }
}

TEST(Partition, DirichletLargeAlphaApproachesIid) {
    const auto ds = balanced(4, 500);
    Real worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        PartitionSpec spec;
        spec.regime = Regime::Dirichlet;
        spec.alpha = 1000;
        spec.clients = 5;
        spec.seed = seed;
        const auto a = partition(ds, spec).allocation;
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t c = 0; c < 4; ++c)
                worst = std::max(worst, std::abs(static_cast<Real>(a(i, c)) / 500.0 - 0.2));
    }
    EXPECT_LT(worst, 0.10);
}

TEST(Partition, SkewGrowsAsAlphaShrinks) {
    const auto ds = balanced(8, 100);
    auto mean_support = [&](Real alpha) {
        Real s = 0.0;
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            PartitionSpec spec;
            spec.regime = Regime::Dirichlet;
            spec.alpha = alpha;
            spec.seed = seed;
            const auto a = partition(ds, spec).allocation;
            for (std::size_t i = 0; i < a.rows(); ++i) s += static_cast<Real>(support(a, i));
        }
        return s;
    };
    const Real s005 = mean_support(0.05), s1 = mean_support(1.0), s100 = mean_support(100.0);
    EXPECT_LT(s005, s1);
    EXPECT_LT(s1, s100);
}

TEST(Partition, PlsTwoClassesPerClient) {
    const auto ds = balanced(4, 100);
    PartitionSpec spec;
    spec.regime = Regime::Pls;
    spec.clients = 2;
    spec.classes_per_client = {2, 2};
    const auto p = partition(ds, spec);
    expect_tallies(ds, p);
    EXPECT_EQ(support(p.allocation, 0), 2u);
    EXPECT_EQ(support(p.allocation, 1), 2u);
    const auto rows = p.allocation.row_sums();
    EXPECT_EQ(rows[0], rows[1]);
}

TEST(Partition, PlsDefaultRampAndSlsNesting) {
    const auto ds = balanced(6, 300);
    PartitionSpec pls;
    pls.regime = Regime::Pls;
    const auto a = partition(ds, pls).allocation;
    for (std::size_t i = 1; i < a.rows(); ++i) EXPECT_GE(support(a, i), support(a, i - 1));
    const auto rows = a.row_sums();
    for (auto r : rows) EXPECT_EQ(r, rows.front());

    PartitionSpec sls;
    sls.regime = Regime::Sls;
    const auto s = partition(ds, sls).allocation;
    const auto srows = s.row_sums();
    for (std::size_t i = 1; i < s.rows(); ++i) {
        EXPECT_GE(support(s, i), support(s, i - 1));
        EXPECT_GT(srows[i], srows[i - 1]);
    }
}

TEST(Partition, InfeasibleRequestIsAllocationError) {
    const auto ds = balanced(4, 10);
    PartitionSpec spec;
    spec.regime = Regime::Pls;
    spec.clients = 2;
    spec.classes_per_client = {2, 2};
    spec.samples_per_client = 1000;
    EXPECT_THROW(partition(ds, spec), AllocationError);
}

TEST(Partition, MaverickOwnsRareColumn) {
    const auto ds = balanced(6, 120);
    PartitionSpec spec;
    spec.regime = Regime::Maverick;
    spec.rare_classes = {5};
    spec.maverick_client = 4;
    const auto p = maverick_freerider_split(ds, spec);
    expect_tallies(ds, p);
    for (std::size_t i = 0; i < 5; ++i) {
        if (i == 4) {
            EXPECT_EQ(p.allocation(i, 5), 120u);
            EXPECT_EQ(p.allocation.row_sums()[i], 120u);
        } else {
            EXPECT_EQ(p.allocation(i, 5), 0u);
        }
    }
}

TEST(Partition, RareClassAbsentIsAllocationError) {
    auto ds = balanced(4, 20);
    ds.num_classes = 5;  // class 5 has no samples
    PartitionSpec spec;
    spec.regime = Regime::Maverick;
    spec.rare_classes = {4};
    EXPECT_THROW(partition(ds, spec), AllocationError);
}

TEST(Partition, FreeRiderBudgetOnePercentOfAverageClient) {
    // 4010 samples, 4 honest clients: others average (4010 - 10) / 4 = 1000, budget 10.
    const auto ds = balanced(5, 802);
    PartitionSpec spec;
    spec.regime = Regime::FreeRider;
    spec.free_rider_client = 0;
    const auto p = partition(ds, spec);
    expect_tallies(ds, p);
    const auto rows = p.allocation.row_sums();
    EXPECT_EQ(rows[0], 10u);
    EXPECT_EQ(std::accumulate(rows.begin() + 1, rows.end(), std::size_t{0}) / 4, 1000u);
}

TEST(Partition, FreeRiderPlusMaverickBothHold) {
    const auto ds = balanced(6, 600);
    PartitionSpec spec;
    spec.regime = Regime::FreeRiderMaverick;
    spec.rare_classes = {4, 5};
    spec.maverick_client = 4;
    spec.free_rider_client = 0;
    const auto p = partition(ds, spec);
    expect_tallies(ds, p);
    for (std::size_t c : {4u, 5u}) {
        EXPECT_EQ(p.allocation(4, c), 600u);
        for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(p.allocation(i, c), 0u);
    }
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(p.allocation(4, c), 0u);
    const auto rows = p.allocation.row_sums();
    const Real others = static_cast<Real>(rows[1] + rows[2] + rows[3] + rows[4]) / 4.0;
    EXPECT_NEAR(static_cast<Real>(rows[0]), 0.01 * others, 1.0);
}

TEST(Partition, OverlappingRareAndFreeRiderClassesRejected) {
    const auto ds = balanced(4, 50);
    PartitionSpec spec;
    spec.regime = Regime::FreeRiderMaverick;
    spec.rare_classes = {3};
    spec.maverick_client = 1;
    spec.free_rider_client = 0;
    spec.free_rider_classes = {2, 3};
    EXPECT_THROW(partition(ds, spec), ConfigError);
}
