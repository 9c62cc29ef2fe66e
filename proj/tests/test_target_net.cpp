#include <doctest.h>

#include <cmath>

#include "feddah/gradcheck.hpp"
#include "feddah/target_net.hpp"

using namespace feddah;

namespace {

SegBatch make_batch(Rng& rng, int h, int w, int classes, int supervised) {
    SegBatch b;
    b.images = Array({1, 1, h, w});
    for (double& v : b.images.data) v = rng.uniform(0.0, 1.0);
    b.masks = Array({1, classes, h, w});
    for (double& v : b.masks.data) v = rng.uniform() < 0.2 ? 1.0 : 0.0;
    b.supervised_channel = supervised;
    return b;
}

}  // namespace

TEST_CASE("tinyseg architecture and parameter count") {
    TargetArchitecture arch = tinyseg_architecture();
    arch.validate_for_forward();
    // sum over layers of n_in*n_out*9 + n_out
    size_t expect = (1 * 8 * 9 + 8) + (8 * 8 * 9 + 8) + (8 * 15 * 9 + 15);
    CHECK(expect == 1759);
    CHECK(arch.param_count() == 1759);
}

TEST_CASE("forward") {
    TargetArchitecture arch = tinyseg_architecture();
    SUBCASE("zero parameters give sigmoid(0) = 0.5 everywhere") {
        ParameterSet p = zero_params(arch);
        Array imgs({2, 1, 8, 8});
        Rng rng(4);
        for (double& v : imgs.data) v = rng.uniform(0.0, 1.0);
        Array out = forward(arch, p, imgs);
        CHECK(out.shape == std::vector<int>{2, 15, 8, 8});
        for (double v : out.data) CHECK(v == 0.5);
    }
    SUBCASE("output shape contract") {
        ParameterSet p = init_params(arch, 9);
        Array imgs({3, 1, 32, 32});
        Array out = forward(arch, p, imgs);
        CHECK(out.shape == std::vector<int>{3, 15, 32, 32});
        for (double v : out.data) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
        }
    }
    SUBCASE("single delta-kernel conv layer composes conv and sigmoid") {
        TargetArchitecture one;
        one.layers = {{1, 1, 3, Activation::kSigmoid}};
        ParameterSet p = zero_params(one);
        p.layers[0].kernel.data[4] = 1.7;  // center tap
        Array imgs({1, 1, 1, 1}, {0.6});
        Array out = forward(one, p, imgs);
        CHECK(out.data[0] == sigmoid(Array({1}, {1.7 * 0.6})).data[0]);
    }
    SUBCASE("permutation equivariance over the batch") {
        ParameterSet p = init_params(arch, 10);
        Rng rng(11);
        Array imgs({2, 1, 8, 8});
        for (double& v : imgs.data) v = rng.uniform(0.0, 1.0);
        Array swapped = imgs;
        size_t plane = 64;
        for (size_t i = 0; i < plane; ++i) std::swap(swapped.data[i], swapped.data[plane + i]);
        Array out = forward(arch, p, imgs);
        Array out_swapped = forward(arch, p, swapped);
        size_t oplane = 15 * 64;
        for (size_t i = 0; i < oplane; ++i) {
            CHECK(out.data[i] == out_swapped.data[oplane + i]);
            CHECK(out.data[oplane + i] == out_swapped.data[i]);
        }
    }
    SUBCASE("channel mismatch") {
        ParameterSet p = init_params(arch, 12);
        CHECK_THROWS_AS(forward(arch, p, Array({1, 2, 8, 8})), DimensionError);
    }
}

TEST_CASE("soft dice loss") {
    SUBCASE("perfect binary prediction") {
        Array m({2, 2}, {1, 0, 1, 1});
        CHECK(soft_dice_loss(m, m) <= 1e-5);
    }
    SUBCASE("all-zero prediction against all-ones mask") {
        Array p({2, 2}, {0, 0, 0, 0});
        Array m({2, 2}, {1, 1, 1, 1});
        CHECK(soft_dice_loss(p, m) == doctest::Approx(1.0).epsilon(1e-5));
    }
    SUBCASE("half confidence on an all-ones mask is 1/3") {
        Array p({4}, {0.5, 0.5, 0.5, 0.5});
        Array m({4}, {1, 1, 1, 1});
        CHECK(soft_dice_loss(p, m) == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
    }
    SUBCASE("gradient matches finite differences") {
        Rng rng(13);
        Array p({3, 3});
        for (double& v : p.data) v = rng.uniform(0.05, 0.95);
        Array m({3, 3});
        for (double& v : m.data) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
        GradCheckReport rep = grad_check(
            [&](Tape& t, const std::vector<NodeId>& ids) {
                return soft_dice_loss_taped(t, ids[0], t.constant(m));
            },
            {p}, 1e-5);
        CHECK(rep.max_rel_error <= 1e-6);
    }
    SUBCASE("shape mismatch") {
        CHECK_THROWS_AS(soft_dice_loss(Array({2}), Array({3})), DimensionError);
    }
}

TEST_CASE("dice score") {
    Array a({4}, {1, 1, 0, 0});
    Array b({4}, {0, 1, 1, 0});
    CHECK(dice_score(a, a) == 1.0);
    CHECK(dice_score(Array({2}, {1, 0}), Array({2}, {0, 1})) == 0.0);
    CHECK(dice_score(a, b) == 0.5);
    SUBCASE("|P|=|M|=4 with overlap 2") {
        Array p({8}, {1, 1, 1, 1, 0, 0, 0, 0});
        Array m({8}, {0, 0, 1, 1, 1, 1, 0, 0});
        CHECK(dice_score(p, m) == 0.5);
    }
    SUBCASE("both empty defined as 1") {
        Array e({3}, {0, 0, 0});
        CHECK(dice_score(e, e) == 1.0);
    }
    SUBCASE("symmetry and identity-iff-equal") {
        Rng rng(15);
        for (int trial = 0; trial < 50; ++trial) {
            Array p({16}), m({16});
            for (double& v : p.data) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
            for (double& v : m.data) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
            CHECK(dice_score(p, m) == dice_score(m, p));
            bool equal = p.data == m.data;
            CHECK((dice_score(p, m) == 1.0) == equal);
        }
    }
    SUBCASE("non-binary input rejected") {
        CHECK_THROWS_AS(dice_score(Array({1}, {0.5}), Array({1}, {1.0})), ContractError);
    }
}

TEST_CASE("binarize thresholds strictly above one half") {
    Array p({3}, {0.499, 0.5, 0.501});
    CHECK(binarize(p).data == std::vector<double>{0, 0, 1});
}

TEST_CASE("flatten and unflatten") {
    TargetArchitecture arch = tinyseg_architecture();
    SUBCASE("round trip on random parameters") {
        ParameterSet p = init_params(arch, 21);
        Array flat = flatten(p);
        CHECK(flat.size() == 1759);
        ParameterSet q = unflatten(arch, flat);
        CHECK(l2_squared(p, q) == 0.0);
        for (size_t j = 0; j < p.layers.size(); ++j) {
            CHECK(p.layers[j].kernel.data == q.layers[j].kernel.data);
            CHECK(p.layers[j].bias.data == q.layers[j].bias.data);
        }
    }
    SUBCASE("zero parameters flatten to the zero vector") {
        Array flat = flatten(zero_params(arch));
        for (double v : flat.data) CHECK(v == 0.0);
    }
    SUBCASE("length mismatch") {
        CHECK_THROWS_AS(unflatten(arch, Array({100})), DimensionError);
    }
}

TEST_CASE("train_local") {
    TargetArchitecture arch = tinyseg_architecture();
    SUBCASE("epoch-mean loss does not increase on a seeded 8-image shard") {
        Rng rng(42);
        std::vector<SegBatch> shard;
        for (int i = 0; i < 8; ++i) shard.push_back(make_batch(rng, 16, 16, 15, 3));
        ParameterSet p = init_params(arch, 5);
        AdamState adam;
        TrainReport rep = train_local(arch, p, shard, 5, adam);
        REQUIRE(rep.epoch_mean_loss.size() == 5);
        for (size_t e = 1; e < rep.epoch_mean_loss.size(); ++e) {
            CHECK(rep.epoch_mean_loss[e] <= rep.epoch_mean_loss[e - 1] + 1e-12);
        }
        CHECK(rep.epoch_mean_loss.back() < rep.epoch_mean_loss.front());
    }
    SUBCASE("same seed gives bit-identical parameters") {
        Rng rng(43);
        std::vector<SegBatch> shard;
        for (int i = 0; i < 3; ++i) shard.push_back(make_batch(rng, 8, 8, 15, 1));
        ParameterSet p1 = init_params(arch, 6);
        ParameterSet p2 = init_params(arch, 6);
        AdamState a1, a2;
        train_local(arch, p1, shard, 2, a1);
        train_local(arch, p2, shard, 2, a2);
        CHECK(l2_squared(p1, p2) == 0.0);
        CHECK(flatten(p1).data == flatten(p2).data);
    }
    SUBCASE("saturated predictions move parameters at most eps-scale") {
        // Mask everything, push the final bias far into saturation: the
        // gradient is ~1e-13, which Adam turns into ~1e-8 steps.
        TargetArchitecture one;
        one.layers = {{1, 1, 3, Activation::kSigmoid}};
        ParameterSet p = zero_params(one);
        p.layers[0].bias.data[0] = 30.0;
        SegBatch batch;
        batch.images = Array({1, 1, 4, 4});
        batch.masks = Array({1, 1, 4, 4});
        for (double& v : batch.masks.data) v = 1.0;
        batch.supervised_channel = 0;
        ParameterSet before = p;
        AdamState adam;
        train_local(one, p, {batch}, 5, adam);
        CHECK(std::sqrt(l2_squared(before, p)) <= 1e-6);
    }
    SUBCASE("empty shard rejected") {
        ParameterSet p = init_params(arch, 7);
        AdamState adam;
        CHECK_THROWS_AS(train_local(arch, p, {}, 1, adam), ContractError);
    }
}
