#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "feddah/gradcheck.hpp"
#include "feddah/hypernet.hpp"

using namespace feddah;

namespace {

TargetArchitecture toy_arch() {
    TargetArchitecture arch;
    arch.layers = {{1, 2, 3, Activation::kRelu}, {2, 2, 3, Activation::kSigmoid}};
    return arch;
}

}  // namespace

TEST_CASE("register_task") {
    SUBCASE("deterministic per (task, seed)") {
        TaskRegistry r1(16), r2(16);
        const TaskIdentity& a = r1.register_task(3, 99);
        const TaskIdentity& b = r2.register_task(3, 99);
        CHECK(a.z.data == b.z.data);
    }
    SUBCASE("duplicate registration rejected") {
        TaskRegistry r(8);
        r.register_task(1, 0);
        CHECK_THROWS_AS(r.register_task(1, 0), RegistrationError);
    }
    SUBCASE("sigma zero gives the constant mu vector") {
        TaskRegistry r(8);
        const TaskIdentity& id = r.register_task(4, 123, std::nullopt, 0.0);
        for (double v : id.z.data) CHECK(v == 4.0);
    }
    SUBCASE("means concentrate around the task id") {
        TaskRegistry r(16);
        const TaskIdentity& t1 = r.register_task(1, 7);
        const TaskIdentity& t2 = r.register_task(2, 7);
        double m1 = 0.0, m2 = 0.0;
        for (double v : t1.z.data) m1 += v;
        for (double v : t2.z.data) m2 += v;
        m1 /= 16.0;
        m2 /= 16.0;
        CHECK(std::fabs(m1 - 1.0) <= 3.0 * 0.1 / 4.0);
        CHECK(std::fabs(m2 - 2.0) <= 3.0 * 0.1 / 4.0);
    }
    SUBCASE("registration is append-only") {
        TaskRegistry r(8);
        const TaskIdentity& first = r.register_task(1, 5);
        std::vector<double> z_before = first.z.data;
        r.register_task(2, 5);
        r.register_task(9, 5);
        CHECK(r.get(1).z.data == z_before);
        CHECK(r.task_ids() == std::vector<int>{1, 2, 9});
        CHECK_THROWS_AS(r.get(42), TaskLookupError);
    }
}

TEST_CASE("generate_layer") {
    SUBCASE("zero weights with constant output bias") {
        LayerSpec spec{3, 2, 3, Activation::kNone};
        GenerationHead head;
        for (int i = 0; i < 3; ++i) {
            head.w_in.push_back(Array({4, 8}));
            head.b_in.push_back(Array({4}));
        }
        head.w_out = Array({3 * 2 * 3, 4});
        head.b_out = Array({3 * 2 * 3});
        for (double& v : head.b_out.data) v = 0.75;
        head.w_bias = Array({2, 4});
        head.b_bias = Array({2});
        GeneratedLayer gen = generate_layer(head, Array({8}), spec);
        CHECK(gen.kernel.shape == std::vector<int>{2, 3, 3, 3});
        for (double v : gen.kernel.data) CHECK(v == 0.75);
        for (double v : gen.bias.data) CHECK(v == 0.0);
    }
    SUBCASE("hand-computed scalar case with f_s = 1") {
        // Two input slices, one output channel, 1x1 kernels, scalar hidden.
        LayerSpec spec{2, 1, 1, Activation::kNone};
        GenerationHead head;
        head.w_in = {Array({1, 1}, {2.0}), Array({1, 1}, {-1.0})};
        head.b_in = {Array({1}, {0.5}), Array({1}, {0.25})};
        head.w_out = Array({1, 1}, {3.0});
        head.b_out = Array({1}, {-0.5});
        head.w_bias = Array({1, 1}, {4.0});
        head.b_bias = Array({1}, {1.0});
        Array embedding({1}, {1.5});
        // a_1 = 2*1.5 + 0.5 = 3.5; a_2 = -1*1.5 + 0.25 = -1.25
        // slice_1 = 3*3.5 - 0.5 = 10; slice_2 = 3*(-1.25) - 0.5 = -4.25
        // bias = 4 * mean(3.5, -1.25) + 1 = 4*1.125 + 1 = 5.5
        GeneratedLayer gen = generate_layer(head, embedding, spec);
        CHECK(gen.kernel.shape == std::vector<int>{1, 2, 1, 1});
        CHECK(gen.kernel.data[0] == 10.0);
        CHECK(gen.kernel.data[1] == -4.25);
        CHECK(gen.bias.data[0] == 5.5);
    }
    SUBCASE("doubling the embedding doubles the kernel when biases are zero") {
        LayerSpec spec{1, 2, 3, Activation::kNone};
        Rng rng(3);
        GenerationHead head;
        head.w_in.push_back(Array({4, 6}));
        for (double& v : head.w_in[0].data) v = rng.uniform(-1, 1);
        head.b_in.push_back(Array({4}));
        head.w_out = Array({18, 4});
        for (double& v : head.w_out.data) v = rng.uniform(-1, 1);
        head.b_out = Array({18});
        head.w_bias = Array({2, 4});
        head.b_bias = Array({2});
        Array e({6});
        for (double& v : e.data) v = rng.uniform(-1, 1);
        Array e2 = scale(e, 2.0);
        GeneratedLayer g1 = generate_layer(head, e, spec);
        GeneratedLayer g2 = generate_layer(head, e2, spec);
        for (size_t i = 0; i < g1.kernel.size(); ++i) {
            CHECK(g2.kernel.data[i] == doctest::Approx(2.0 * g1.kernel.data[i]).epsilon(1e-12));
        }
    }
    SUBCASE("embedding length mismatch") {
        LayerSpec spec{1, 1, 3, Activation::kNone};
        GenerationHead head;
        head.w_in.push_back(Array({2, 4}));
        head.b_in.push_back(Array({2}));
        head.w_out = Array({9, 2});
        head.b_out = Array({9});
        head.w_bias = Array({1, 2});
        head.b_bias = Array({1});
        CHECK_THROWS_AS(generate_layer(head, Array({5}), spec), DimensionError);
    }
}

TEST_CASE("encode_layer") {
    SUBCASE("zero kernel returns the encoder bias") {
        LayerEncoder enc;
        enc.w = Array({4, 18});
        Rng rng(5);
        for (double& v : enc.w.data) v = rng.uniform(-1, 1);
        enc.b = Array({4}, {1, 2, 3, 4});
        Array out = encode_layer(enc, Array({2, 1, 3, 3}));
        CHECK(out.data == std::vector<double>{1, 2, 3, 4});
    }
    SUBCASE("identity-prefix encoder copies the flattened prefix") {
        LayerEncoder enc;
        enc.w = Array({3, 9});
        for (int i = 0; i < 3; ++i) enc.w.data[i * 9 + i] = 1.0;
        enc.b = Array({3});
        Array k({1, 1, 3, 3}, {9, 8, 7, 6, 5, 4, 3, 2, 1});
        Array out = encode_layer(enc, k);
        CHECK(out.data == std::vector<double>{9, 8, 7});
    }
    SUBCASE("random encoder matches the matmul oracle") {
        Rng rng(6);
        LayerEncoder enc;
        enc.w = Array({4, 18});
        for (double& v : enc.w.data) v = rng.uniform(-1, 1);
        enc.b = Array({4});
        for (double& v : enc.b.data) v = rng.uniform(-1, 1);
        Array k({2, 1, 3, 3});
        for (double& v : k.data) v = rng.uniform(-1, 1);
        Array out = encode_layer(enc, k);
        Array expect = add(
            Array({4}, matmul(enc.w, Array({18, 1}, k.data)).data), enc.b);
        CHECK(out.data == expect.data);
    }
}

TEST_CASE("generate_model") {
    TargetArchitecture arch = tinyseg_architecture();
    HyperConfig cfg;
    HyperParams hyper = init_hyper(arch, cfg, 77);
    TaskRegistry reg(cfg.n_z);
    const TaskIdentity& id = reg.register_task(1, 77);

    SUBCASE("shape contract and flatten length") {
        ParameterSet p = generate_model(hyper, id, arch);
        CHECK(p.matches(arch));
        CHECK(flatten(p).size() == 1759);
    }
    SUBCASE("bit-identical across calls") {
        Array a = generate_flat(hyper, id.z, arch);
        Array b = generate_flat(hyper, id.z, arch);
        CHECK(a.data == b.data);
    }
    SUBCASE("changing one identity never changes another task's output") {
        TaskRegistry reg2(cfg.n_z);
        reg2.register_task(1, 77);
        reg2.register_task(2, 123);
        Array before = generate_flat(hyper, reg2.get(1).z, arch);
        TaskRegistry reg3(cfg.n_z);
        reg3.register_task(1, 77);
        reg3.register_task(2, 999);  // different z for task 2
        Array after = generate_flat(hyper, reg3.get(1).z, arch);
        CHECK(before.data == after.data);
    }
    SUBCASE("two-layer chain against a hand-built composition") {
        TargetArchitecture arch2 = toy_arch();
        HyperConfig cfg2;
        cfg2.n_z = 4;
        cfg2.hidden = 3;
        HyperParams h2 = init_hyper(arch2, cfg2, 5);
        Rng rng(9);
        Array z({4});
        for (double& v : z.data) v = rng.normal(1.0, 0.1);
        // Manual chain: layer 1 from z, encode, layer 2 from concat(z, z').
        GeneratedLayer l1 = generate_layer(h2.heads[0], z, arch2.layers[0]);
        Array zp = encode_layer(h2.encoders[0], l1.kernel);
        Array e2({8});
        std::copy(z.data.begin(), z.data.end(), e2.data.begin());
        std::copy(zp.data.begin(), zp.data.end(), e2.data.begin() + 4);
        GeneratedLayer l2 = generate_layer(h2.heads[1], e2, arch2.layers[1]);
        ParameterSet direct = generate_model(h2, z, arch2);
        CHECK(direct.layers[0].kernel.data == l1.kernel.data);
        CHECK(direct.layers[0].bias.data == l1.bias.data);
        CHECK(direct.layers[1].kernel.data == l2.kernel.data);
        CHECK(direct.layers[1].bias.data == l2.bias.data);
    }
    SUBCASE("superposition in the output projections") {
        // The generated weights are affine in every Wo jointly; check
        // f(Wo=A+B) = f(A) + f(B) - f(0) with everything else fixed.
        HyperParams ha = hyper;
        HyperParams hb = hyper;
        HyperParams hsum = hyper;
        HyperParams hzero = hyper;
        Rng rng(13);
        for (size_t j = 0; j < hyper.heads.size(); ++j) {
            for (size_t i = 0; i < hyper.heads[j].w_out.size(); ++i) {
                double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
                ha.heads[j].w_out.data[i] = a;
                hb.heads[j].w_out.data[i] = b;
                hsum.heads[j].w_out.data[i] = a + b;
                hzero.heads[j].w_out.data[i] = 0.0;
            }
        }
        Array fa = generate_flat(ha, id.z, arch);
        Array fb = generate_flat(hb, id.z, arch);
        Array fs = generate_flat(hsum, id.z, arch);
        Array f0 = generate_flat(hzero, id.z, arch);
        for (size_t i = 0; i < fs.size(); ++i) {
            double expect = fa.data[i] + fb.data[i] - f0.data[i];
            double denom = std::max({std::fabs(expect), std::fabs(fs.data[i]), 1.0});
            CHECK(std::fabs(fs.data[i] - expect) / denom <= 1e-12);
        }
    }
    SUBCASE("fit-loss gradient matches finite differences") {
        TargetArchitecture arch2 = toy_arch();
        HyperConfig cfg2;
        cfg2.n_z = 4;
        cfg2.hidden = 4;
        HyperParams h2 = init_hyper(arch2, cfg2, 6);
        Rng rng(10);
        Array z({4});
        for (double& v : z.data) v = rng.normal(2.0, 0.1);
        Array target({static_cast<int>(arch2.param_count())});
        for (double& v : target.data) v = rng.uniform(-0.4, 0.4);
        GradCheckReport rep = grad_check(
            [&](Tape& t, const std::vector<NodeId>& ids) {
                NodeId gen = generate_flat_taped(t, h2, ids, z, arch2);
                return t.l2s(gen, t.constant(target));
            },
            h2.to_arrays(), 1e-5);
        CHECK(rep.max_rel_error <= 1e-4);
    }
}

TEST_CASE("snapshot semantics") {
    TargetArchitecture arch = toy_arch();
    HyperConfig cfg;
    cfg.n_z = 4;
    cfg.hidden = 4;
    HyperParams hyper = init_hyper(arch, cfg, 3);
    Rng rng(4);
    Array z({4});
    for (double& v : z.data) v = rng.normal(1.0, 0.1);

    HyperParams frozen = snapshot(hyper);
    Array before = generate_flat(frozen, z, arch);
    CHECK(l2_squared(before, generate_flat(hyper, z, arch)) == 0.0);

    // Perturb the live parameters; the snapshot output must not move.
    hyper.heads[0].w_out.data[0] += 1.0;
    Array after = generate_flat(frozen, z, arch);
    CHECK(before.data == after.data);
    CHECK(l2_squared(before, generate_flat(hyper, z, arch)) > 0.0);

    HyperParams twice = snapshot(snapshot(frozen));
    CHECK(generate_flat(twice, z, arch).data == before.data);
}

TEST_CASE("checkpoint round trip is exact") {
    TargetArchitecture arch = tinyseg_architecture();
    HyperConfig cfg;
    HyperParams hyper = init_hyper(arch, cfg, 2024);
    TaskRegistry reg(cfg.n_z);
    reg.register_task(1, 55);
    reg.register_task(7, 55);

    std::string path =
        (std::filesystem::temp_directory_path() / "feddah_ckpt_test.json").string();
    save_checkpoint(hyper, reg, path);
    auto [loaded, loaded_reg] = load_checkpoint(path);
    std::remove(path.c_str());

    std::vector<Array> a = hyper.to_arrays();
    std::vector<Array> b = loaded.to_arrays();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].data == b[i].data);
    CHECK(loaded_reg.task_ids() == reg.task_ids());
    CHECK(loaded_reg.get(7).z.data == reg.get(7).z.data);
    CHECK(loaded_reg.get(7).mu == 7.0);

    TaskRegistry fresh(cfg.n_z);
    const TaskIdentity& id = fresh.register_task(1, 55);
    CHECK(generate_flat(loaded, id.z, arch).data == generate_flat(hyper, id.z, arch).data);
}
