#include "feddah/runner.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "feddah/gradcheck.hpp"
#include "feddah/npy.hpp"

namespace feddah {

RunResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    Dataset dataset = generate_dataset(cfg.data, cfg.fed.seed);
    TargetArchitecture arch = tinyseg_architecture();
    arch.layers.back().n_out = cfg.fed.num_tasks;
    RunResult result;
    result.logs = run_federation(cfg.fed, dataset, arch);
    result.records = to_records(cfg.run_id(), mode_name(cfg.fed.mode), result.logs);
    return result;
}

RunResult run_and_write(const ExperimentConfig& cfg) {
    RunResult result = run_experiment(cfg);
    write_metrics(result.records, cfg.out_dir, cfg.fed.num_tasks);
    write_summary(cfg, result.records, cfg.out_dir);
    emit_plot(result.records, cfg.out_dir);
    return result;
}

void write_dataset_npy(const ExperimentConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    Dataset dataset = generate_dataset(cfg.data, cfg.fed.seed);
    std::filesystem::create_directories(out_dir);
    nlohmann::json index;
    index["seed"] = cfg.fed.seed;
    index["config"] = config_to_json(cfg);
    nlohmann::json clients = nlohmann::json::array();
    for (size_t c = 0; c < dataset.clients.size(); ++c) {
        const ClientData& data = dataset.clients[c];
        auto dump = [&](const std::vector<SegBatch>& batches, const std::string& stem) {
            int n = static_cast<int>(batches.size());
            std::vector<double> images, masks;
            for (const SegBatch& b : batches) {
                images.insert(images.end(), b.images.data.begin(), b.images.data.end());
                masks.insert(masks.end(), b.masks.data.begin(), b.masks.data.end());
            }
            std::string img_name = stem + "_images.npy";
            std::string msk_name = stem + "_masks.npy";
            write_npy((std::filesystem::path(out_dir) / img_name).string(),
                      {n, 1, dataset.height, dataset.width}, images);
            write_npy((std::filesystem::path(out_dir) / msk_name).string(),
                      {n, dataset.num_classes, dataset.height, dataset.width}, masks);
            return std::make_pair(img_name, msk_name);
        };
        std::string stem = "client" + std::to_string(c + 1);
        auto [tri, trm] = dump(data.train, stem + "_train");
        auto [tei, tem] = dump(data.test, stem + "_test");
        clients.push_back({{"client", c + 1},
                           {"train_images", tri},
                           {"train_masks", trm},
                           {"train_count", data.train.size()},
                           {"test_images", tei},
                           {"test_masks", tem},
                           {"test_count", data.test.size()}});
    }
    index["clients"] = std::move(clients);
    std::ofstream out(std::filesystem::path(out_dir) / "index.json", std::ios::binary);
    if (!out) throw Error("cannot write dataset index.json");
    out << index.dump(1) << "\n";
}

namespace {

bool check_line(std::ostream& out, const char* name, bool ok, const std::string& detail) {
    out << (ok ? "[ ok ] " : "[FAIL] ") << name;
    if (!detail.empty()) out << " (" << detail << ")";
    out << "\n";
    return ok;
}

}  // namespace

int run_self_checks(std::ostream& out) {
    int failures = 0;
    {
        // Hand value: [[1,2],[3,4]] x [[5],[6]].
        Array a({2, 2}, {1, 2, 3, 4});
        Array b({2, 1}, {5, 6});
        Array c = matmul(a, b);
        bool ok = c.data[0] == 17.0 && c.data[1] == 39.0;
        if (!check_line(out, "matmul hand oracle", ok, "")) ++failures;
    }
    {
        Array img({1, 3, 3}, std::vector<double>(9, 1.0));
        Array ker({1, 1, 3, 3}, std::vector<double>(9, 1.0));
        Array bias({1}, {0.0});
        Array o = conv2d(img, ker, bias);
        bool ok = o.data[4] == 9.0 && o.data[0] == 4.0;
        if (!check_line(out, "conv2d summation oracle", ok, "")) ++failures;
    }
    {
        std::vector<double> p{0.5, 0.5, 0.0}, q{0.0, 0.5, 0.5};
        double js = js_divergence_hist(p, q, 1e-8);
        bool ok = std::fabs(js - 0.5) < 1e-6;
        if (!check_line(out, "Jensen-Shannon hand oracle", ok, format_double(js))) ++failures;
    }
    {
        Array p({4}, {1, 1, 0, 0});
        Array m({4}, {0, 1, 1, 0});
        double d = dice_score(p, m);
        bool ok = d == 0.5;
        if (!check_line(out, "dice overlap oracle", ok, format_double(d))) ++failures;
    }
    {
        std::vector<Array> params{Array({1}, {3.0})};
        std::vector<Array> grads{Array({1}, {2.0})};
        AdamState st;
        adam_step(params, grads, st);
        double expect = 3.0 - st.hyper.lr * 2.0 / (2.0 + st.hyper.eps);
        bool ok = std::fabs(params[0].data[0] - expect) < 1e-15;
        if (!check_line(out, "adam first-step oracle", ok, "")) ++failures;
    }
    {
        GradCheckReport rep = grad_check(
            [](Tape& t, const std::vector<NodeId>& ids) {
                NodeId s = t.sigmoid(t.matmul(ids[0], ids[1]));
                return t.sum(t.square(s));
            },
            {Array({3, 2}, {0.1, -0.4, 0.7, 0.3, -0.2, 0.5}), Array({2, 1}, {0.9, -1.1})},
            1e-5);
        bool ok = rep.max_rel_error <= 1e-6;
        if (!check_line(out, "composite gradient vs finite differences", ok,
                        format_double(rep.max_rel_error))) ++failures;
    }
    {
        // End-to-end generation gradient on a toy two-layer setup.
        TargetArchitecture arch;
        arch.layers = {{1, 2, 3, Activation::kRelu}, {2, 2, 3, Activation::kSigmoid}};
        HyperConfig hcfg;
        hcfg.n_z = 4;
        hcfg.hidden = 4;
        HyperParams hyper = init_hyper(arch, hcfg, 11);
        Rng rng(7);
        Array z({4});
        for (double& v : z.data) v = rng.normal(1.0, 0.1);
        Array target({static_cast<int>(arch.param_count())});
        for (double& v : target.data) v = rng.uniform(-0.5, 0.5);
        std::vector<Array> at = hyper.to_arrays();
        GradCheckReport rep = grad_check(
            [&](Tape& t, const std::vector<NodeId>& ids) {
                NodeId gen = generate_flat_taped(t, hyper, ids, z, arch);
                return t.l2s(gen, t.constant(target));
            },
            at, 1e-5);
        bool ok = rep.max_rel_error <= 1e-4;
        if (!check_line(out, "generation loss gradient vs finite differences", ok,
                        format_double(rep.max_rel_error))) ++failures;
    }
    return failures;
}

}  // namespace feddah
