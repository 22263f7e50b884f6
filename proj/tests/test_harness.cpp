#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "mentee/mentee.hpp"

using namespace mentee;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

json mentee_arch(std::size_t hidden = 32, bool dropout = false, bool batchnorm = true) {
    json layers = json::array();
    layers.push_back({{"kind", "dense"}, {"units", hidden}, {"init_std", 0.05}});
    if (batchnorm) layers.push_back({{"kind", "batchnorm"}});
    layers.push_back({{"kind", "relu"}});
    if (dropout) layers.push_back({{"kind", "dropout"}, {"rate", 0.5}});
    layers.push_back({{"kind", "dense"}, {"units", 10}, {"init_std", 0.05}});
    layers.push_back({{"kind", "softmax"}});
    return {{"input", {784}}, {"layers", layers}};
}

// Shared workspace: a small synthetic dataset pair and a 2-epoch mentor.
struct Workspace {
    fs::path dir;
    fs::path train_images, train_labels, test_images, test_labels;
    fs::path mentor_ckpt;

    Workspace() {
        dir = fs::temp_directory_path() / ("mentee_harness_" + std::to_string(::getpid()));
        fs::create_directories(dir / "data");
        auto train = make_synth_dataset(GlyphFamily::digits, 600, 11);
        auto test = make_synth_dataset(GlyphFamily::digits, 200, 12);
        train_images = dir / "data" / "train-images-idx3-ubyte";
        train_labels = dir / "data" / "train-labels-idx1-ubyte";
        test_images = dir / "data" / "t10k-images-idx3-ubyte";
        test_labels = dir / "data" / "t10k-labels-idx1-ubyte";
        save_idx(train, train_images, train_labels);
        save_idx(test, test_images, test_labels);

        json cfg;
        cfg["seed"] = 5;
        cfg["out_dir"] = (dir / "mentor").string();
        cfg["epochs"] = 2;
        cfg["eta0"] = 0.002;
        cfg["mentor"] = {{"arch", mentee_arch(64, true)}};
        cfg["data"] = data_json();
        auto out = train_mentor(ExperimentConfig::from_json(cfg));
        mentor_ckpt = out.last_ckpt;
    }

    json data_json() const {
        return {{"train_images", train_images.string()},
                {"train_labels", train_labels.string()},
                {"test_images", test_images.string()},
                {"test_labels", test_labels.string()}};
    }

    ~Workspace() { fs::remove_all(dir); }
};

Workspace& ws() {
    static Workspace w;
    return w;
}

int dir_counter = 0;
fs::path fresh_dir(const std::string& tag) {
    return ws().dir / (tag + "_" + std::to_string(dir_counter++));
}

} // namespace

TEST(Evaluate, SelfLabeledNetIsPerfect) {
    // label the data with the net's own predictions: accuracy is 1 by
    // construction
    Network<float> net({784}, [] {
        LayerSpec d1;
        d1.kind = "dense";
        d1.units = 16;
        d1.init_std = 0.1;
        LayerSpec r;
        r.kind = "relu";
        LayerSpec d2;
        d2.kind = "dense";
        d2.units = 10;
        d2.init_std = 0.1;
        LayerSpec sm;
        sm.kind = "softmax";
        return std::vector<LayerSpec>{d1, r, d2, sm};
    }());
    SeededRng rng(3);
    net.init(rng);
    auto ds = make_synth_dataset(GlyphFamily::digits, 100, 21);
    auto stats = fit_preprocess(ds);
    ds = apply_preprocess(ds, stats);
    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), 0);
    const auto& probs = net.forward(gather_images(ds, all, {784}), Mode::eval);
    for (std::size_t i = 0; i < ds.size(); ++i)
        (*ds.labels)[i] = static_cast<int>(argmax_row(probs.data() + i * 10, 10));
    auto res = evaluate(net, ds);
    EXPECT_EQ(res.accuracy, 1.0);
}

TEST(Evaluate, ZeroNetIsChanceLevel) {
    json arch = mentee_arch(8, false, false);
    for (auto& l : arch["layers"]) l["init_std"] = 0.0; // all-zero weights: uniform output
    ArchCfg a = ArchCfg::from_json(arch, "arch");
    Network<float> net(a.input, a.layers);
    SeededRng rng(1);
    net.init(rng);
    auto ds = make_synth_dataset(GlyphFamily::digits, 200, 31); // balanced: 20 per class
    auto res = evaluate(net, ds);
    EXPECT_NEAR(res.accuracy, 0.1, 1e-9); // argmax ties resolve to class 0
    EXPECT_NEAR(res.mean_loss, std::log(10.0), 1e-5);
}

TEST(Evaluate, EmptyAndUnlabeledThrow) {
    Network<float> net({784}, ArchCfg::from_json(mentee_arch(8, false, false), "a").layers);
    Dataset empty;
    empty.images = Tensor<float>({0, 1, 28, 28});
    empty.labels = std::vector<int>{};
    EXPECT_THROW(evaluate(net, empty), EmptyDataset);
    Dataset unlabeled = make_synth_dataset(GlyphFamily::digits, 10, 1);
    unlabeled.labels.reset();
    EXPECT_THROW(evaluate(net, unlabeled), UnlabeledDataset);
}

namespace {

json recovery_config(const fs::path& out, int epochs, std::vector<int> inject) {
    json cfg;
    cfg["seed"] = 7;
    cfg["out_dir"] = out.string();
    cfg["epochs"] = epochs;
    cfg["eta0"] = 0.05;
    cfg["optimizer"] = {{"kind", "sgd"}};
    cfg["batch_size"] = 200; // 600 samples -> 3 batches per epoch
    cfg["mentor"] = {{"arch", mentee_arch(16, false, true)}};
    cfg["data"] = ws().data_json();
    if (!inject.empty()) cfg["inject_nan_epochs"] = inject;
    return cfg;
}

} // namespace

TEST(Recovery, RestoresPreviousEpochBitwiseAtTenthEta) {
    // reference: stop right before the injected epoch
    auto ref = train_mentor(ExperimentConfig::from_json(recovery_config(fresh_dir("ref"), 1, {})));
    // injected: epoch 1's last batch poisons the loss, forcing a recovery
    auto inj = train_mentor(ExperimentConfig::from_json(recovery_config(fresh_dir("inj"), 2, {1})));
    EXPECT_EQ(inj.recoveries, 1);

    // reconstruct epoch 1 by hand from the reference checkpoint at eta/10;
    // bitwise equality proves the restore returned to end-of-epoch-0 state
    auto loaded = load_checkpoint(ref.last_ckpt);
    Network<float>& net = loaded.net;
    ExperimentConfig cfg = ExperimentConfig::from_json(recovery_config(fresh_dir("manual"), 2, {}));
    RunData data = load_run_data(cfg, true);
    SeededRng master(cfg.seed);
    BatchPlan plan{cfg.batch_size, master.derive(3).seed(), false};
    auto trainable = net.trainable_params();
    auto opt = OptimState<float>::zero_like(OptKind::sgd, trainable);
    const double eta = cfg.eta0 / 10.0;
    const std::size_t sm = net.softmax_index();
    for (const auto& idx : batch_indices(data.train.size(), plan, 1)) {
        auto x = gather_images(data.train, idx, net.input_shape());
        auto y = gather_labels(data.train, idx);
        const auto& probs = net.forward(x, Mode::train, nullptr);
        auto ce = cross_entropy(probs, y, 1.0);
        ce.d_logits.scale(1.0f);
        net.zero_grads();
        net.backward({{sm - 1, std::move(ce.d_logits)}});
        net.reg_penalty(cfg.l1, cfg.l2);
        opt.step(trainable, eta);
    }
    auto manual = ParamSnapshot<float>::capture(net);
    auto final_loaded = load_checkpoint(inj.last_ckpt);
    auto final_snap = ParamSnapshot<float>::capture(final_loaded.net);
    ASSERT_EQ(manual.values.size(), final_snap.values.size());
    for (std::size_t i = 0; i < manual.values.size(); ++i)
        ASSERT_EQ(manual.values[i], final_snap.values[i]) << "param elem " << i;

    // the metrics row for the re-run epoch logs recoveries=1 and eta/10
    auto m = ParsedMetrics::read(inj.metrics_csv);
    const auto& row = m.rows.at(2); // epoch 2 row (epoch numbering is 1-based in the csv)
    EXPECT_EQ(row[m.col("epoch")], "2");
    EXPECT_EQ(row[m.col("recoveries")], "1");
    EXPECT_DOUBLE_EQ(std::stod(row[m.col("eta")]), 0.05 / 10.0);
}

TEST(Recovery, EpochZeroRestoresInitialWeights) {
    auto init_run = train_mentor(ExperimentConfig::from_json(recovery_config(fresh_dir("e0"), 0, {})));
    auto inj = train_mentor(ExperimentConfig::from_json(recovery_config(fresh_dir("e0i"), 1, {0})));
    EXPECT_EQ(inj.recoveries, 1);

    auto loaded = load_checkpoint(init_run.last_ckpt);
    Network<float>& net = loaded.net;
    ExperimentConfig cfg = ExperimentConfig::from_json(recovery_config(fresh_dir("e0m"), 1, {}));
    RunData data = load_run_data(cfg, true);
    SeededRng master(cfg.seed);
    BatchPlan plan{cfg.batch_size, master.derive(3).seed(), false};
    auto trainable = net.trainable_params();
    auto opt = OptimState<float>::zero_like(OptKind::sgd, trainable);
    const std::size_t sm = net.softmax_index();
    for (const auto& idx : batch_indices(data.train.size(), plan, 0)) {
        auto x = gather_images(data.train, idx, net.input_shape());
        auto y = gather_labels(data.train, idx);
        auto ce = cross_entropy(net.forward(x, Mode::train, nullptr), y, 1.0);
        net.zero_grads();
        net.backward({{sm - 1, std::move(ce.d_logits)}});
        net.reg_penalty(cfg.l1, cfg.l2);
        opt.step(trainable, cfg.eta0 / 10.0);
    }
    auto manual = ParamSnapshot<float>::capture(net);
    auto final_loaded = load_checkpoint(inj.last_ckpt);
    auto final_snap = ParamSnapshot<float>::capture(final_loaded.net);
    ASSERT_EQ(manual.values.size(), final_snap.values.size());
    for (std::size_t i = 0; i < manual.values.size(); ++i) ASSERT_EQ(manual.values[i], final_snap.values[i]);
}

TEST(Recovery, SeventhInjectionAborts) {
    std::vector<int> seven(7, 1);
    EXPECT_THROW(
        train_mentor(ExperimentConfig::from_json(recovery_config(fresh_dir("abort"), 3, seven))),
        UnrecoverableRun);
}

TEST(Recovery, SixInjectionsSurvive) {
    std::vector<int> six(6, 1);
    auto out =
        train_mentor(ExperimentConfig::from_json(recovery_config(fresh_dir("six"), 3, six)));
    EXPECT_EQ(out.recoveries, 6);
    EXPECT_EQ(out.epochs_run, 3);
}

TEST(EarlyStopping, NeverTriggersBeforeConfiguredEpoch) {
    // eta too small to move f32 parameters (and no batch norm, so no state
    // drifts at all): the test loss never improves and the patience counter
    // decides everything
    auto base = [&](const fs::path& out) {
        json cfg = recovery_config(out, 10, {});
        cfg["eta0"] = 1e-30;
        cfg["mentor"] = {{"arch", mentee_arch(16, false, false)}};
        return cfg;
    };
    json gated = base(fresh_dir("es_gate"));
    gated["early_stopping"] = {{"patience", 2}, {"from_epoch", 3}};
    auto g = train_mentor(ExperimentConfig::from_json(gated));
    EXPECT_EQ(g.epochs_run, 5); // streak starts at epoch 3, fires after 2 misses

    // with the default gate at 75, a 10-epoch run never stops early
    auto d = train_mentor(ExperimentConfig::from_json(base(fresh_dir("es_default"))));
    EXPECT_EQ(d.epochs_run, 10);
}

TEST(ZeroEpochRun, WritesInitCheckpointAndOneEvalRow) {
    auto out = train_mentor(ExperimentConfig::from_json(recovery_config(fresh_dir("zero"), 0, {})));
    EXPECT_EQ(out.epochs_run, 0);
    auto m = ParsedMetrics::read(out.metrics_csv);
    ASSERT_EQ(m.rows.size(), 1u);
    EXPECT_EQ(m.rows[0][m.col("epoch")], "0");
    EXPECT_FALSE(m.rows[0][m.col("test_acc")].empty());
    auto loaded = load_checkpoint(out.last_ckpt);
    EXPECT_EQ(loaded.meta.epoch, 0);
}

namespace {

json mentee_config(const fs::path& out, const std::string& personality, int epochs,
                   std::uint64_t seed = 7, bool dropout = true) {
    json cfg;
    cfg["seed"] = seed;
    cfg["out_dir"] = out.string();
    cfg["epochs"] = epochs;
    cfg["eta0"] = 0.002;
    cfg["personality"] = personality;
    cfg["batch_size"] = 200;
    cfg["mentee"] = {{"arch", mentee_arch(16, dropout, true)}};
    cfg["mentor"] = {{"checkpoint", ws().mentor_ckpt.string()}};
    // mentor (64,dropout): dense0 bn1 relu2 dropout3 dense4 softmax5
    cfg["probes"] = json::array({json{{"mentor_layer", 2}, {"mentee_layer", 2}, {"group", "body"}},
                                 json{{"mentor_layer", 5},
                                      {"mentee_layer", dropout ? 5 : 4},
                                      {"group", "softmax"}}});
    cfg["data"] = ws().data_json();
    return cfg;
}

} // namespace

TEST(Determinism, RerunIsByteIdentical) {
    json c1 = mentee_config(fresh_dir("det1"), "obedient", 3);
    c1["deterministic"] = true;
    json c2 = c1;
    c2["out_dir"] = fresh_dir("det2").string();
    auto o1 = train_mentee(ExperimentConfig::from_json(c1));
    auto o2 = train_mentee(ExperimentConfig::from_json(c2));
    EXPECT_EQ(read_file(o1.metrics_csv), read_file(o2.metrics_csv));
    EXPECT_EQ(read_file(o1.last_ckpt), read_file(o2.last_ckpt));
    EXPECT_NE(read_file(o1.metrics_csv), ""); // sanity
}

TEST(Degeneracy, IndependentMenteeEqualsPlainTrainer) {
    // same architecture and seed through both code paths, bitwise
    json plain;
    plain["seed"] = 9;
    plain["out_dir"] = fresh_dir("plain").string();
    plain["epochs"] = 3;
    plain["eta0"] = 0.002;
    plain["batch_size"] = 200;
    plain["deterministic"] = true;
    plain["mentor"] = {{"arch", mentee_arch(16, true, true)}};
    plain["data"] = ws().data_json();
    auto plain_out = train_mentor(ExperimentConfig::from_json(plain));

    json mentored = mentee_config(fresh_dir("indep"), "independent", 3, 9);
    mentored["deterministic"] = true;
    auto mentored_out = train_mentee(ExperimentConfig::from_json(mentored));

    EXPECT_EQ(read_file(plain_out.metrics_csv), read_file(mentored_out.metrics_csv));
    EXPECT_EQ(read_file(plain_out.last_ckpt), read_file(mentored_out.last_ckpt));
}

TEST(FrozenMentor, CheckpointBytesUntouchedByMentoredRun) {
    const std::string before = read_file(ws().mentor_ckpt);
    auto out = train_mentee(ExperimentConfig::from_json(mentee_config(fresh_dir("fz"), "obedient", 2)));
    (void)out;
    EXPECT_EQ(read_file(ws().mentor_ckpt), before);
}

TEST(ScheduleWiring, LoggedWeightsMatchScheduleEval) {
    json cfg = mentee_config(fresh_dir("wire"), "obedient", 3);
    auto out = train_mentee(ExperimentConfig::from_json(cfg));
    auto m = ParsedMetrics::read(out.metrics_csv);
    const std::uint64_t iters_per_epoch = 3; // 600 samples / batch 200
    auto sched = preset(Personality::obedient, 3 * iters_per_epoch);
    for (const auto& row : m.rows) {
        const std::uint64_t t = std::stoull(row[m.col("iteration")]);
        const auto w = sched.eval(t);
        EXPECT_NEAR(std::stod(row[m.col("alpha")]), w[0], 1e-8);
        EXPECT_NEAR(std::stod(row[m.col("beta")]), w[1], 1e-8);
        EXPECT_NEAR(std::stod(row[m.col("gamma")]), w[2], 1e-8);
    }
}

TEST(Mentored, ObedientProbeLossDropsWithinFiveEpochs) {
    // 12 epochs keep epoch 5 inside the mentoring phase (T_m = epoch 6)
    json cfg = mentee_config(fresh_dir("psi5"), "obedient", 12, 7, /*dropout=*/false);
    auto out = train_mentee(ExperimentConfig::from_json(cfg));
    auto m = ParsedMetrics::read(out.metrics_csv);
    auto body_psi = [&](std::size_t row) {
        const std::string cell = m.rows.at(row)[m.col("psi")];
        return std::stod(cell.substr(0, cell.find(';')));
    };
    EXPECT_LT(body_psi(5), body_psi(0));
}

TEST(Pretrain, RunsWithoutLabelsAndPsiDrops) {
    json cfg = mentee_config(fresh_dir("pre"), "gullible", 10, 7, /*dropout=*/false);
    cfg.erase("probes");
    cfg["probes"] = json::array(
        {json{{"mentor_layer", 2}, {"mentee_layer", 2}, {"group", "body"}}});
    cfg["data"].erase("train_labels"); // labels never read
    auto out = pretrain_unsupervised(ExperimentConfig::from_json(cfg));
    ASSERT_EQ(out.initial_psi.size(), 1u);
    ASSERT_EQ(out.last_psi.size(), 1u);
    EXPECT_LT(out.last_psi[0], out.initial_psi[0]);
    EXPECT_EQ(out.epochs_run, 10);
}

TEST(Pretrain, CheckpointLoadsAsMenteeInit) {
    json cfg = mentee_config(fresh_dir("pre2"), "gullible", 2, 7, /*dropout=*/false);
    cfg.erase("probes");
    cfg["probes"] =
        json::array({json{{"mentor_layer", 2}, {"mentee_layer", 2}, {"group", "body"}}});
    auto pre = pretrain_unsupervised(ExperimentConfig::from_json(cfg));

    json ft = mentee_config(fresh_dir("pre3"), "independent", 2, 7, /*dropout=*/false);
    ft["init_checkpoint"] = pre.last_ckpt.string();
    auto out = train_mentee(ExperimentConfig::from_json(ft));
    EXPECT_EQ(out.epochs_run, 2);

    json bad = mentee_config(fresh_dir("pre4"), "independent", 1, 7, /*dropout=*/true);
    bad["init_checkpoint"] = pre.last_ckpt.string();
    EXPECT_THROW(train_mentee(ExperimentConfig::from_json(bad)), ArchMismatch);
}

TEST(Finetune, FrozenLayersBitwiseUnchangedHeadKept) {
    json base = mentee_config(fresh_dir("ft_base"), "independent", 1);
    auto trained = train_mentee(ExperimentConfig::from_json(base));

    json ft;
    ft["seed"] = 13;
    ft["out_dir"] = fresh_dir("ft_run").string();
    ft["epochs"] = 2;
    ft["eta0"] = 0.01;
    ft["batch_size"] = 200;
    ft["init_checkpoint"] = trained.last_ckpt.string();
    ft["data"] = ws().data_json();
    auto out = finetune_classifier(ExperimentConfig::from_json(ft));

    auto before = load_checkpoint(trained.last_ckpt);
    auto after = load_checkpoint(out.last_ckpt);
    // same class count: head keeps its shape (10 units) and warm start
    ASSERT_EQ(after.net.specs().size(), before.net.specs().size());
    std::size_t head = 0;
    auto specs = before.net.specs();
    for (std::size_t i = specs.size(); i-- > 0;)
        if (specs[i].kind == "dense") {
            head = i;
            break;
        }
    bool head_changed = false;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        std::vector<ParamRef<float>> pa, pb;
        before.net.layer(i).params(pa, "p");
        after.net.layer(i).params(pb, "p");
        std::vector<Tensor<float>*> ba, bb;
        before.net.layer(i).buffers(ba);
        after.net.layer(i).buffers(bb);
        if (i < head) {
            for (std::size_t k = 0; k < pa.size(); ++k)
                for (std::size_t e = 0; e < pa[k].value->size(); ++e)
                    ASSERT_EQ((*pa[k].value)[e], (*pb[k].value)[e]) << "layer " << i;
            for (std::size_t k = 0; k < ba.size(); ++k)
                for (std::size_t e = 0; e < ba[k]->size(); ++e)
                    ASSERT_EQ((*ba[k])[e], (*bb[k])[e]) << "layer " << i << " buffer";
        } else {
            for (std::size_t k = 0; k < pa.size(); ++k)
                for (std::size_t e = 0; e < pa[k].value->size(); ++e)
                    if ((*pa[k].value)[e] != (*pb[k].value)[e]) head_changed = true;
        }
    }
    EXPECT_TRUE(head_changed);
}

TEST(Finetune, HeadReinitializedOnClassCountChange) {
    json base = mentee_config(fresh_dir("ft5_base"), "independent", 1);
    auto trained = train_mentee(ExperimentConfig::from_json(base));

    // build a 5-class variant of the dataset
    auto five = make_synth_dataset(GlyphFamily::digits, 300, 44);
    for (auto& l : *five.labels) l %= 5;
    five.class_count = 5;
    const fs::path img = ws().dir / "five-images", lbl = ws().dir / "five-labels";
    save_idx(five, img, lbl);

    json ft;
    ft["seed"] = 13;
    ft["out_dir"] = fresh_dir("ft5_run").string();
    ft["epochs"] = 1;
    ft["eta0"] = 0.01;
    ft["batch_size"] = 200;
    ft["init_checkpoint"] = trained.last_ckpt.string();
    ft["data"] = {{"train_images", img.string()},
                  {"train_labels", lbl.string()},
                  {"class_count", 5}};
    auto out = finetune_classifier(ExperimentConfig::from_json(ft));
    auto after = load_checkpoint(out.last_ckpt);
    auto specs = after.net.specs();
    std::size_t head = 0;
    for (std::size_t i = specs.size(); i-- > 0;)
        if (specs[i].kind == "dense") {
            head = i;
            break;
        }
    EXPECT_EQ(specs[head].units, 5u);
}

TEST(ExportFilters, ConvGridLayoutAndRoundTrip) {
    // 8 conv filters of 5x5: grid is 2 rows x 4 cols -> 11 x 23 pixels
    LayerSpec conv;
    conv.kind = "conv";
    conv.filters = 8;
    conv.kh = conv.kw = 5;
    conv.init_std = 0.1;
    LayerSpec sm;
    sm.kind = "softmax";
    LayerSpec dense;
    dense.kind = "dense";
    dense.units = 10;
    Network<float> net({1, 28, 28}, {conv, dense, sm});
    SeededRng rng(3);
    net.init(rng);
    const fs::path ckpt = ws().dir / "conv.ckpt";
    save_checkpoint(net, ckpt);
    const fs::path pgm = ws().dir / "filters.pgm";
    export_filters(ckpt, 0, pgm);
    GrayImage img = read_pgm(pgm);
    EXPECT_EQ(img.height, 2u * 5 + 1);
    EXPECT_EQ(img.width, 4u * 5 + 3);
    // separators stay black
    for (std::size_t x = 0; x < img.width; ++x) EXPECT_EQ(img.at(5, x), 0);
    for (std::size_t y = 0; y < img.height; ++y) EXPECT_EQ(img.at(y, 5), 0);
}

TEST(ExportFilters, ConstantFilterRendersMidGray) {
    LayerSpec conv;
    conv.kind = "conv";
    conv.filters = 2;
    conv.kh = conv.kw = 3;
    conv.init_std = 0.0; // all-zero (constant) filters
    LayerSpec dense;
    dense.kind = "dense";
    dense.units = 4;
    LayerSpec sm;
    sm.kind = "softmax";
    Network<float> net({1, 8, 8}, {conv, dense, sm});
    SeededRng rng(3);
    net.init(rng);
    const fs::path ckpt = ws().dir / "const.ckpt";
    save_checkpoint(net, ckpt);
    const fs::path pgm = ws().dir / "const.pgm";
    export_filters(ckpt, 0, pgm);
    GrayImage img = read_pgm(pgm);
    EXPECT_EQ(img.at(0, 0), 128);
    EXPECT_EQ(img.at(2, 2), 128);
}

TEST(ExportFilters, DenseSquareAndErrors) {
    json arch = mentee_arch(12, false, false); // layers: dense(784->12), relu, dense(12->10), softmax
    ArchCfg a = ArchCfg::from_json(arch, "arch");
    Network<float> net(a.input, a.layers);
    SeededRng rng(5);
    net.init(rng);
    const fs::path ckpt = ws().dir / "dense.ckpt";
    save_checkpoint(net, ckpt);
    const fs::path pgm = ws().dir / "dense.pgm";
    export_filters(ckpt, 0, pgm); // 784 -> 28x28 tiles, 12 units -> 3x4 grid
    GrayImage img = read_pgm(pgm);
    EXPECT_EQ(img.height, 3u * 28 + 2);
    EXPECT_EQ(img.width, 4u * 28 + 3);
    EXPECT_THROW(export_filters(ckpt, 1, ws().dir / "x.pgm"), NotVisualizable); // relu
    EXPECT_THROW(export_filters(ckpt, 2, ws().dir / "y.pgm"), NotVisualizable); // 12 is not square
}

TEST(Cli, SubcommandsRoundTrip) {
    const fs::path dir = fresh_dir("cli");
    fs::create_directories(dir);
    auto cli = [&](const std::string& args) {
        const std::string cmd =
            std::string("\"") + MENTEE_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return status == -1 ? -1 : WEXITSTATUS(status);
    };
    ASSERT_EQ(cli("make-data --family letters --train 300 --test 100 --seed 4 --out " +
                  (dir / "data").string()),
              0);
    json cfg;
    cfg["seed"] = 2;
    cfg["out_dir"] = (dir / "run").string();
    cfg["epochs"] = 1;
    cfg["batch_size"] = 200;
    cfg["eta0"] = 0.002;
    cfg["mentor"] = {{"arch", mentee_arch(16, false, true)}};
    cfg["data"] = {{"train_images", (dir / "data" / "train-images-idx3-ubyte").string()},
                   {"train_labels", (dir / "data" / "train-labels-idx1-ubyte").string()},
                   {"test_images", (dir / "data" / "t10k-images-idx3-ubyte").string()},
                   {"test_labels", (dir / "data" / "t10k-labels-idx1-ubyte").string()}};
    std::ofstream(dir / "cfg.json") << cfg.dump(2);
    ASSERT_EQ(cli("train-mentor --config " + (dir / "cfg.json").string()), 0);
    EXPECT_EQ(cli("eval --config " + (dir / "cfg.json").string() + " --checkpoint " +
                  (dir / "run" / "last.ckpt").string()),
              0);
    EXPECT_EQ(cli("export-filters --checkpoint " + (dir / "run" / "last.ckpt").string() +
                  " --layer 0 --output " + (dir / "filters.pgm").string()),
              0);
    EXPECT_TRUE(fs::exists(dir / "filters.pgm"));
    ASSERT_EQ(cli(std::string("gradcheck --config ") + CONFIGS_DIR + "/gradcheck.json --out " +
                  (dir / "gc").string()),
              0);
    EXPECT_TRUE(fs::exists(dir / "gc" / "gradcheck.json"));
}

TEST(Config, UnknownKeysRejectedEverywhere) {
    json ok = mentee_config(ws().dir / "cfg_ok", "obedient", 1);
    EXPECT_NO_THROW(ExperimentConfig::from_json(ok));

    json bad1 = ok;
    bad1["typo_key"] = 1;
    EXPECT_THROW(ExperimentConfig::from_json(bad1), ConfigError);

    json bad2 = ok;
    bad2["optimizer"] = {{"kind", "sgd"}, {"momentun", 0.9}};
    EXPECT_THROW(ExperimentConfig::from_json(bad2), ConfigError);

    json bad3 = ok;
    bad3["data"]["foo"] = "bar";
    EXPECT_THROW(ExperimentConfig::from_json(bad3), ConfigError);

    json bad4 = ok;
    bad4["mentee"]["arch"]["layers"][0]["units_typo"] = 3;
    EXPECT_THROW(ExperimentConfig::from_json(bad4), ConfigError);

    json bad5 = ok;
    bad5["probes"][0]["groop"] = "body";
    EXPECT_THROW(ExperimentConfig::from_json(bad5), ConfigError);
}

TEST(Config, ProbeValidationCatchesBadIndices) {
    json cfg = mentee_config(fresh_dir("bad_probe"), "obedient", 1);
    cfg["probes"][0]["mentor_layer"] = 99;
    EXPECT_THROW(train_mentee(ExperimentConfig::from_json(cfg)), ProbeShapeError);
}

TEST(Gradcheck, ConvPairWithConvProbePasses) {
    json cfg;
    cfg["seed"] = 5;
    json mentor_layers = json::array();
    mentor_layers.push_back({{"kind", "conv"}, {"filters", 4}, {"kh", 3}, {"kw", 3}, {"init_std", 0.4}});
    mentor_layers.push_back({{"kind", "relu"}});
    mentor_layers.push_back({{"kind", "maxpool"}});
    mentor_layers.push_back({{"kind", "dense"}, {"units", 5}, {"init_std", 0.4}});
    mentor_layers.push_back({{"kind", "softmax"}});
    json mentee_layers = json::array();
    mentee_layers.push_back({{"kind", "conv"}, {"filters", 2}, {"kh", 3}, {"kw", 3}, {"init_std", 0.4}});
    mentee_layers.push_back({{"kind", "relu"}});
    mentee_layers.push_back({{"kind", "maxpool"}});
    mentee_layers.push_back({{"kind", "dense"}, {"units", 5}, {"init_std", 0.4}});
    mentee_layers.push_back({{"kind", "softmax"}});
    cfg["mentor"] = {{"arch", json{{"input", {1, 8, 8}}, {"layers", mentor_layers}}}};
    cfg["mentee"] = {{"arch", json{{"input", {1, 8, 8}}, {"layers", mentee_layers}}}};
    // conv feature-map probe (4x6x6 vs 2x6x6) plus the softmax probe
    cfg["probes"] = json::array({json{{"mentor_layer", 1}, {"mentee_layer", 1}, {"group", "body"}},
                                 json{{"mentor_layer", 4}, {"mentee_layer", 4}, {"group", "softmax"}}});
    auto report = run_gradcheck(ExperimentConfig::from_json(cfg));
    EXPECT_TRUE(report.mentor_gradients_absent);
    for (const auto& s : report.settings)
        EXPECT_LE(s.max_rel_err, 1e-5) << "(" << s.weights[0] << "," << s.weights[1] << ","
                                       << s.weights[2] << ") worst " << s.worst_param;
}

TEST(Config, ShippedExamplesParse) {
    int checked = 0;
    for (const auto& entry : fs::directory_iterator(CONFIGS_DIR)) {
        if (entry.path().extension() != ".json") continue;
        EXPECT_NO_THROW(ExperimentConfig::load(entry.path())) << entry.path();
        ++checked;
    }
    EXPECT_GE(checked, 6);
}

TEST(Gradcheck, TinyMentorMenteePairPasses) {
    json cfg;
    cfg["seed"] = 3;
    cfg["out_dir"] = fresh_dir("gc").string();
    json mentor_layers = json::array();
    mentor_layers.push_back({{"kind", "dense"}, {"units", 12}, {"init_std", 0.4}});
    mentor_layers.push_back({{"kind", "relu"}});
    mentor_layers.push_back({{"kind", "dense"}, {"units", 8}, {"init_std", 0.4}});
    mentor_layers.push_back({{"kind", "relu"}});
    mentor_layers.push_back({{"kind", "dense"}, {"units", 4}, {"init_std", 0.4}});
    mentor_layers.push_back({{"kind", "softmax"}});
    json mentee_layers = json::array();
    mentee_layers.push_back({{"kind", "dense"}, {"units", 6}, {"init_std", 0.4}});
    mentee_layers.push_back({{"kind", "batchnorm"}});
    mentee_layers.push_back({{"kind", "relu"}});
    mentee_layers.push_back({{"kind", "dense"}, {"units", 4}, {"init_std", 0.4}});
    mentee_layers.push_back({{"kind", "softmax"}});
    cfg["mentor"] = {{"arch", json{{"input", {6}}, {"layers", mentor_layers}}}};
    cfg["mentee"] = {{"arch", json{{"input", {6}}, {"layers", mentee_layers}}}};
    cfg["probes"] = json::array({json{{"mentor_layer", 1}, {"mentee_layer", 2}, {"group", "body"}},
                                 json{{"mentor_layer", 5}, {"mentee_layer", 4}, {"group", "softmax"}}});
    auto report = run_gradcheck(ExperimentConfig::from_json(cfg));
    EXPECT_TRUE(report.mentor_gradients_absent);
    ASSERT_EQ(report.settings.size(), 3u);
    for (const auto& s : report.settings)
        EXPECT_LE(s.max_rel_err, 1e-5) << "(" << s.weights[0] << "," << s.weights[1] << ","
                                       << s.weights[2] << ") worst " << s.worst_param;
    EXPECT_TRUE(report.pass);
    EXPECT_TRUE(fs::exists(fs::path(cfg["out_dir"].get<std::string>()) / "gradcheck.json"));
}
