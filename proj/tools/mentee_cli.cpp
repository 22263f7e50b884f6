// Command-line front end for the mentored-training engine.
//
// Exit codes: 0 success, 2 configuration error, 3 data error,
// 4 unrecoverable run (NaN-recovery budget exhausted).

#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mentee/mentee.hpp"

namespace {

using namespace mentee;

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    bool deterministic = false;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool config_required = true) {
    auto* opt = cmd->add_option("--config", f.config_path, "experiment config (JSON)");
    if (config_required) opt->required();
    cmd->add_option("--seed", f.seed, "override the config seed");
    cmd->add_option("--out", f.out, "override the output directory");
    cmd->add_flag("--deterministic", f.deterministic,
                  "byte-reproducible mode (zeroes wall-clock metrics)");
}

ExperimentConfig load_with_overrides(const CommonFlags& f) {
    ExperimentConfig cfg = ExperimentConfig::load(f.config_path);
    if (f.seed) cfg.seed = *f.seed;
    if (f.out) cfg.out_dir = *f.out;
    if (f.deterministic) cfg.deterministic = true;
    return cfg;
}

void print_outcome(const char* task, const TrainOutcome& out) {
    std::printf("%s: %d epochs, %d recoveries", task, out.epochs_run, out.recoveries);
    if (out.has_test)
        std::printf(", final test acc %.4f (best %.4f)", out.final_test_acc, out.best_test_acc);
    std::printf("\n  metrics: %s\n  checkpoint: %s\n", out.metrics_csv.string().c_str(),
                out.last_ckpt.string().c_str());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"mentee: training under per-layer activation-probe supervision"};
    app.require_subcommand(1);

    CommonFlags train_mentor_f, train_mentee_f, pretrain_f, finetune_f, eval_f, grad_f, grid_f,
        export_f;
    std::string eval_checkpoint, export_checkpoint, export_output;
    std::size_t export_layer = 0;

    auto* cmd_mentor = app.add_subcommand("train-mentor", "plain supervised training of the mentor");
    add_common(cmd_mentor, train_mentor_f);
    auto* cmd_mentee = app.add_subcommand("train-mentee", "mentored training of the mentee");
    add_common(cmd_mentee, train_mentee_f);
    auto* cmd_pretrain =
        app.add_subcommand("pretrain-unsupervised", "gullible pretraining on unlabeled data");
    add_common(cmd_pretrain, pretrain_f);
    auto* cmd_finetune =
        app.add_subcommand("finetune-classifier", "retrain the classifier head, features frozen");
    add_common(cmd_finetune, finetune_f);
    auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint on the configured dataset");
    add_common(cmd_eval, eval_f);
    cmd_eval->add_option("--checkpoint", eval_checkpoint, "checkpoint to evaluate")->required();
    auto* cmd_export = app.add_subcommand("export-filters", "write a PGM grid of a layer's filters");
    add_common(cmd_export, export_f, /*config_required=*/false);
    cmd_export->add_option("--checkpoint", export_checkpoint, "checkpoint to read")->required();
    cmd_export->add_option("--layer", export_layer, "layer index")->required();
    cmd_export->add_option("--output", export_output, "output PGM path")->required();
    auto* cmd_gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient fidelity (f64)");
    add_common(cmd_gradcheck, grad_f);
    auto* cmd_grid =
        app.add_subcommand("redaction-grid", "p-sweep with mentored and independent mentees");
    add_common(cmd_grid, grid_f);

    std::string gen_family = "digits", gen_out;
    std::size_t gen_train = 60000, gen_test = 10000;
    std::uint64_t gen_seed = 1;
    auto* cmd_gen = app.add_subcommand("make-data", "generate a synthetic IDX dataset pair");
    cmd_gen->add_option("--family", gen_family, "glyph family: digits|letters");
    cmd_gen->add_option("--train", gen_train, "training sample count");
    cmd_gen->add_option("--test", gen_test, "test sample count");
    cmd_gen->add_option("--seed", gen_seed, "generator seed");
    cmd_gen->add_option("--out", gen_out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_mentor->parsed()) {
            print_outcome("train-mentor", train_mentor(load_with_overrides(train_mentor_f)));
        } else if (cmd_mentee->parsed()) {
            print_outcome("train-mentee", train_mentee(load_with_overrides(train_mentee_f)));
        } else if (cmd_pretrain->parsed()) {
            print_outcome("pretrain-unsupervised",
                          pretrain_unsupervised(load_with_overrides(pretrain_f)));
        } else if (cmd_finetune->parsed()) {
            print_outcome("finetune-classifier",
                          finetune_classifier(load_with_overrides(finetune_f)));
        } else if (cmd_eval->parsed()) {
            const EvalResult r = evaluate_checkpoint(load_with_overrides(eval_f), eval_checkpoint);
            std::printf("accuracy %.4f  mean_loss %.6f\n", r.accuracy, r.mean_loss);
        } else if (cmd_export->parsed()) {
            export_filters(export_checkpoint, export_layer, export_output);
            std::printf("wrote %s\n", export_output.c_str());
        } else if (cmd_gradcheck->parsed()) {
            const GradcheckReport r = run_gradcheck(load_with_overrides(grad_f));
            for (const auto& s : r.settings)
                std::printf("(alpha=%g beta=%g gamma=%g) max rel err %.3e  %s\n", s.weights[0],
                            s.weights[1], s.weights[2], s.max_rel_err, s.pass ? "ok" : "FAIL");
            std::printf("mentor gradients absent: %s\n", r.mentor_gradients_absent ? "yes" : "NO");
            if (!r.pass) return 1;
        } else if (cmd_grid->parsed()) {
            const GridSummary s = redaction_grid(load_with_overrides(grid_f));
            std::printf("grid summary: %s\n", s.csv_path.string().c_str());
            for (const auto& row : s.rows)
                std::printf("  p=%zu %-11s seed=%llu acc=%.4f\n", row.p, row.mode.c_str(),
                            static_cast<unsigned long long>(row.seed), row.final_test_acc);
        } else if (cmd_gen->parsed()) {
            const GlyphFamily family = glyph_family_from_string(gen_family);
            std::filesystem::create_directories(gen_out);
            const std::filesystem::path dir(gen_out);
            SeededRng seeds(gen_seed);
            auto train = make_synth_dataset(family, gen_train, seeds.derive(1).seed());
            auto test = make_synth_dataset(family, gen_test, seeds.derive(2).seed());
            save_idx(train, dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
            save_idx(test, dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
            std::printf("wrote %zu train and %zu test samples under %s\n", gen_train, gen_test,
                        gen_out.c_str());
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const ProbeShapeError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const ArchMismatch& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const UnrecoverableRun& e) {
        std::fprintf(stderr, "unrecoverable run: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
