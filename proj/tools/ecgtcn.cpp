// ecgtcn: single entry point for the ECG5000 TCN pipeline.
// Subcommands: train, eval, quantize, infer, report, tileplan, codegen.
// Exit codes: 0 ok, 1 usage, 2 data/container, 3 divergence, 4 infeasible plan.

#include <CLI11.hpp>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <thread>

#include "ecgtcn/codegen.hpp"
#include "ecgtcn/cost.hpp"
#include "ecgtcn/model_io.hpp"
#include "ecgtcn/quant.hpp"
#include "ecgtcn/tiling.hpp"
#include "ecgtcn/train.hpp"

namespace {

using namespace ecgtcn;

void print_confusion(const ConfusionMatrix& cm) {
    std::cout << "confusion matrix (rows = true, cols = predicted):\n";
    for (int t = 1; t <= cm.classes(); ++t) {
        std::cout << "  " << class_names()[static_cast<std::size_t>(t - 1)] << ":";
        for (int p = 1; p <= cm.classes(); ++p) std::cout << ' ' << cm.at(t, p);
        std::cout << '\n';
    }
}

void print_metrics(const ConfusionMatrix& cm) {
    std::cout << std::fixed << std::setprecision(3);
    std::cout << "accuracy          " << accuracy(cm) << '\n';
    std::cout << "balanced accuracy " << balanced_accuracy(cm)
              << "  (macro-averaged per-class recall; classes without true"
                 " members excluded)\n";
    print_confusion(cm);
}

std::vector<Beat> load_beat_lines(const std::string& path, int expected_len) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open beat file: " + path);
    std::vector<Beat> beats;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        for (auto& ch : line) {
            if (ch == ',' || ch == '\t') ch = ' ';
        }
        std::istringstream is(line);
        std::vector<double> vals;
        double v;
        while (is >> v) vals.push_back(v);
        if (vals.empty()) continue;
        std::size_t offset = 0;
        if (vals.size() == static_cast<std::size_t>(expected_len) + 1) {
            offset = 1;  // leading label field, ignored
        } else if (vals.size() != static_cast<std::size_t>(expected_len)) {
            throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(expected_len) + " values");
        }
        Beat b;
        b.label = 0;
        b.samples.resize(static_cast<std::size_t>(expected_len));
        for (int j = 0; j < expected_len; ++j) {
            b.samples[static_cast<std::size_t>(j)] =
                static_cast<float>(vals[offset + static_cast<std::size_t>(j)]);
        }
        beats.push_back(std::move(b));
    }
    return beats;
}

ConfusionMatrix evaluate_quantized(const QNetwork& net, const Dataset& ds, int jobs) {
    std::vector<int> preds(ds.size()), labels(ds.size());
    const auto score_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            preds[i] = qpredict(net, ds.beats[i]).class_id;
            labels[i] = ds.beats[i].label;
        }
    };
    if (jobs <= 1 || ds.size() < 2) {
        score_range(0, ds.size());
    } else {
        const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), ds.size());
        const std::size_t chunk = (ds.size() + workers - 1) / workers;
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t lo = w * chunk;
            const std::size_t hi = std::min(ds.size(), lo + chunk);
            if (lo < hi) pool.emplace_back(score_range, lo, hi);
        }
        for (auto& t : pool) t.join();
    }
    return confusion(preds, labels, ds.class_count);
}

int cmd_train(const std::string& train_path, const std::string& out_model, int epochs, int batch,
              double lr, double dropout, std::uint64_t seed, double val_fraction) {
    const Dataset full = load_ucr(train_path);
    const auto [tr, val] = stratified_holdout(full, val_fraction, seed);
    std::cout << "loaded " << full.size() << " beats; " << tr.size() << " train / " << val.size()
              << " validation\n";

    ArchConfig cfg;
    cfg.dropout_p = static_cast<float>(dropout);
    TrainConfig tc;
    tc.epochs = epochs;
    tc.batch_size = batch;
    tc.lr = lr;
    tc.seed = seed;

    Network<float> net = build_ecg_tcn<float>(cfg, seed);
    std::cout << "epoch    loss      val_acc\n";
    const auto result = train<float>(net, tr, val, tc, [](const EpochStats& st) {
        std::cout << std::setw(5) << st.epoch << std::fixed << std::setprecision(4)
                  << std::setw(10) << st.mean_loss << std::setw(10) << std::setprecision(3)
                  << st.val_accuracy << '\n';
    });
    if (result.best_epoch > 0) {
        std::cout << "selected epoch " << result.best_epoch << " (val accuracy " << std::fixed
                  << std::setprecision(3) << result.best_val_accuracy << ")\n";
    } else {
        std::cout << "no training epochs ran; writing the initialized network\n";
    }
    Container container = to_container(result.net);
    container.meta["train_epochs"] = std::to_string(epochs);
    container.meta["train_batch"] = std::to_string(batch);
    container.meta["train_lr"] = std::to_string(lr);
    container.meta["train_seed"] = std::to_string(seed);
    container.meta["train_val_fraction"] = std::to_string(val_fraction);
    write_container(out_model, container);
    std::cout << "wrote " << out_model << '\n';
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& test_path, int jobs) {
    const Container c = read_container(model_path);
    const Dataset ds = load_ucr(test_path);
    if (c.quantized()) {
        std::cout << "quantized=1\n";
        const QNetwork net = qnetwork_from(c);
        print_metrics(evaluate_quantized(net, ds, jobs));
    } else {
        const Network<float> net = float_network_from(c);
        print_metrics(evaluate(net, ds, jobs));
    }
    return 0;
}

int cmd_quantize(const std::string& model_in, const std::string& calib_path,
                 const std::string& model_out) {
    const Container c = read_container(model_in);
    if (c.quantized()) throw DataError(model_in + " is already quantized");
    const Dataset calib = load_ucr(calib_path);
    if (calib.empty()) throw DataError("calibration dataset " + calib_path + " is empty");

    const Network<float> net = float_network_from(c);
    const Network<float> folded = fold_batchnorm(net);
    const ActivationRanges ranges = calibrate(folded, calib);
    const QNetwork qnet = quantize_network(folded, ranges);

    std::cout << "calibrated on " << calib.size() << " beats (plain min/max, no clipping)\n";
    std::cout << "edge                     scale        zero_point\n";
    for (const auto& [name, range] : ranges.edges) {
        const QuantParams qp = quant_params_from_range(range.first, range.second);
        std::cout << "  " << std::left << std::setw(22) << name << std::scientific
                  << std::setprecision(4) << qp.scale << "  " << std::setw(0) << qp.zero_point
                  << '\n';
    }
    std::cout << "layer weight scales (per-tensor symmetric):\n";
    const auto print_w = [](const std::string& name, float scale) {
        std::cout << "  " << std::left << std::setw(22) << name << std::scientific
                  << std::setprecision(4) << scale << '\n';
    };
    print_w("entry", qnet.entry.w_scale);
    for (std::size_t i = 0; i < qnet.blocks.size(); ++i) {
        const std::string p = "block" + std::to_string(i) + ".";
        print_w(p + "conv1", qnet.blocks[i].conv1.w_scale);
        print_w(p + "conv2", qnet.blocks[i].conv2.w_scale);
        if (qnet.blocks[i].skip) print_w(p + "skip", qnet.blocks[i].skip->w_scale);
    }
    print_w("head", qnet.head.w_scale);
    save_model(model_out, qnet);
    std::cout << "wrote " << model_out << '\n';
    return 0;
}

int cmd_infer(const std::string& model_path, const std::string& beat_path) {
    const Container c = read_container(model_path);
    const int input_len = static_cast<int>(c.meta_long("input_len"));
    const auto beats = load_beat_lines(beat_path, input_len);
    if (c.quantized()) {
        const QNetwork net = qnetwork_from(c);
        for (const auto& b : beats) {
            const QPrediction p = qpredict(net, b);
            std::cout << class_names()[static_cast<std::size_t>(p.class_id - 1)] << "  logits:";
            for (auto v : p.logits) std::cout << ' ' << v;
            std::cout << '\n';
        }
    } else {
        const Network<float> net = float_network_from(c);
        for (const auto& b : beats) {
            const Vec<float> logits = forward_eval(net, beat_to_map<float>(b));
            Eigen::Index best = 0;
            logits.maxCoeff(&best);
            std::cout << class_names()[static_cast<std::size_t>(best)] << "  logits:";
            for (Eigen::Index o = 0; o < logits.size(); ++o) {
                std::cout << ' ' << std::fixed << std::setprecision(4) << logits[o];
            }
            std::cout << '\n';
        }
    }
    return 0;
}

int cmd_report(const std::string& model_path) {
    const Container c = read_container(model_path);
    const ArchConfig cfg = arch_from_meta(c);
    if (c.quantized()) {
        const QNetwork qnet = qnetwork_from(c);
        std::cout << "quantized=1\n" << format_cost_report(cost_report(cfg, &qnet), true);
    } else {
        std::cout << format_cost_report(cost_report(cfg, nullptr), false);
    }
    return 0;
}

int cmd_tileplan(const std::string& model_path, const std::string& budget_text,
                 bool double_buffer, const std::string& out_path) {
    const Container c = read_container(model_path);
    if (!c.quantized()) throw DataError("tileplan needs a quantized model");
    const QNetwork net = qnetwork_from(c);
    const std::int64_t budget = parse_budget(budget_text);
    const TilePlan plan = plan_tiles(net, budget, double_buffer);
    std::cout << format_tile_plan(plan);
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw DataError("cannot write " + out_path);
        out << serialize_tile_plan(plan);
        std::cout << "wrote " << out_path << '\n';
    }
    return 0;
}

int cmd_codegen(const std::string& model_path, const std::string& out_dir, int golden,
                const std::string& data_path, bool zero_stuffed, std::uint64_t seed) {
    const Container c = read_container(model_path);
    if (!c.quantized()) throw DataError("codegen needs a quantized model");
    const QNetwork net = qnetwork_from(c);

    CodegenOptions opts;
    opts.native_dilation = !zero_stuffed;
    const SourceBundle bundle = emit_source(net, opts);
    write_bundle(bundle, out_dir);
    std::cout << "wrote net.h, net.c, main.c under " << out_dir << " ("
              << bundle.const_bytes << " constant bytes, "
              << (opts.native_dilation ? "native dilation" : "zero-stuffed kernels") << ")\n";

    if (golden > 0) {
        if (data_path.empty()) {
            throw UsageError("--golden needs --data to sample beats from");
        }
        const Dataset ds = load_ucr(data_path);
        const std::string text = emit_golden_vectors(net, ds, golden, seed);
        const auto path = std::filesystem::path(out_dir) / "golden.txt";
        std::ofstream out(path);
        if (!out) throw DataError("cannot write " + path.string());
        out << text;
        std::cout << "wrote " << golden << " golden vectors to " << path.string() << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ECG-TCN pipeline: train, evaluate, quantize, run, account, tile, emit C"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value file overriding defaults");

    std::string train_path, test_path, model_path, model_out, calib_path, beat_path;
    std::string out_dir, budget = "80kB", plan_out, data_path;
    int epochs = 20, batch = 30, jobs = 1, golden = 100;
    double lr = 0.001, dropout = 0.3, val_fraction = 0.1;
    std::uint64_t seed = 0;
    bool no_double_buffer = false, zero_stuffed = false;

    auto* train_cmd = app.add_subcommand("train", "train the float TCN on a UCR-format file");
    train_cmd->add_option("--train", train_path, "training data (UCR format)")->required();
    train_cmd->add_option("--out", model_out, "output model container")->required();
    train_cmd->add_option("--epochs", epochs, "training epochs");
    train_cmd->add_option("--batch", batch, "minibatch size");
    train_cmd->add_option("--lr", lr, "Adam learning rate");
    train_cmd->add_option("--dropout", dropout, "dropout probability");
    train_cmd->add_option("--seed", seed, "RNG seed");
    train_cmd->add_option("--val-fraction", val_fraction, "stratified holdout fraction");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a model on a labeled file");
    eval_cmd->add_option("model", model_path, "model container")->required();
    eval_cmd->add_option("--test", test_path, "labeled data (UCR format)")->required();
    eval_cmd->add_option("--jobs", jobs, "parallel evaluation threads");

    auto* quant_cmd = app.add_subcommand("quantize", "fold BN, calibrate, and write INT-8 model");
    quant_cmd->add_option("model", model_path, "float model container")->required();
    quant_cmd->add_option("--calib", calib_path, "calibration data (UCR format)")->required();
    quant_cmd->add_option("--out", model_out, "output quantized container")->required();

    auto* infer_cmd = app.add_subcommand("infer", "classify beats from a file");
    infer_cmd->add_option("model", model_path, "model container")->required();
    infer_cmd->add_option("beats", beat_path, "one beat per line (optional leading label)")
        ->required();

    auto* report_cmd = app.add_subcommand("report", "parameters, MACs, and memory accounting");
    report_cmd->add_option("model", model_path, "model container")->required();

    auto* tile_cmd = app.add_subcommand("tileplan", "plan two-level-memory tiled execution");
    tile_cmd->add_option("model", model_path, "quantized model container")->required();
    tile_cmd->add_option("--budget", budget, "L1 budget (bytes or kB, default 80kB)");
    tile_cmd->add_flag("--no-double-buffer", no_double_buffer, "disable double buffering");
    tile_cmd->add_option("--out", plan_out, "write machine-readable plan here");

    auto* code_cmd = app.add_subcommand("codegen", "emit self-contained C99 inference sources");
    code_cmd->add_option("model", model_path, "quantized model container")->required();
    code_cmd->add_option("--out-dir", out_dir, "output directory")->required();
    code_cmd->add_option("--golden", golden, "number of golden vectors (0 to skip)");
    code_cmd->add_option("--data", data_path, "dataset to sample golden beats from");
    code_cmd->add_flag("--zero-stuffed", zero_stuffed, "emit zero-stuffed kernels instead of native dilation");
    code_cmd->add_option("--seed", seed, "golden-vector sampling seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (train_cmd->parsed()) {
            return cmd_train(train_path, model_out, epochs, batch, lr, dropout, seed,
                             val_fraction);
        }
        if (eval_cmd->parsed()) return cmd_eval(model_path, test_path, jobs);
        if (quant_cmd->parsed()) return cmd_quantize(model_path, calib_path, model_out);
        if (infer_cmd->parsed()) return cmd_infer(model_path, beat_path);
        if (report_cmd->parsed()) return cmd_report(model_path);
        if (tile_cmd->parsed()) {
            return cmd_tileplan(model_path, budget, !no_double_buffer, plan_out);
        }
        if (code_cmd->parsed()) {
            return cmd_codegen(model_path, out_dir, golden, data_path, zero_stuffed, seed);
        }
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const DivergedError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const CapacityError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
