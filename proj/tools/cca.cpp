// Copyright 2026 The CCA Attention Authors
// SPDX-License-Identifier: Apache-2.0

// cca: verify | bench | train | generate over a JSON run config.
//
// Exit codes: 0 success, 1 failed verification or runtime error,
// 2 config error (unreadable, malformed, unknown key, invalid value).

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cca/bench.hpp"
#include "cca/checkpoint.hpp"
#include "cca/kernels.hpp"
#include "cca/run_config.hpp"
#include "cca/verify.hpp"

namespace {

struct Overrides {
    std::string config;
    std::optional<std::size_t> seq_len;
    std::optional<std::size_t> group_size;
    std::optional<std::size_t> window;
    std::optional<std::uint64_t> seed;
    std::string output;
};

void add_common(CLI::App* cmd, Overrides& o, bool seq_len) {
    cmd->add_option("--config", o.config, "JSON run config")->required();
    if (seq_len) {
        cmd->add_option("--seq-len", o.seq_len, "sequence length (bench: single sweep length; train: window)");
    }
    cmd->add_option("--group-size", o.group_size, "group size g");
    cmd->add_option("--window", o.window, "local window s");
    cmd->add_option("--seed", o.seed, "seed");
    cmd->add_option("--output", o.output, "output path");
}

// generate treats --group-size / --window as decode-time overrides, everything else changes the config.
cca::RunConfig resolve(const Overrides& o, bool window_is_decode_override) {
    cca::RunConfig rc = cca::load_run_config(o.config);
    if (o.seed) {
        rc.seed = *o.seed;
    }
    if (window_is_decode_override) {
        if (o.group_size) {
            rc.generate.g_override = *o.group_size;
        }
        if (o.window) {
            rc.generate.s_override = *o.window;
        }
    } else {
        if (o.group_size) {
            rc.model.attention.group_size = *o.group_size;
        }
        if (o.window) {
            rc.model.attention.local_window = *o.window;
        }
    }
    if (o.seq_len) {
        rc.train.options.seq_len = *o.seq_len;
        rc.bench.lengths = {*o.seq_len};
    }
    if ((rc.generate.g_override && *rc.generate.g_override < 1) ||
        (rc.generate.s_override && *rc.generate.s_override < 1)) {
        throw cca::ConfigError("--group-size and --window must be >= 1");
    }
    rc.finalize();
    std::cout << "resolved config:\n" << rc.to_json().dump(2) << "\n";
    std::cout << "kernels: " << cca::kernels::isa_name(cca::kernels::active_isa()) << "\n\n";
    return rc;
}

int cmd_verify(const Overrides& o) {
    const cca::RunConfig rc = resolve(o, false);
    cca::VerifyOptions options;
    options.attention = rc.model.attention_config();
    options.seed = rc.seed;
    const std::vector<cca::CheckResult> checks = cca::run_verify(options);
    cca::print_checks(std::cout, checks);
    if (!o.output.empty()) {
        std::ofstream out(o.output);
        cca::print_checks(out, checks);
    }
    for (const cca::CheckResult& c : checks) {
        if (!c.passed) {
            std::cerr << "verification failed: " << c.name << " (" << c.detail << ")\n";
            return 1;
        }
    }
    return 0;
}

int cmd_bench(const Overrides& o) {
    const cca::RunConfig rc = resolve(o, false);
    const std::string path = o.output.empty() ? "bench.csv" : o.output;
    const std::vector<cca::BenchRecord> rows = cca::run_suite(rc.bench, path);
    cca::write_csv(std::cout, rows, rc.bench);
    std::cout << "wrote " << rows.size() << " rows to " << path << "\n";
    return 0;
}

int cmd_train(const Overrides& o) {
    const cca::RunConfig rc = resolve(o, false);
    if (rc.train.corpus.empty()) {
        throw cca::ConfigError("train.corpus is not set");
    }
    std::ifstream in(rc.train.corpus, std::ios::binary);
    if (!in) {
        throw cca::Error("cannot read corpus " + rc.train.corpus.string());
    }
    const std::vector<std::uint8_t> corpus{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    cca::ModelParams params = cca::model_init(rc.model);
    const cca::TrainLog log = cca::train(params, corpus, rc.train.options);

    const std::filesystem::path ckpt = o.output.empty() ? rc.train.checkpoint : std::filesystem::path(o.output);
    const std::filesystem::path log_path =
        o.output.empty() ? rc.train.log : std::filesystem::path(o.output + ".loss.csv");
    cca::checkpoint_save(params, ckpt);
    std::ofstream csv(log_path);
    csv << "step,eval_loss,train_loss\n" << std::setprecision(17);
    for (std::size_t step = 0; step < log.eval_loss.size(); ++step) {
        csv << step << ',' << log.eval_loss[step] << ',';
        if (step < log.train_loss.size()) {
            csv << log.train_loss[step];
        }
        csv << '\n';
    }
    std::cout << std::setprecision(6) << "initial loss " << log.initial() << ", final loss " << log.final()
              << " (ratio " << log.final() / log.initial() << ")\n";
    std::cout << "checkpoint " << ckpt.string() << ", loss log " << log_path.string() << "\n";
    return 0;
}

int cmd_generate(const Overrides& o) {
    const cca::RunConfig rc = resolve(o, true);
    const cca::ModelParams params =
        rc.generate.checkpoint.empty() ? cca::model_init(rc.model) : cca::checkpoint_load(rc.generate.checkpoint);
    if (rc.generate.checkpoint.empty()) {
        std::cout << "no checkpoint configured, decoding with an untrained model\n";
    }
    const cca::WindowOverride window{rc.generate.g_override, rc.generate.s_override};
    const std::vector<std::uint32_t> ids =
        cca::generate(params, cca::bytes_to_ids(rc.generate.prompt), rc.generate.n_new, window);
    const std::string text = cca::ids_to_bytes(ids);
    const cca::ModelParams used = cca::with_window(params, window);
    std::cout << "decode g=" << used.config.attention.group_size << " s=" << used.config.attention.local_window
              << "\noutput:\n" << text << "\n";
    if (!o.output.empty()) {
        std::ofstream(o.output, std::ios::binary) << text;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Core-context-aware attention: verification, benchmarks, toy training and decoding"};
    app.require_subcommand(1);
    Overrides o;
    CLI::App* verify = app.add_subcommand("verify", "run the invariant suite and print a pass/fail table");
    CLI::App* bench = app.add_subcommand("bench", "write the FLOP / KV-memory / wall-clock CSV");
    CLI::App* train = app.add_subcommand("train", "train the toy model and write a checkpoint plus loss log");
    CLI::App* gen = app.add_subcommand("generate", "greedy decoding through the KV cache");
    add_common(verify, o, false);
    add_common(bench, o, true);
    add_common(train, o, true);
    add_common(gen, o, false);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*verify) return cmd_verify(o);
        if (*bench) return cmd_bench(o);
        if (*train) return cmd_train(o);
        if (*gen) return cmd_generate(o);
    } catch (const cca::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
