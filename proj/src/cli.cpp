#include "hail/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include "hail/errors.hpp"
#include "hail/eval.hpp"
#include "hail/gradcheck.hpp"
#include "hail/trainer.hpp"

namespace hail {

namespace {

namespace fs = std::filesystem;

real parse_real(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const real x = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" +
                          value + "'");
    }
}

long long parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const long long x = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected an integer, got '" +
                          value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true" || value == "on") return true;
    if (value == "0" || value == "false" || value == "off") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + value +
                      "'");
}

std::vector<real> parse_real_list(const std::string& key, const std::string& value) {
    std::vector<real> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_real(key, item));
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
}

void check_range(const std::string& key, bool ok, const std::string& range) {
    if (!ok) throw ConfigError("config key '" + key + "' out of range; legal: " + range);
}

void apply_key(RunOptions& opt, const std::string& key, const std::string& value) {
    TrainConfig& cfg = opt.train;
    if (key == "alpha") {
        cfg.alpha = parse_real(key, value);
        check_range(key, cfg.alpha >= 0.0 && cfg.alpha <= 1.0, "alpha in [0, 1]");
    } else if (key == "beta") {
        cfg.beta = parse_real(key, value);
        check_range(key, cfg.beta >= 0.0 && cfg.beta < 1.0, "beta in [0, 1)");
    } else if (key == "peers") {
        cfg.peers = static_cast<int>(parse_int(key, value));
        check_range(key, cfg.peers >= 2, "peers >= 2");
    } else if (key == "batch_size") {
        cfg.batch_size = static_cast<int>(parse_int(key, value));
        check_range(key, cfg.batch_size >= 1, "batch_size >= 1");
    } else if (key == "max_len") {
        cfg.max_len = static_cast<int>(parse_int(key, value));
        check_range(key, cfg.max_len >= 3, "max_len >= 3");
    } else if (key == "d") {
        cfg.d = static_cast<int>(parse_int(key, value));
        check_range(key, cfg.d >= 1, "d >= 1");
    } else if (key == "d_h") {
        cfg.d_h = static_cast<int>(parse_int(key, value));
        check_range(key, cfg.d_h >= 1, "d_h >= 1");
    } else if (key == "layers") {
        cfg.layers = static_cast<int>(parse_int(key, value));
        check_range(key, cfg.layers >= 1, "layers >= 1");
    } else if (key == "heads") {
        cfg.heads = static_cast<int>(parse_int(key, value));
        check_range(key, cfg.heads >= 1, "heads >= 1");
    } else if (key == "mask_ratio") {
        cfg.mask_ratio = parse_real(key, value);
        check_range(key, cfg.mask_ratio > 0.0 && cfg.mask_ratio < 1.0,
                    "mask_ratio in (0, 1)");
    } else if (key == "duplication") {
        cfg.duplication = static_cast<int>(parse_int(key, value));
        check_range(key, cfg.duplication >= 1, "duplication >= 1");
    } else if (key == "epochs") {
        cfg.epochs = static_cast<int>(parse_int(key, value));
        check_range(key, cfg.epochs >= 0, "epochs >= 0");
    } else if (key == "warmup_steps") {
        cfg.warmup_steps = static_cast<int>(parse_int(key, value));
        check_range(key, cfg.warmup_steps >= 1, "warmup_steps >= 1");
    } else if (key == "seed") {
        cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
    } else if (key == "distill_mode" || key == "mode") {
        cfg.distill_mode = parse_distill_mode(value);
    } else if (key == "min_seq_len") {
        cfg.min_seq_len = static_cast<int>(parse_int(key, value));
        check_range(key, cfg.min_seq_len >= 1, "min_seq_len >= 1");
    } else if (key == "patience") {
        cfg.patience = static_cast<int>(parse_int(key, value));
        check_range(key, cfg.patience >= 0, "patience >= 0");
    } else if (key == "layer_norm") {
        cfg.layer_norm = parse_bool(key, value);
    } else if (key == "truncate_all_peers") {
        cfg.truncate_all_peers = parse_bool(key, value);
    } else if (key == "eval_negatives") {
        cfg.eval_negatives = static_cast<int>(parse_int(key, value));
        check_range(key, cfg.eval_negatives >= 1, "eval_negatives >= 1");
    } else if (key == "popularity_sampling") {
        cfg.popularity_sampling = parse_bool(key, value);
    } else if (key == "init_std") {
        cfg.init_std = parse_real(key, value);
        check_range(key, cfg.init_std >= 0.0, "init_std >= 0");
    } else if (key == "data_format") {
        if (value == "tsv")
            opt.format = LogFormat::tsv;
        else if (value == "csv")
            opt.format = LogFormat::csv;
        else
            throw ConfigError("config key 'data_format': legal values {tsv, csv}");
        opt.format_from_extension = false;
    } else if (key == "has_header") {
        opt.has_header = parse_bool(key, value);
    } else if (key == "sweep_alpha") {
        opt.sweep_alpha = parse_real_list(key, value);
        for (real a : opt.sweep_alpha)
            check_range(key, a >= 0.0 && a <= 1.0, "values in [0, 1]");
    } else if (key == "sweep_beta") {
        opt.sweep_beta = parse_real_list(key, value);
        for (real b : opt.sweep_beta)
            check_range(key, b >= 0.0 && b < 1.0, "values in [0, 1)");
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

struct Pipeline {
    Vocabulary vocab;
    SequenceBuildResult sequences;
    SplitSet splits;
};

Pipeline build_pipeline(const Command& cmd, const RunOptions& opt) {
    if (cmd.data_path.empty()) throw ConfigError("--data PATH is required");
    LogFormat format = opt.format;
    if (opt.format_from_extension &&
        fs::path(cmd.data_path).extension() == ".csv")
        format = LogFormat::csv;
    const RawEventLog raw = load_event_log(cmd.data_path, format, opt.has_header);
    Pipeline p;
    auto [vocab, filtered] = build_vocabulary(raw, opt.train.min_seq_len);
    p.vocab = std::move(vocab);
    p.sequences = build_sequences(filtered, p.vocab, opt.train.max_len,
                                  opt.train.min_seq_len);
    p.splits = split_leave_one_out(p.sequences.sequences);
    if (p.splits.skipped_generators > 0)
        std::fprintf(stderr, "warning: %d generators shorter than 3 skipped\n",
                     p.splits.skipped_generators);
    return p;
}

std::string grid_value(real x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", x);
    return buf;
}

int run_sweep(const Command& cmd, const RunOptions& opt) {
    const Pipeline pipeline = build_pipeline(cmd, opt);
    std::vector<real> alphas = opt.sweep_alpha;
    if (alphas.empty())
        alphas = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    std::vector<real> betas = opt.sweep_beta;
    if (betas.empty()) betas = {opt.train.beta};

    struct Cell {
        real alpha, beta;
        std::string path;
    };
    std::vector<Cell> cells;
    for (real a : alphas)
        for (real b : betas)
            cells.push_back({a, b,
                             (fs::path(cmd.out_dir) /
                              ("report_alpha" + grid_value(a) + "_beta" +
                               grid_value(b) + ".json"))
                                 .string()});

    auto run_cell = [&](const Cell& cell) {
        TrainConfig cfg = opt.train;
        cfg.alpha = cell.alpha;
        cfg.beta = cell.beta;
        TrainResult result =
            train(cfg, pipeline.splits, pipeline.vocab.size, nullptr);
        EvalReport report = evaluate_split(result.checkpoint.model, cmd.peer_index,
                                           pipeline.splits, SplitKind::test, cfg);
        std::ofstream out(cell.path, std::ios::binary);
        if (!out) throw DataError("cannot write report: " + cell.path);
        out << report.to_json() << '\n';
    };

    if (cmd.parallel_cells) {
        std::vector<std::future<void>> futures;
        futures.reserve(cells.size());
        for (const auto& cell : cells)
            futures.push_back(std::async(std::launch::async, run_cell, cell));
        for (auto& f : futures) f.get();
    } else {
        for (const auto& cell : cells) run_cell(cell);
    }
    std::printf("sweep complete: %zu report files in %s\n", cells.size(),
                cmd.out_dir.c_str());
    return 0;
}

}  // namespace

Command parse_args(const std::vector<std::string>& args) {
    if (args.empty())
        throw ConfigError(
            "usage: hail <prepare|train|eval|consistency|gradcheck|sweep> "
            "[--config PATH] [--alpha F] [--beta F] [--peers T] "
            "[--mode med|mimic|none] [--seed N] [--data PATH] [--out DIR] "
            "[--checkpoint PATH] [--peer-index N] [--parallel-cells]");
    Command cmd;
    cmd.verb = args[0];
    const bool known_verb = cmd.verb == "prepare" || cmd.verb == "train" ||
                            cmd.verb == "eval" || cmd.verb == "consistency" ||
                            cmd.verb == "gradcheck" || cmd.verb == "sweep";
    if (!known_verb) throw ConfigError("unknown verb '" + cmd.verb + "'");

    auto need_value = [&](std::size_t i, const std::string& flag) -> const std::string& {
        if (i + 1 >= args.size())
            throw ConfigError("flag " + flag + " needs a value");
        return args[i + 1];
    };
    for (std::size_t i = 1; i < args.size(); ++i) {
        const std::string& flag = args[i];
        if (flag == "--config") {
            cmd.config_path = need_value(i, flag);
            ++i;
        } else if (flag == "--alpha") {
            cmd.overrides["alpha"] = need_value(i, flag);
            ++i;
        } else if (flag == "--beta") {
            cmd.overrides["beta"] = need_value(i, flag);
            ++i;
        } else if (flag == "--peers") {
            cmd.overrides["peers"] = need_value(i, flag);
            ++i;
        } else if (flag == "--mode") {
            cmd.overrides["distill_mode"] = need_value(i, flag);
            ++i;
        } else if (flag == "--seed") {
            cmd.overrides["seed"] = need_value(i, flag);
            ++i;
        } else if (flag == "--data") {
            cmd.data_path = need_value(i, flag);
            ++i;
        } else if (flag == "--out") {
            cmd.out_dir = need_value(i, flag);
            ++i;
        } else if (flag == "--checkpoint") {
            cmd.checkpoint_path = need_value(i, flag);
            ++i;
        } else if (flag == "--peer-index") {
            cmd.peer_index = static_cast<int>(parse_int("peer-index", need_value(i, flag)));
            ++i;
        } else if (flag == "--parallel-cells") {
            cmd.parallel_cells = true;
        } else {
            throw ConfigError("unknown flag '" + flag + "'");
        }
    }
    return cmd;
}

RunOptions parse_config(const std::string& path,
                        const std::map<std::string, std::string>& overrides) {
    RunOptions opt;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto comment = line.find('#');
            if (comment != std::string::npos) line.resize(comment);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(line_no) +
                                  " is not key=value: '" + line + "'");
            apply_key(opt, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
    }
    for (const auto& [key, value] : overrides) apply_key(opt, key, value);
    validate_config(opt.train);
    return opt;
}

int run_command(const Command& cmd) {
    const RunOptions opt = parse_config(cmd.config_path, cmd.overrides);

    // resolved effective config first, so any run can be reproduced exactly
    std::fprintf(stderr, "effective config: %s\n",
                 canonical_config_string(opt.train).c_str());

    if (!cmd.out_dir.empty()) fs::create_directories(cmd.out_dir);

    if (cmd.verb == "gradcheck") {
        GradCheckReport report = run_gradcheck(&std::cout);
        return report.passed ? 0 : 4;
    }

    if (cmd.verb == "prepare") {
        const Pipeline p = build_pipeline(cmd, opt);
        const auto vocab_path = (fs::path(cmd.out_dir) / "vocab.tsv").string();
        const auto seq_path = (fs::path(cmd.out_dir) / "sequences.tsv").string();
        write_vocabulary(p.vocab, vocab_path);
        write_sequences(p.sequences, seq_path);
        std::printf("prepared %zu generators, %d elements, %zu sequences\n",
                    p.sequences.generator_names.size(), p.vocab.size,
                    p.sequences.sequences.size());
        return 0;
    }

    if (cmd.verb == "train") {
        const Pipeline p = build_pipeline(cmd, opt);
        Checkpoint resume;
        const Checkpoint* resume_ptr = nullptr;
        if (!cmd.checkpoint_path.empty() && fs::exists(cmd.checkpoint_path)) {
            resume = load_checkpoint(cmd.checkpoint_path);
            resume_ptr = &resume;
            std::fprintf(stderr, "resuming from %s at epoch %d\n",
                         cmd.checkpoint_path.c_str(), resume.epoch);
        }
        const auto metrics_path = (fs::path(cmd.out_dir) / "metrics.jsonl").string();
        std::ofstream metrics(metrics_path, std::ios::binary);
        if (!metrics) throw DataError("cannot write metric log: " + metrics_path);
        TrainResult result =
            train(opt.train, p.splits, p.vocab.size, &metrics, resume_ptr);
        const auto ckpt_path = cmd.checkpoint_path.empty()
                                   ? (fs::path(cmd.out_dir) / "checkpoint.hail").string()
                                   : cmd.checkpoint_path;
        save_checkpoint(result.checkpoint, ckpt_path);
        std::printf("trained %d epochs (%lld steps); checkpoint: %s\n",
                    result.checkpoint.epoch,
                    static_cast<long long>(result.checkpoint.step), ckpt_path.c_str());
        return 0;
    }

    if (cmd.verb == "eval" || cmd.verb == "consistency") {
        if (cmd.checkpoint_path.empty())
            throw DataError("checkpoint not found: --checkpoint PATH is required");
        const Checkpoint ckpt = load_checkpoint(cmd.checkpoint_path);
        RunOptions data_opt = opt;
        data_opt.train = ckpt.config;  // data handling must match the training run
        const Pipeline p = build_pipeline(cmd, data_opt);
        if (p.vocab.size != ckpt.vocab_size)
            throw DataError("corpus vocabulary (" + std::to_string(p.vocab.size) +
                            ") does not match the checkpoint (" +
                            std::to_string(ckpt.vocab_size) + ")");
        if (cmd.peer_index < 0 || cmd.peer_index >= ckpt.model.peer_count())
            throw ConfigError("--peer-index out of range");

        if (cmd.verb == "eval") {
            EvalReport report = evaluate_split(ckpt.model, cmd.peer_index, p.splits,
                                               SplitKind::test, ckpt.config);
            const auto report_path =
                (fs::path(cmd.out_dir) / "eval_report.json").string();
            std::ofstream out(report_path, std::ios::binary);
            if (!out) throw DataError("cannot write report: " + report_path);
            out << report.to_json() << '\n';
            std::printf("%s\n", report.to_json().c_str());
            return 0;
        }

        ConsistencyReport report = response_consistency_report(
            ckpt.model, p.splits, SplitKind::test, ckpt.config);
        const auto csv_path = (fs::path(cmd.out_dir) / "consistency.csv").string();
        write_consistency_csv(report, csv_path);
        std::printf("inconsistent fraction: %.6f over %d cases; matrix: %s\n",
                    report.inconsistent_fraction, report.n_cases, csv_path.c_str());
        return 0;
    }

    return run_sweep(cmd, opt);
}

}  // namespace hail
