#pragma once

#include <map>
#include <string>
#include <vector>

#include "hail/config.hpp"
#include "hail/corpus.hpp"

namespace hail {

struct Command {
    std::string verb;  // prepare | train | eval | consistency | gradcheck | sweep
    std::string config_path;
    std::map<std::string, std::string> overrides;  // win over file values
    std::string data_path;
    std::string out_dir = ".";
    std::string checkpoint_path;
    int peer_index = 0;
    bool parallel_cells = false;
};

// Pipeline options resolved from defaults + config file + overrides.
struct RunOptions {
    TrainConfig train;
    LogFormat format = LogFormat::tsv;
    bool format_from_extension = true;  // until data_format is set explicitly
    bool has_header = false;
    std::vector<real> sweep_alpha;  // defaults to the 0.1..0.9 grid
    std::vector<real> sweep_beta;   // defaults to {beta}
};

Command parse_args(const std::vector<std::string>& args);

// Flat key=value file, one pair per line, '#' comments. Unknown keys and
// out-of-range values raise ConfigError naming the key.
RunOptions parse_config(const std::string& path,
                        const std::map<std::string, std::string>& overrides);

// Exit status per the documented codes: 0 ok, 4 gradcheck failure; config,
// data and numeric errors are thrown and mapped by the caller.
int run_command(const Command& cmd);

}  // namespace hail
