#pragma once

// Command-line front end. `run_cli` is the whole program minus main() so the
// exit-code contract can be tested in-process.

#include "gaets/training.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace gaets {

enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,  // command ran but its check failed (gradcheck)
    kExitConfig = 2,
    kExitData = 3,
    kExitNumeric = 4,
};

struct RunConfig {
    TrainConfig train;
    std::vector<std::filesystem::path> data_files;
    std::vector<std::filesystem::path> test_files;  // non-empty: two-file split mode
    std::vector<std::string> columns;
    Index smooth = 0;  // trailing moving-average width, 0 = off
    Index stride = 1;
    SplitSpec split;
    std::vector<std::uint64_t> seeds{1};
    int threads = 1;
    std::string run_id;  // empty: derived from the config hash
    std::filesystem::path output_root;  // empty: $GAETS_OUT, else ./runs
};

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});
/// Digest of the resolved configuration with run_id and output_root removed.
std::string run_config_hash(const RunConfig& config);

/// Loads, smooths and windows the configured data.
PreparedData load_prepared(const RunConfig& config);

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gaets
