#ifndef STV_CLI_HPP
#define STV_CLI_HPP

#include <optional>
#include <string>

namespace stv {

// Exit codes: 0 success, 2 config/usage, 3 I/O, 4 numeric failure.
// Artifacts are written into --out; calibrate/eval/predict expect the
// checkpoint (and calibration record) in that directory unless overridden.

struct CliPaths {
    std::string config;
    std::string data_dir;
    std::string out_dir;
    std::string checkpoint;    // default: <out>/checkpoint.bin
    std::string calibration;   // default: <out>/calibration.json
};

int cmd_gen_data(const CliPaths& paths, std::optional<uint64_t> seed);
int cmd_train(const CliPaths& paths, std::optional<uint64_t> seed,
              const std::optional<std::string>& variant);
int cmd_calibrate(const CliPaths& paths, std::optional<uint64_t> seed,
                  std::optional<double> alpha);
int cmd_eval(const CliPaths& paths);
int cmd_predict(const CliPaths& paths, int64_t window_index);

int run_cli(int argc, char** argv);

}  // namespace stv

#endif  // STV_CLI_HPP
