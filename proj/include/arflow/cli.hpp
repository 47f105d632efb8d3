#pragma once

// Command-line entry points. The real work lives behind cli_main so tests
// can drive every command in-process; the installed binary is a thin
// wrapper. One JSON run-configuration file feeds all commands, with flags
// overriding file values and defaults covering everything else.

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "arflow/model.hpp"
#include "arflow/sampler.hpp"
#include "arflow/tensor.hpp"
#include "arflow/training.hpp"

namespace arflow {

// How make-data builds the synthetic dataset. Class count and latent shape
// come from the model section so data and model can never disagree.
struct DataSpec {
    std::string kind = "mixture"; // "mixture" or "patterns"
    int64_t items_per_class = 64;
    // Mixture: per-class stddev around the class mean. Patterns: jitter
    // around the class base image.
    double spread = 0.25;

    void validate() const;
};

// Everything a run needs, merged from one JSON file. Unknown keys are
// rejected anywhere in the tree; absent keys keep their defaults. One
// top-level seed drives dataset generation, training, and sampling (the
// train section deliberately has no seed key of its own).
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    SamplerConfig sampler;
    DataSpec data;
    std::string out_dir = "out";
    uint64_t seed = 0;
    int64_t threads = 1; // accepted for forward compatibility; this build
                         // is single-threaded

    void validate() const;
};

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& c);

// Reads and parses a JSON run configuration; malformed JSON or unknown keys
// are config errors.
RunConfig load_run_config(const std::string& path);

// Maps error categories onto process exit codes: config 2, data format 3,
// numeric 4, anything else 1.
int exit_code_for(ErrorKind kind);

// Writes one binary 8-bit PGM (P5) holding all latents' given channel,
// arranged in a near-square grid, normalized by that channel's min/max over
// the whole set. A constant channel renders black. Atomic write.
template <typename T>
void write_pgm_grid(const std::string& path,
                    const std::vector<Tensor<T>>& latents, int64_t channel);

// Full command dispatch. Takes the argument list without the program name
// and returns the process exit code; all prose goes to the given streams.
// Commands: make-data, train, sample, eval, bench, inspect. The environment
// variable ARFLOW_F64=1 switches every numeric path to 64-bit.
int cli_main(const std::vector<std::string>& args, std::ostream& out,
             std::ostream& err);

} // namespace arflow
