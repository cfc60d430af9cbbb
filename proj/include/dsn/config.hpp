#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

#include "dsn/model.hpp"
#include "dsn/protocols.hpp"
#include "dsn/training.hpp"

namespace dsn {

// Flat key=value configuration. Only explicitly-set keys are stored;
// defaults live in the typed builders below. Unknown keys are rejected.
struct RunConfig {
    std::map<std::string, std::string> values;

    static const std::set<std::string>& known_keys();

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const { return values.count(key) != 0; }
    std::string get_or(const std::string& key, const std::string& fallback) const;

    // FNV-1a over the sorted resolved pairs.
    std::string digest() const;
};

// `key = value` lines, `#` comments, blank lines ignored.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config_file(const std::string& path);

// Later entries win; used to realize flag > file > env precedence.
void merge_into(RunConfig& base, const RunConfig& overrides);

std::uint64_t seed_of(const RunConfig& config);
PipelineConfig make_pipeline(const RunConfig& config);
TrainConfig make_train(const RunConfig& config);
ExperimentConfig make_experiment(const RunConfig& config);
SplitSpec make_split(const RunConfig& config);

// config_digest, seed, artifact_version and the standardization choice.
void write_run_header(const std::string& dir, const RunConfig& config);

}  // namespace dsn
