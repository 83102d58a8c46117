#pragma once

#include <map>
#include <string>

#include "opsd/model.hpp"
#include "opsd/trainer.hpp"

namespace opsd::runconfig {

struct RunConfig {
    lm::ModelConfig model;
    trainer::TrainConfig train;
    std::string train_dataset;
    std::string eval_dataset;
    std::string out_dir;

    void validate() const;
};

// Flat key=value file; '#' starts a comment, blank lines ignored.
RunConfig parse_file(const std::string& path);
RunConfig parse_lines(const std::map<std::string, std::string>& kv);

// Apply a "key=value" override in place.
void apply_override(RunConfig& rc, const std::string& assignment);

// Write the effective config back out (sorted keys) for provenance.
void write_config(const RunConfig& rc, const std::string& path);

}  // namespace opsd::runconfig
