#pragma once

#include <filesystem>
#include <string>

#include "ckd/config.hpp"
#include "ckd/manifest.hpp"

namespace ckd::tools {

// Executes one pipeline subcommand with a fully resolved config, writing its
// data artifacts, timing files, and run manifest under out_dir. Returns the
// manifest that was written.
RunManifest run_command(const std::string& name, const KeyValueConfig& config,
                        const std::filesystem::path& out_dir);

// Re-executes the command recorded in a manifest into replay_dir and
// compares the data-output hashes. Returns true when every output matches.
bool replay_manifest(const std::filesystem::path& manifest_path,
                     const std::filesystem::path& replay_dir, std::string* report);

} // namespace ckd::tools
