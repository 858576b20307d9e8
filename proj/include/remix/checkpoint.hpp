#ifndef REMIX_CHECKPOINT_HPP_
#define REMIX_CHECKPOINT_HPP_

#include <filesystem>
#include <string>

#include "json.hpp"
#include "remix/models.hpp"

namespace remix {

nlohmann::json model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

/// Writes `<stem>.json` (manifest: model spec, groups, tensor names, shapes,
/// byte offsets) and `<stem>.bin` (flat little-endian float64 blob). Both are
/// written to temporaries and renamed into place. `extra` is stored verbatim
/// under the manifest's "extra" key.
void save_checkpoint(const RecursiveMixtureModel& model, const std::filesystem::path& stem,
                     const nlohmann::json& extra = nlohmann::json::object());

struct LoadedCheckpoint {
  RecursiveMixtureModel model;
  nlohmann::json extra;
};

/// Accepts either the stem or the manifest path. Throws CheckpointError on any
/// malformed, inconsistent or truncated input.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Writes text to a sibling temporary and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace remix

#endif  // REMIX_CHECKPOINT_HPP_
