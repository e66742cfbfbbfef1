#pragma once

#include <memory>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "hnp/models/common.hpp"

namespace hnp::models {

/// Versioned JSON blob with the full model configuration and every
/// parameter array keyed by its stable name; round-trips bit-exactly.
nlohmann::json model_to_json(const EpisodicModel& m);
std::unique_ptr<EpisodicModel> model_from_json(const nlohmann::json& j, bool trainable);

void save_checkpoint(const EpisodicModel& m, const std::string& path);
std::unique_ptr<EpisodicModel> load_checkpoint(const std::string& path, bool trainable);

/// Fresh model from a kind name and config json (used by the trainer).
std::unique_ptr<EpisodicModel> make_model(const std::string& kind, const nlohmann::json& config,
                                          std::uint64_t init_seed);

}  // namespace hnp::models
