#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "uvd/backbone.hpp"
#include "uvd/recognition.hpp"
#include "uvd/sampler.hpp"
#include "uvd/temporal_shapes.hpp"
#include "uvd/trainer.hpp"

namespace uvd {

using Json = nlohmann::json;

// complete tree of defaults; every recognized key appears here
Json default_config();

Json load_config_file(const std::string& path);

// Strict recursive merge: every overlay key must already exist in base with a
// compatible kind (object, array, string, bool, number). Unknown keys and
// kind changes are configuration errors.
void merge_config(Json& base, const Json& overlay);

// "train.gamma=10" style override; the value is parsed as JSON when valid,
// otherwise taken as a string
void set_config_value(Json& base, const std::string& assignment);

// UVD_-prefixed names map to key paths: UVD_TRAIN__BASE_LR -> train.base_lr.
// Returned sorted by path so application order is deterministic.
std::vector<std::pair<std::string, std::string>> env_config_overrides(
    const std::map<std::string, std::string>& env);

// defaults, then file, then environment, then explicit assignments
Json resolve_config(const std::string& file_path, const std::map<std::string, std::string>& env,
                    const std::vector<std::string>& assignments);

// digest of the {backbone, data, train} subtrees; sections that only steer
// inference do not disturb checkpoint compatibility
uint64_t config_hash(const Json& cfg);

TemporalShapesSpec data_spec_from_config(const Json& cfg);
BackboneConfig backbone_from_config(const Json& cfg);
TrainConfig train_from_config(const Json& cfg);
SamplerConfig sampler_from_config(const Json& cfg);
RecognitionConfig recognition_from_config(const Json& cfg);

}  // namespace uvd
