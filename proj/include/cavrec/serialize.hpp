#pragma once

// JSON checkpoint container:
//   {"format": "cavrec-model", "version": 1, "kind": <kind>, "model": {...}}
// kinds: "linear", "two-tower", "pitf", "cav", "sense-model".
// Matrices are stored row-major as {"rows": r, "cols": c, "data": [...]}.

#include <string>
#include <vector>

#include "json.hpp"

#include "cavrec/baselines.hpp"
#include "cavrec/cavlearn.hpp"
#include "cavrec/cftrain.hpp"
#include "cavrec/core.hpp"
#include "cavrec/synthgen.hpp"

namespace cavrec {

using Json = nlohmann::json;

inline constexpr int kCheckpointVersion = 1;

Json matrix_to_json(const Mat& m);
Mat matrix_from_json(const Json& j);
Json vector_to_json(const Vec& v);
Vec vector_from_json(const Json& j);

Json to_json(const LinearEmbeddingModel& model);
Json to_json(const DeepEmbeddingModel& model);
Json to_json(const PitfModel& model);
Json to_json(const CAV& cav, const std::vector<std::string>& vocab);
Json to_json(const SenseModel& model, const std::vector<std::string>& vocab);

LinearEmbeddingModel linear_from_json(const Json& j);
DeepEmbeddingModel deep_from_json(const Json& j);
PitfModel pitf_from_json(const Json& j);
CAV cav_from_json(const Json& j, const std::vector<std::string>& vocab);
SenseModel sense_model_from_json(const Json& j, const std::vector<std::string>& vocab);

/// Wraps `model` in the checkpoint container and writes it.
void save_checkpoint(const std::string& path, const std::string& kind, const Json& model);
/// Reads a container, checking format, version and kind; returns the "model" member.
Json load_checkpoint(const std::string& path, const std::string& kind);

/// Dataset as CSV files: ratings (user,item,rating), tags (user,item,tag name)
/// and a vocabulary/size header in meta JSON.
void write_dataset(const std::string& dir, const Dataset& dataset);
Dataset read_dataset(const std::string& dir);

Json to_json(const synth::GroundTruth& gt);

}  // namespace cavrec
