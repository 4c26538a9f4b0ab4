#pragma once

#include <string>

#include "svfd/latent.hpp"
#include "svfd/training.hpp"

namespace svfd {

/// Trained model: network, training codes, the template it was trained
/// against (unit-cube coordinates) and the physical-to-unit-cube transform.
struct Checkpoint {
    VelocityNet net;
    CodeMatrix codes;
    WeightedPointCloud templ;
    UnitCubeTransform normalization;
    TrainConfig config;
    int epoch = 0;
};

/// Container: 8-byte magic "SVFDCKPT", uint64 little-endian header length,
/// JSON header (architecture, tensor directory, metadata), then raw
/// little-endian float64 tensors.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Throws a validation error listing every differing architecture field.
void check_architecture(const Architecture& expected, const Architecture& found);

}  // namespace svfd
