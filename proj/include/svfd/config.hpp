#pragma once

#include <string>
#include <vector>

#include "svfd/augmentation.hpp"
#include "svfd/training.hpp"

namespace svfd {

/// Every tunable of the library, addressed by flat dotted keys such as
/// "train.epochs", "sinkhorn.epsilon", "network.n_z", "infer.adam_epochs" or
/// "augment.w_h".
struct Settings {
    TrainConfig train;
    InferConfig infer;
    AugmentConfig augment;
};

std::vector<std::string> settings_keys();

/// JSON object mapping every key to its current value.
std::string settings_to_json(const Settings& s);

/// Applies a JSON object of flat dotted keys (nested objects are flattened
/// with '.'). Unknown keys and wrongly typed values are rejected with the key
/// in the message.
void apply_settings_json(Settings& s, const std::string& json);

}  // namespace svfd
