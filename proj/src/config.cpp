#include "svfd/config.hpp"

#include <functional>
#include <map>

#include <json.hpp>

#include "svfd/error.hpp"

namespace svfd {

namespace {

using json = nlohmann::json;

struct Field {
    std::function<json(const Settings&)> get;
    std::function<void(Settings&, const json&)> set;
};

template <class T>
Field member(T& (*ref)(Settings&)) {
    return {[ref](const Settings& s) { return json(ref(const_cast<Settings&>(s))); },
            [ref](Settings& s, const json& v) { ref(s) = v.get<T>(); }};
}

#define SVFD_FIELD(key, expr)                                                                    \
    {                                                                                            \
        key, member<std::remove_reference_t<decltype(std::declval<Settings&>().expr)>>(          \
                 [](Settings& s) -> std::remove_reference_t<decltype(s.expr)>& { return s.expr; }) \
    }

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> t{
            SVFD_FIELD("train.epochs", train.epochs),
            SVFD_FIELD("train.batch_size", train.batch_size),
            SVFD_FIELD("train.points", train.points),
            SVFD_FIELD("train.steps", train.steps),
            SVFD_FIELD("train.adaptive", train.adaptive),
            SVFD_FIELD("train.lr_theta", train.lr_theta),
            SVFD_FIELD("train.lr_z", train.lr_z),
            SVFD_FIELD("train.w_z", train.w_z),
            SVFD_FIELD("train.w_theta", train.w_theta),
            SVFD_FIELD("train.w_v", train.w_v),
            SVFD_FIELD("train.w_n", train.w_n),
            SVFD_FIELD("train.seed", train.seed),
            SVFD_FIELD("train.double_precision", train.double_precision),
            SVFD_FIELD("train.checkpoint_every", train.checkpoint_every),
            SVFD_FIELD("sinkhorn.epsilon", train.sinkhorn.epsilon),
            SVFD_FIELD("sinkhorn.scaling", train.sinkhorn.scaling),
            SVFD_FIELD("sinkhorn.max_iters", train.sinkhorn.max_iters),
            SVFD_FIELD("sinkhorn.tolerance", train.sinkhorn.tolerance),
            SVFD_FIELD("network.w_fa", train.arch.w_fa),
            SVFD_FIELD("network.l_fa", train.arch.l_fa),
            SVFD_FIELD("network.w_df", train.arch.w_df),
            SVFD_FIELD("network.l_df", train.arch.l_df),
            SVFD_FIELD("network.n_e", train.arch.n_e),
            SVFD_FIELD("network.g_z", train.arch.g_z),
            SVFD_FIELD("network.n_z", train.arch.n_z),
            SVFD_FIELD("network.negative_slope", train.arch.negative_slope),
            SVFD_FIELD("infer.adam_epochs", infer.adam_epochs),
            SVFD_FIELD("infer.lbfgs_epochs", infer.lbfgs_epochs),
            SVFD_FIELD("infer.lbfgs_iterations", infer.lbfgs_iterations),
            SVFD_FIELD("infer.lr_multiplier", infer.lr_multiplier),
            SVFD_FIELD("infer.lbfgs_history", infer.lbfgs.history),
            SVFD_FIELD("infer.ncd_falls_back_to_cd", infer.ncd_falls_back_to_cd),
            SVFD_FIELD("augment.count", augment.count),
            SVFD_FIELD("augment.m_p", augment.correspondences.m_p),
            SVFD_FIELD("augment.m_c", augment.correspondences.m_c),
            SVFD_FIELD("augment.tau", augment.correspondences.tau),
            SVFD_FIELD("augment.hull_neighbors", augment.correspondences.hull_neighbors),
            SVFD_FIELD("augment.w_h", augment.w_h),
            SVFD_FIELD("augment.tps_affine", augment.tps_affine),
            SVFD_FIELD("augment.outlier_weight", augment.outlier_weight),
            SVFD_FIELD("augment.use_rigid", augment.use_rigid),
            SVFD_FIELD("augment.anchor_unselected", augment.anchor_unselected),
            SVFD_FIELD("augment.cpd_points", augment.cpd_points),
            SVFD_FIELD("augment.max_attempts", augment.max_attempts),
            SVFD_FIELD("augment.seed", augment.seed),
        };
        t["train.attachment"] = {
            [](const Settings& s) { return json(attachment_name(s.train.attachment)); },
            [](Settings& s, const json& v) { s.train.attachment = parse_attachment(v.get<std::string>()); }};
        return t;
    }();
    return table;
}

#undef SVFD_FIELD

void flatten_into(const json& j, const std::string& prefix, std::map<std::string, json>& out) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it->is_object()) {
            flatten_into(*it, key, out);
        } else {
            out[key] = *it;
        }
    }
}

bool type_matches(const json& current, const json& v) {
    if (current.is_boolean()) return v.is_boolean();
    if (current.is_number_integer() || current.is_number_unsigned()) return v.is_number_integer() || v.is_number_unsigned();
    if (current.is_number()) return v.is_number();
    if (current.is_string()) return v.is_string();
    return false;
}

}  // namespace

std::vector<std::string> settings_keys() {
    std::vector<std::string> keys;
    for (const auto& [k, f] : fields()) keys.push_back(k);
    return keys;
}

std::string settings_to_json(const Settings& s) {
    json j = json::object();
    for (const auto& [k, f] : fields()) j[k] = f.get(s);
    return j.dump(2);
}

void apply_settings_json(Settings& s, const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw_validation(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw_validation("config must be a JSON object");
    std::map<std::string, json> flat;
    flatten_into(j, "", flat);
    for (const auto& [key, value] : flat) {
        const auto it = fields().find(key);
        if (it == fields().end()) throw_validation("unknown config key '" + key + "'");
        if (!type_matches(it->second.get(s), value)) {
            throw_validation("config key '" + key + "' has the wrong type (got " + value.dump() + ")");
        }
        try {
            it->second.set(s, value);
        } catch (const json::exception& e) {
            throw_validation("config key '" + key + "': " + e.what());
        }
    }
}

}  // namespace svfd
