// svfd command-line front end. Talks to the library only through svfd.h.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <list>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "svfd/svfd.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

enum Exit { kOk = 0, kValidation = 1, kNumeric = 2, kIo = 3 };

struct CliError {
    int code;
    std::string message;
};

[[noreturn]] void fail(int code, const std::string& msg) { throw CliError{code, msg}; }

void check(svfd_status s) {
    if (s == SVFD_OK) return;
    const int code = s == SVFD_ERR_VALIDATION ? kValidation : s == SVFD_ERR_IO ? kIo : kNumeric;
    fail(code, svfd_last_error());
}

struct CloudDel {
    void operator()(svfd_cloud* c) const { svfd_cloud_free(c); }
};
struct MeshDel {
    void operator()(svfd_mesh* m) const { svfd_mesh_free(m); }
};
struct ModelDel {
    void operator()(svfd_model* m) const { svfd_model_free(m); }
};
struct VesselDel {
    void operator()(svfd_vessel* v) const { svfd_vessel_free(v); }
};
using Cloud = std::unique_ptr<svfd_cloud, CloudDel>;
using Mesh = std::unique_ptr<svfd_mesh, MeshDel>;
using Model = std::unique_ptr<svfd_model, ModelDel>;
using Vessel = std::unique_ptr<svfd_vessel, VesselDel>;

std::string take(char* s) {
    std::string out = s ? s : "";
    svfd_string_free(s);
    return out;
}

Cloud load_cloud(const std::string& path) {
    svfd_cloud* c = nullptr;
    check(svfd_cloud_load(path.c_str(), &c));
    return Cloud(c);
}

Model load_model(const std::string& path) {
    svfd_model* m = nullptr;
    check(svfd_model_load(path.c_str(), &m));
    return Model(m);
}

void save_cloud(const svfd_cloud* c, const fs::path& path) { check(svfd_cloud_save(c, path.string().c_str())); }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) fail(kIo, "cannot open '" + path.string() + "' for writing");
    f << text;
    if (!f) fail(kIo, "failed writing '" + path.string() + "'");
}

json read_json(const std::string& path, const std::string& what) {
    std::ifstream f(path);
    if (!f) fail(kIo, "cannot open " + what + " '" + path + "'");
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        fail(kValidation, what + " '" + path + "' is not valid JSON: " + e.what());
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(kIo, "cannot create directory '" + dir.string() + "': " + ec.message());
}

std::string numbered(const std::string& stem, std::size_t i, const std::string& ext) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03zu", i);
    return stem + "_" + buf + ext;
}

json default_settings() {
    char* s = nullptr;
    check(svfd_default_settings(&s));
    return json::parse(take(s));
}

// ---- layered configuration: defaults < file < flags ----

json parse_as(const json& like, const std::string& key, const std::string& raw) {
    try {
        std::size_t used = 0;
        if (like.is_boolean()) {
            if (raw == "true" || raw == "1") return true;
            if (raw == "false" || raw == "0") return false;
        } else if (like.is_number_integer() || like.is_number_unsigned()) {
            const long long v = std::stoll(raw, &used);
            if (used == raw.size()) return v;
        } else if (like.is_number()) {
            const double v = std::stod(raw, &used);
            if (used == raw.size()) return v;
        } else {
            return raw;
        }
    } catch (const std::exception&) {
    }
    fail(kValidation, "invalid value '" + raw + "' for " + key);
}

class Layers {
public:
    /// Keys the library knows, with their defaults.
    explicit Layers(json base, std::string base_source = "default") : base_(std::move(base)) {
        for (auto it = base_.begin(); it != base_.end(); ++it) {
            values_[it.key()] = it.value();
            source_[it.key()] = base_source;
        }
    }

    void add_cli_key(const std::string& key, json value) {
        values_[key] = std::move(value);
        source_[key] = "default";
        cli_keys_.push_back(key);
    }

    void apply_file(const std::string& path) {
        const json j = read_json(path, "config file");
        if (!j.is_object()) fail(kValidation, "config file '" + path + "' must hold a JSON object");
        std::map<std::string, json> flat;
        flatten(j, "", flat);
        for (auto& [k, v] : flat) set(k, std::move(v), "file");
    }

    void set(const std::string& key, json value, const std::string& source) {
        const auto it = values_.find(key);
        if (it == values_.end()) fail(kValidation, "unknown config key '" + key + "'");
        values_[key] = std::move(value);
        source_[key] = source;
        if (source != "default" && source != "checkpoint") overridden_.insert(key);
    }

    void set_raw(const std::string& key, const std::string& raw) {
        const auto it = values_.find(key);
        if (it == values_.end()) fail(kValidation, "unknown config key '" + key + "'");
        set(key, parse_as(it->second, key, raw), "flag");
    }

    const json& get(const std::string& key) const { return values_.at(key); }
    bool given(const std::string& key) const { return overridden_.count(key) > 0; }

    /// Library settings, either all of them or only those set by file/flags.
    std::string library_json(bool only_overrides) const {
        json j = json::object();
        for (const auto& [k, v] : values_) {
            if (is_cli_key(k)) continue;
            if (only_overrides && !given(k)) continue;
            j[k] = v;
        }
        return j.dump();
    }

    json dump() const {
        json j = json::object();
        for (const auto& [k, v] : values_) j[k] = {{"value", v}, {"source", source_.at(k)}};
        return j;
    }

private:
    static void flatten(const json& j, const std::string& prefix, std::map<std::string, json>& out) {
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
            if (it->is_object()) {
                flatten(*it, key, out);
            } else {
                out[key] = *it;
            }
        }
    }
    bool is_cli_key(const std::string& k) const {
        return std::find(cli_keys_.begin(), cli_keys_.end(), k) != cli_keys_.end();
    }

    json base_;
    std::map<std::string, json> values_;
    std::map<std::string, std::string> source_;
    std::set<std::string> overridden_;
    std::vector<std::string> cli_keys_;
};

/// Command-line options that map onto config keys.
struct FlagTable {
    std::list<std::pair<std::string, std::string>> entries;  // key, raw value
    std::vector<std::string> sets;
    std::string config_path;
    bool dump = false;
    int threads = 0;
    bool deterministic = false;

    void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        entries.emplace_back(key, std::string());
        app->add_option(flag, entries.back().second, help + " [" + key + "]");
    }

    void add_common(CLI::App* app) {
        app->add_option("--config", config_path, "JSON config with flat dotted keys");
        app->add_option("--set", sets, "Override any config key: key=value")->take_all();
        app->add_flag("--dump-config", dump, "Print the effective config with provenance and exit");
        app->add_option("--threads", threads, "Worker threads (computation is single-threaded; accepted for scripts)");
        app->add_flag("--deterministic", deterministic, "Fully deterministic execution (always the case)");
    }

    void apply(Layers& layers) const {
        if (!config_path.empty()) layers.apply_file(config_path);
        for (const auto& [key, raw] : entries) {
            if (!raw.empty()) layers.set_raw(key, raw);
        }
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) fail(kValidation, "--set expects key=value, got '" + s + "'");
            layers.set_raw(s.substr(0, eq), s.substr(eq + 1));
        }
    }
};

std::string require_path(const Layers& l, const std::string& key, const std::string& flag) {
    const json& v = l.get(key);
    if (!v.is_string() || v.get<std::string>().empty()) {
        fail(kValidation, "missing required field '" + key + "' (set it in the config file or pass " + flag + ")");
    }
    return v.get<std::string>();
}

bool maybe_dump(const FlagTable& flags, const Layers& layers) {
    if (!flags.dump) return false;
    std::cout << layers.dump().dump(2) << '\n';
    return true;
}

void on_signal(int) { svfd_request_stop(); }

void warning_to_stderr(const char* msg, void*) { std::cerr << "warning: " << msg << '\n'; }

// ---- train ----

struct TrainArgs {
    FlagTable flags;
    std::string templ, out, resume;
    std::vector<std::string> shapes, ids;
    bool cpd_align = false;
    bool quiet = false;
};

struct LossLog {
    std::ofstream csv;
    bool quiet = false;
};

void epoch_cb(int epoch, const char* loss_json, void* user) {
    auto* log = static_cast<LossLog*>(user);
    const json j = json::parse(loss_json);
    log->csv << epoch << ',' << j["total"].get<double>() << ',' << j["direct"].get<double>() << ','
             << j["inverse"].get<double>() << ',' << j["code_reg"].get<double>() << ','
             << j["theta_reg"].get<double>() << ',' << j["kinetic"].get<double>() << ','
             << j["seconds"].get<double>() << '\n';
    log->csv.flush();
    if (!log->quiet) {
        std::cerr << "epoch " << epoch << "  loss " << j["total"].get<double>() << "  (" << j["seconds"].get<double>()
                  << " s)\n";
    }
}

int run_train(TrainArgs& a) {
    Layers layers(default_settings());
    layers.add_cli_key("paths.template", "");
    layers.add_cli_key("paths.shapes", json::array());
    layers.add_cli_key("paths.ids", json::array());
    layers.add_cli_key("paths.out", "");
    a.flags.apply(layers);
    if (!a.templ.empty()) layers.set("paths.template", a.templ, "flag");
    if (!a.shapes.empty()) layers.set("paths.shapes", a.shapes, "flag");
    if (!a.ids.empty()) layers.set("paths.ids", a.ids, "flag");
    if (!a.out.empty()) layers.set("paths.out", a.out, "flag");
    if (maybe_dump(a.flags, layers)) return kOk;

    const std::string templ_path = require_path(layers, "paths.template", "--template");
    const std::string out_dir = require_path(layers, "paths.out", "--out");
    const json shapes_j = layers.get("paths.shapes");
    if (!shapes_j.is_array() || shapes_j.empty()) {
        fail(kValidation, "missing required field 'paths.shapes' (set it in the config file or pass --shapes)");
    }
    std::vector<std::string> shape_paths = shapes_j.get<std::vector<std::string>>();
    std::vector<std::string> ids = layers.get("paths.ids").get<std::vector<std::string>>();
    if (!ids.empty() && ids.size() != shape_paths.size()) fail(kValidation, "paths.ids must match paths.shapes in length");
    if (ids.empty()) {
        for (const auto& p : shape_paths) ids.push_back(fs::path(p).stem().string());
    }

    ensure_dir(out_dir);
    const fs::path out(out_dir);
    write_text(out / "effective_config.json", layers.dump().dump(2) + "\n");

    Cloud templ = load_cloud(templ_path);
    std::vector<Cloud> shapes;
    for (const auto& p : shape_paths) {
        Cloud c = load_cloud(p);
        if (a.cpd_align) {
            svfd_cloud* aligned = nullptr;
            check(svfd_rigid_align(c.get(), templ.get(), 0.05, nullptr, &aligned));
            c.reset(aligned);
        }
        shapes.push_back(std::move(c));
    }
    std::vector<const svfd_cloud*> raw;
    std::vector<const char*> id_ptrs;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        raw.push_back(shapes[i].get());
        id_ptrs.push_back(ids[i].c_str());
    }

    LossLog log;
    log.quiet = a.quiet;
    log.csv.open(out / "loss.csv");
    if (!log.csv) fail(kIo, "cannot open '" + (out / "loss.csv").string() + "' for writing");
    log.csv << "epoch,total,direct,inverse,code_reg,theta_reg,kinetic,seconds\n";
    log.csv.precision(10);

    const std::string ckpt = (out / "model.svfd").string();
    svfd_model* model = nullptr;
    if (!a.resume.empty()) {
        Model m = load_model(a.resume);
        check(svfd_train_resume(m.get(), raw.data(), raw.size(), layers.library_json(true).c_str(), epoch_cb, &log,
                                ckpt.c_str()));
        model = m.release();
    } else {
        check(svfd_train(raw.data(), id_ptrs.data(), raw.size(), templ.get(), layers.library_json(false).c_str(),
                         epoch_cb, &log, ckpt.c_str(), &model));
    }
    Model m(model);
    check(svfd_model_save(m.get(), ckpt.c_str()));
    char* report = nullptr;
    check(svfd_model_report(m.get(), raw.data(), raw.size(), &report));
    json summary = json::parse(take(report));
    summary["interrupted"] = svfd_stop_requested() != 0;
    summary["checksum"] = svfd_model_checksum(m.get());
    write_text(out / "summary.json", summary.dump(2) + "\n");
    if (svfd_stop_requested()) std::cerr << "interrupted: checkpoint written to " << ckpt << '\n';
    std::cout << "model written to " << ckpt << '\n';
    return kOk;
}

// ---- infer ----

struct InferArgs {
    FlagTable flags;
    std::string model, shape, out;
};

Layers model_layers(const svfd_model* m) {
    char* info = nullptr;
    check(svfd_model_info(m, &info));
    const json j = json::parse(take(info));
    return Layers(j.at("settings"), "checkpoint");
}

std::vector<double> code_vector(const svfd_model* m, std::size_t index) {
    std::vector<double> code(svfd_model_code_dim(m));
    check(svfd_model_code(m, index, code.data()));
    return code;
}

int run_infer(InferArgs& a) {
    Model m = load_model(a.model);
    Layers layers = model_layers(m.get());
    a.flags.apply(layers);
    if (maybe_dump(a.flags, layers)) return kOk;
    Cloud shape = load_cloud(a.shape);
    ensure_dir(a.out);
    const fs::path out(a.out);
    write_text(out / "effective_config.json", layers.dump().dump(2) + "\n");

    std::vector<double> code(svfd_model_code_dim(m.get()));
    char* report = nullptr;
    svfd_cloud* direct = nullptr;
    svfd_cloud* inverse = nullptr;
    check(svfd_infer(m.get(), shape.get(), layers.library_json(true).c_str(), code.data(), &report, &direct,
                     &inverse));
    Cloud d(direct), inv(inverse);
    const json diag = json::parse(take(report));
    write_text(out / "diagnostics.json", diag.dump(2) + "\n");
    write_text(out / "code.json", json{{"source", a.shape}, {"code", code}}.dump(2) + "\n");
    save_cloud(d.get(), out / "direct.ply");
    save_cloud(inv.get(), out / "inverse.ply");
    const auto& u = diag["direct"]["unit_cube"];
    std::cout << "direct map: mean FLD " << u["mean_fld"].get<double>() << ", max FLD " << u["max_fld"].get<double>()
              << " (unit cube)\n";
    return kOk;
}

// ---- codes shared by generate / geodesic / map ----

std::vector<std::vector<double>> read_code_file(const std::string& path, std::size_t dim) {
    const json j = read_json(path, "code file");
    std::vector<std::vector<double>> codes;
    if (j.contains("code")) codes.push_back(j.at("code").get<std::vector<double>>());
    if (j.contains("codes")) {
        for (const auto& c : j.at("codes")) codes.push_back(c.get<std::vector<double>>());
    }
    if (codes.empty()) fail(kValidation, "code file '" + path + "' has neither 'code' nor 'codes'");
    for (const auto& c : codes) {
        if (c.size() != dim) {
            fail(kValidation, "code in '" + path + "' has length " + std::to_string(c.size()) + ", model expects " +
                                  std::to_string(dim));
        }
    }
    return codes;
}

std::size_t id_index(const svfd_model* m, const std::string& id) {
    char* info = nullptr;
    check(svfd_model_info(m, &info));
    const auto ids = json::parse(take(info)).at("ids").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] == id) return i;
    }
    fail(kValidation, "no training shape with id '" + id + "'");
}

struct CodeChoice {
    std::string id;
    std::string code_file;
    int index = -1;

    void add(CLI::App* app) {
        app->add_option("--id", id, "Training shape id whose code is used");
        app->add_option("--code-index", index, "Training code index");
        app->add_option("--code-file", code_file, "JSON file with a 'code' array");
    }

    std::vector<double> resolve(const svfd_model* m) const {
        const int given = (!id.empty()) + (!code_file.empty()) + (index >= 0);
        if (given != 1) fail(kValidation, "pass exactly one of --id, --code-index, --code-file");
        if (!code_file.empty()) return read_code_file(code_file, svfd_model_code_dim(m)).front();
        const std::size_t i = index >= 0 ? static_cast<std::size_t>(index) : id_index(m, id);
        return code_vector(m, i);
    }
};

// ---- generate ----

struct GenerateArgs {
    std::string model, mode = "gaussian", out, code_file, from, to;
    int n = 1;
    std::uint64_t seed = 0;
    std::vector<double> t;
};

int run_generate(GenerateArgs& a) {
    Model m = load_model(a.model);
    const std::size_t dim = svfd_model_code_dim(m.get());
    if (a.n < 0) fail(kValidation, "--n must be non-negative");
    std::vector<std::vector<double>> codes;
    std::vector<std::string> labels;
    if (a.mode == "gaussian") {
        if (svfd_model_code_count(m.get()) < 2) fail(kValidation, "gaussian sampling needs at least 2 training codes");
        std::vector<double> flat(dim * static_cast<std::size_t>(a.n));
        check(svfd_sample_codes(m.get(), static_cast<std::size_t>(a.n), a.seed, flat.data()));
        for (int i = 0; i < a.n; ++i) {
            codes.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(i * dim),
                               flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
            labels.push_back(numbered("sample", static_cast<std::size_t>(i), ""));
        }
    } else if (a.mode == "interpolate") {
        if (a.from.empty() || a.to.empty()) fail(kValidation, "interpolate mode needs --from and --to ids");
        const auto za = code_vector(m.get(), id_index(m.get(), a.from));
        const auto zb = code_vector(m.get(), id_index(m.get(), a.to));
        std::vector<double> ts = a.t;
        if (ts.empty()) {
            for (int i = 1; i <= a.n; ++i) ts.push_back(static_cast<double>(i) / (a.n + 1));
        }
        for (double t : ts) {
            if (!(t >= 0.0 && t <= 1.0)) fail(kValidation, "interpolation parameter must lie in [0, 1]");
            std::vector<double> z(dim);
            for (std::size_t k = 0; k < dim; ++k) z[k] = (1.0 - t) * za[k] + t * zb[k];
            codes.push_back(std::move(z));
            std::ostringstream os;
            os << a.from << "-" << a.to << "@" << t;
            labels.push_back(os.str());
        }
    } else if (a.mode == "code-file") {
        if (a.code_file.empty()) fail(kValidation, "code-file mode needs --code-file");
        codes = read_code_file(a.code_file, dim);
        for (std::size_t i = 0; i < codes.size(); ++i) labels.push_back(numbered("code", i, ""));
    } else {
        fail(kValidation, "unknown mode '" + a.mode + "' (gaussian, interpolate, code-file)");
    }

    ensure_dir(a.out);
    const fs::path out(a.out);
    for (std::size_t i = 0; i < codes.size(); ++i) {
        svfd_cloud* g = nullptr;
        check(svfd_generate(m.get(), codes[i].data(), &g));
        Cloud c(g);
        save_cloud(c.get(), out / numbered("generated", i, ".ply"));
    }
    write_text(out / "generated_codes.json", json{{"labels", labels}, {"codes", codes}}.dump(2) + "\n");

    std::vector<double> flat;
    for (const auto& z : codes) flat.insert(flat.end(), z.begin(), z.end());
    std::vector<const char*> label_ptrs;
    for (const auto& l : labels) label_ptrs.push_back(l.c_str());
    char* csv = nullptr;
    char* svg = nullptr;
    check(svfd_pca(m.get(), flat.empty() ? nullptr : flat.data(), codes.size(), label_ptrs.data(), &csv, &svg));
    write_text(out / "pca.csv", take(csv));
    write_text(out / "pca.svg", take(svg));
    std::cout << codes.size() << " shapes written to " << out.string() << '\n';
    return kOk;
}

// ---- geodesic / map ----

struct FlowArgs {
    std::string model, shape, out, direction = "forward";
    int steps = 0;
    CodeChoice code;
};

std::vector<Cloud> run_flow(const FlowArgs& a, Model& m) {
    m = load_model(a.model);
    const auto code = a.code.resolve(m.get());
    int dir = 0;
    if (a.direction == "forward") {
        dir = 0;
    } else if (a.direction == "backward") {
        dir = 1;
    } else {
        fail(kValidation, "direction must be 'forward' or 'backward'");
    }
    Cloud input;
    if (!a.shape.empty()) {
        input = load_cloud(a.shape);
    } else if (dir == 1) {
        svfd_cloud* t = nullptr;
        check(svfd_model_template(m.get(), &t));
        input.reset(t);
    } else {
        fail(kValidation, "forward direction needs --shape");
    }
    svfd_cloud** snaps = nullptr;
    std::size_t count = 0;
    check(svfd_geodesic(m.get(), code.data(), input.get(), dir, a.steps, &snaps, &count));
    std::vector<Cloud> out;
    for (std::size_t i = 0; i < count; ++i) {
        out.emplace_back(snaps[i]);
        snaps[i] = nullptr;
    }
    svfd_cloud_array_free(snaps, count);
    return out;
}

int run_geodesic(FlowArgs& a) {
    Model m;
    auto snaps = run_flow(a, m);
    ensure_dir(a.out);
    for (std::size_t i = 0; i < snaps.size(); ++i) save_cloud(snaps[i].get(), fs::path(a.out) / numbered("step", i, ".ply"));
    std::cout << snaps.size() << " snapshots written to " << a.out << '\n';
    return kOk;
}

int run_map(FlowArgs& a) {
    Model m;
    auto snaps = run_flow(a, m);
    save_cloud(snaps.back().get(), a.out);
    std::cout << "mapped cloud written to " << a.out << '\n';
    return kOk;
}

// ---- augment ----

struct AugmentArgs {
    FlagTable flags;
    std::vector<std::string> models, meshes;
    std::string out;
};

std::vector<std::string> expand_models(const std::vector<std::string>& items) {
    std::vector<std::string> out;
    for (const auto& item : items) {
        if (fs::is_directory(item)) {
            std::vector<std::string> found;
            for (const auto& e : fs::directory_iterator(item)) {
                if (e.path().extension() == ".json") found.push_back(e.path().string());
            }
            std::sort(found.begin(), found.end());
            out.insert(out.end(), found.begin(), found.end());
        } else {
            out.push_back(item);
        }
    }
    return out;
}

int run_augment(AugmentArgs& a) {
    Layers layers(default_settings());
    a.flags.apply(layers);
    if (maybe_dump(a.flags, layers)) return kOk;
    const auto paths = expand_models(a.models);
    if (paths.size() < 2) fail(kValidation, "augmentation needs at least 2 vessel models");
    if (!a.meshes.empty() && a.meshes.size() != paths.size()) fail(kValidation, "--meshes must match the model count");
    std::vector<Vessel> vessels;
    std::vector<Mesh> meshes;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        svfd_vessel* v = nullptr;
        check(svfd_vessel_load(paths[i].c_str(), &v));
        vessels.emplace_back(v);
        Mesh mesh;
        std::string mesh_path = a.meshes.empty() ? "" : a.meshes[i];
        if (mesh_path.empty()) {
            for (const char* ext : {".ply", ".obj"}) {
                const fs::path cand = fs::path(paths[i]).replace_extension(ext);
                if (fs::exists(cand)) {
                    mesh_path = cand.string();
                    break;
                }
            }
        }
        if (!mesh_path.empty()) {
            svfd_mesh* mm = nullptr;
            check(svfd_mesh_load(mesh_path.c_str(), &mm));
            mesh.reset(mm);
        }
        meshes.push_back(std::move(mesh));
    }
    std::vector<const svfd_vessel*> vp;
    std::vector<const svfd_mesh*> mp;
    for (std::size_t i = 0; i < vessels.size(); ++i) {
        vp.push_back(vessels[i].get());
        mp.push_back(meshes[i].get());
    }
    ensure_dir(a.out);
    const fs::path out(a.out);
    write_text(out / "effective_config.json", layers.dump().dump(2) + "\n");
    svfd_mesh** result = nullptr;
    std::size_t count = 0, accepted = 0;
    char* report = nullptr;
    check(svfd_augment(vp.data(), mp.data(), vp.size(), layers.library_json(false).c_str(), &result, &count,
                       &accepted, &report));
    write_text(out / "report.csv", take(report));
    for (std::size_t i = paths.size(); i < count; ++i) {
        check(svfd_mesh_save(result[i], (out / numbered("augmented", i - paths.size(), ".ply")).string().c_str()));
    }
    svfd_mesh_array_free(result, count);
    const auto wanted = layers.get("augment.count").get<std::size_t>();
    std::cout << accepted << " of " << wanted << " meshes accepted, written to " << out.string() << '\n';
    if (accepted < wanted) {
        std::cerr << "error: attempt budget exhausted; partial output kept\n";
        return kNumeric;
    }
    return kOk;
}

// ---- metrics ----

struct MetricsArgs {
    std::string a, b, out;
    std::vector<std::string> measures;
    std::optional<double> w_n, epsilon, scaling, tolerance;
    std::optional<int> max_iters;
};

int run_metrics(MetricsArgs& a) {
    Cloud ca = load_cloud(a.a);
    Cloud cb = load_cloud(a.b);
    json opts = json::object();
    if (!a.measures.empty()) opts["measures"] = a.measures;
    if (a.w_n) opts["w_n"] = *a.w_n;
    if (a.epsilon) opts["sinkhorn.epsilon"] = *a.epsilon;
    if (a.scaling) opts["sinkhorn.scaling"] = *a.scaling;
    if (a.tolerance) opts["sinkhorn.tolerance"] = *a.tolerance;
    if (a.max_iters) opts["sinkhorn.max_iters"] = *a.max_iters;
    char* res = nullptr;
    check(svfd_metrics(ca.get(), cb.get(), opts.dump().c_str(), &res));
    const std::string text = take(res);
    if (!a.out.empty()) write_text(a.out, text + "\n");
    std::cout << text << '\n';
    return kOk;
}

// ---- synth / info ----

struct SynthArgs {
    std::string kind = "ellipsoid", out;
    int resolution = 960;
    std::vector<double> axes, center;
    std::optional<double> radius, length, branch_length, branch_angle;
    bool cloud = false;
};

int run_synth(SynthArgs& a) {
    json p = json::object();
    if (!a.axes.empty()) p["axes"] = a.axes;
    if (!a.center.empty()) p["center"] = a.center;
    if (a.radius) p["radius"] = *a.radius;
    if (a.length) p["length"] = *a.length;
    if (a.branch_length) p["branch_length"] = *a.branch_length;
    if (a.branch_angle) p["branch_angle"] = *a.branch_angle;
    svfd_mesh* mm = nullptr;
    check(svfd_mesh_synth(a.kind.c_str(), p.dump().c_str(), a.resolution, &mm));
    Mesh mesh(mm);
    if (a.cloud) {
        svfd_cloud* c = nullptr;
        check(svfd_mesh_to_cloud(mesh.get(), &c));
        Cloud cloud(c);
        save_cloud(cloud.get(), a.out);
    } else {
        check(svfd_mesh_save(mesh.get(), a.out.c_str()));
    }
    std::cout << a.kind << " with " << svfd_mesh_face_count(mesh.get()) << " faces written to " << a.out << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Diffeomorphic registration of weighted point clouds with shape-conditioned velocity fields"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(svfd_version()));

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Train the velocity network and shape codes");
    t->add_option("--template", train.templ, "Template mesh or cloud [paths.template]");
    t->add_option("--shapes", train.shapes, "Training meshes or clouds [paths.shapes]");
    t->add_option("--ids", train.ids, "Shape ids (default: file stems) [paths.ids]");
    t->add_option("--out", train.out, "Output directory [paths.out]");
    t->add_option("--resume", train.resume, "Continue from a checkpoint");
    t->add_flag("--cpd-align", train.cpd_align, "Rigidly align each shape to the template with CPD first");
    t->add_flag("--quiet", train.quiet, "No per-epoch progress on stderr");
    train.flags.add(t, "--epochs", "train.epochs", "Training epochs");
    train.flags.add(t, "--batch-size", "train.batch_size", "Shapes per batch");
    train.flags.add(t, "--points", "train.points", "Points sampled per cloud");
    train.flags.add(t, "--steps", "train.steps", "Integration steps K");
    train.flags.add(t, "--adaptive", "train.adaptive", "Fraction of highest-loss points kept");
    train.flags.add(t, "--lr-theta", "train.lr_theta", "Network learning rate");
    train.flags.add(t, "--lr-z", "train.lr_z", "Code learning rate");
    train.flags.add(t, "--w-z", "train.w_z", "Code regularization weight");
    train.flags.add(t, "--w-theta", "train.w_theta", "Parameter regularization weight");
    train.flags.add(t, "--w-v", "train.w_v", "Kinetic energy weight");
    train.flags.add(t, "--w-n", "train.w_n", "Normal penalty weight (NCD)");
    train.flags.add(t, "--attachment", "train.attachment", "cd, cdw, pcd, pcdw, ncd, ncdw, sd, sdw");
    train.flags.add(t, "--seed", "train.seed", "Random seed");
    train.flags.add(t, "--double", "train.double_precision", "64-bit network evaluation (true/false)");
    train.flags.add(t, "--checkpoint-every", "train.checkpoint_every", "Checkpoint period in epochs");
    train.flags.add(t, "--n-z", "network.n_z", "Code length");
    train.flags.add(t, "--g-z", "network.g_z", "Code grid size");
    train.flags.add(t, "--epsilon", "sinkhorn.epsilon", "Sinkhorn temperature");
    train.flags.add_common(t);

    InferArgs infer;
    auto* i = app.add_subcommand("infer", "Fit a latent code for a new shape with the network frozen");
    i->add_option("--model", infer.model, "Checkpoint")->required();
    i->add_option("--shape", infer.shape, "Mesh or cloud")->required();
    i->add_option("--out", infer.out, "Output directory")->required();
    infer.flags.add(i, "--adam-epochs", "infer.adam_epochs", "Adam epochs");
    infer.flags.add(i, "--lbfgs-epochs", "infer.lbfgs_epochs", "L-BFGS epochs");
    infer.flags.add(i, "--lbfgs-iterations", "infer.lbfgs_iterations", "L-BFGS iterations per epoch");
    infer.flags.add(i, "--lr-multiplier", "infer.lr_multiplier", "Adam rate as a multiple of train.lr_z");
    infer.flags.add(i, "--points", "train.points", "Points sampled per cloud");
    infer.flags.add(i, "--seed", "train.seed", "Random seed");
    infer.flags.add_common(i);

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Generate shapes from the latent space");
    g->add_option("--model", gen.model, "Checkpoint")->required();
    g->add_option("--mode", gen.mode, "gaussian, interpolate or code-file")->capture_default_str();
    g->add_option("--n", gen.n, "Number of shapes")->capture_default_str();
    g->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
    g->add_option("--from", gen.from, "Start id (interpolate)");
    g->add_option("--to", gen.to, "End id (interpolate)");
    g->add_option("--t", gen.t, "Interpolation parameters (default: n evenly spaced)");
    g->add_option("--code-file", gen.code_file, "JSON with 'code' or 'codes' (code-file)");
    g->add_option("--out", gen.out, "Output directory")->required();

    FlowArgs geo;
    auto* gd = app.add_subcommand("geodesic", "Export intermediate shapes along the flow");
    gd->add_option("--model", geo.model, "Checkpoint")->required();
    gd->add_option("--shape", geo.shape, "Input cloud (backward default: template)");
    gd->add_option("--direction", geo.direction, "forward (shape to template) or backward")->capture_default_str();
    gd->add_option("--steps", geo.steps, "Integration steps (default: trained K)");
    gd->add_option("--out", geo.out, "Output directory")->required();
    geo.code.add(gd);

    FlowArgs map;
    auto* mp = app.add_subcommand("map", "Map a cloud with a stored or given code");
    mp->add_option("--model", map.model, "Checkpoint")->required();
    mp->add_option("--shape", map.shape, "Input cloud (backward default: template)");
    mp->add_option("--direction", map.direction, "forward (shape to template) or backward")->capture_default_str();
    mp->add_option("--steps", map.steps, "Integration steps (default: trained K)");
    mp->add_option("--out", map.out, "Output PLY")->required();
    map.code.add(mp);

    AugmentArgs aug;
    auto* au = app.add_subcommand("augment", "Thin-plate-spline data augmentation of vessel models");
    au->add_option("--models", aug.models, "Vessel model JSON files or directories")->required();
    au->add_option("--meshes", aug.meshes, "Meshes matching the models (default: same stem or swept)");
    au->add_option("--out", aug.out, "Output directory")->required();
    aug.flags.add(au, "--n", "augment.count", "Meshes to generate");
    aug.flags.add(au, "--seed", "augment.seed", "Random seed");
    aug.flags.add(au, "--w-h", "augment.w_h", "Hessian smoothing weight");
    aug.flags.add(au, "--tau", "augment.tau", "Pruning tolerance");
    aug.flags.add(au, "--m-p", "augment.m_p", "Samples per portion");
    aug.flags.add(au, "--m-c", "augment.m_c", "Samples per contour");
    aug.flags.add(au, "--outlier-weight", "augment.outlier_weight", "CPD outlier weight");
    aug.flags.add(au, "--affine", "augment.tps_affine", "Add the affine term to the spline (true/false)");
    aug.flags.add(au, "--rigid", "augment.use_rigid", "Rigid pre-alignment (true/false)");
    aug.flags.add(au, "--max-attempts", "augment.max_attempts", "Attempt budget (0: 20 per mesh)");
    aug.flags.add_common(au);

    MetricsArgs met;
    auto* me = app.add_subcommand("metrics", "Discrepancy measures between two clouds");
    me->add_option("a", met.a, "First mesh or cloud")->required();
    me->add_option("b", met.b, "Second mesh or cloud")->required();
    me->add_option("--measure", met.measures, "cd, cdw, pcd, pcdw, ncd, ncdw, sd, sdw (repeatable)");
    me->add_option("--w-n", met.w_n, "Normal penalty weight (default 1e-2)");
    me->add_option("--epsilon", met.epsilon, "Sinkhorn temperature (enables sd/sdw)");
    me->add_option("--scaling", met.scaling, "Sinkhorn epsilon scaling");
    me->add_option("--max-iters", met.max_iters, "Sinkhorn iterations per level");
    me->add_option("--tolerance", met.tolerance, "Sinkhorn tolerance");
    me->add_option("--out", met.out, "Also write the JSON here");

    SynthArgs syn;
    auto* sy = app.add_subcommand("synth", "Write a synthetic test shape");
    sy->add_option("--kind", syn.kind, "ellipsoid, tube or y_branch")->capture_default_str();
    sy->add_option("--resolution", syn.resolution, "Target face count")->capture_default_str();
    sy->add_option("--axes", syn.axes, "Ellipsoid semi-axes")->expected(3);
    sy->add_option("--center", syn.center, "Centre")->expected(3);
    sy->add_option("--radius", syn.radius, "Tube radius");
    sy->add_option("--length", syn.length, "Tube length");
    sy->add_option("--branch-length", syn.branch_length, "Branch length (y_branch)");
    sy->add_option("--branch-angle", syn.branch_angle, "Branch angle in radians (y_branch)");
    sy->add_flag("--cloud", syn.cloud, "Write the weighted cloud instead of the mesh");
    sy->add_option("--out", syn.out, "Output PLY")->required();

    std::string info_model;
    auto* in = app.add_subcommand("info", "Print checkpoint metadata");
    in->add_option("--model", info_model, "Checkpoint")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kValidation;
    }

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    svfd_set_warning_handler(warning_to_stderr, nullptr);
    try {
        if (*t) return run_train(train);
        if (*i) return run_infer(infer);
        if (*g) return run_generate(gen);
        if (*gd) return run_geodesic(geo);
        if (*mp) return run_map(map);
        if (*au) return run_augment(aug);
        if (*me) return run_metrics(met);
        if (*sy) return run_synth(syn);
        if (*in) {
            Model m = load_model(info_model);
            char* s = nullptr;
            check(svfd_model_info(m.get(), &s));
            std::cout << take(s) << '\n';
            return kOk;
        }
    } catch (const CliError& e) {
        std::cerr << "error: " << e.message << '\n';
        return e.code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumeric;
    }
    return kOk;
}
