#include "svfd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "svfd/config.hpp"
#include "svfd/error.hpp"

namespace svfd {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

using json = nlohmann::json;
constexpr char kMagic[8] = {'S', 'V', 'F', 'D', 'C', 'K', 'P', 'T'};

json arch_json(const Architecture& a) {
    return {{"w_fa", a.w_fa}, {"l_fa", a.l_fa}, {"w_df", a.w_df}, {"l_df", a.l_df},     {"n_e", a.n_e},
            {"g_z", a.g_z},   {"n_z", a.n_z},   {"negative_slope", a.negative_slope}};
}

Architecture arch_from(const json& j) {
    Architecture a;
    a.w_fa = j.at("w_fa").get<int>();
    a.l_fa = j.at("l_fa").get<int>();
    a.w_df = j.at("w_df").get<int>();
    a.l_df = j.at("l_df").get<int>();
    a.n_e = j.at("n_e").get<int>();
    a.g_z = j.at("g_z").get<int>();
    a.n_z = j.at("n_z").get<int>();
    a.negative_slope = j.at("negative_slope").get<double>();
    return a;
}

[[noreturn]] void invalid(const std::string& why) { throw_io("invalid container: " + why); }

class Writer {
public:
    json directory = json::array();
    std::string data;

    void add(const std::string& name, const std::vector<std::size_t>& shape, const double* values, std::size_t n) {
        directory.push_back({{"name", name}, {"shape", shape}, {"offset", data.size()}, {"dtype", "f64"}});
        data.append(reinterpret_cast<const char*>(values), n * sizeof(double));
    }
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& c) {
    c.net.validate();
    c.codes.validate();
    if (c.codes.codes.rows() != c.net.arch().n_z) throw_validation("code length does not match the architecture");
    Writer w;
    w.add("theta", {c.net.num_params()}, c.net.params().data(), c.net.num_params());
    const auto ns = static_cast<std::size_t>(c.codes.codes.cols());
    const auto nz = static_cast<std::size_t>(c.codes.codes.rows());
    // Column-major N_z x N_s is row-major N_s x N_z: one code per row.
    w.add("codes", {ns, nz}, c.codes.codes.data(), ns * nz);
    const auto m = c.templ.size();
    const Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> tp = c.templ.points;
    w.add("template.points", {m, 3}, tp.data(), 3 * m);
    w.add("template.weights", {m}, c.templ.weights.data(), m);
    if (c.templ.normals) {
        const Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> tn = *c.templ.normals;
        w.add("template.normals", {m, 3}, tn.data(), 3 * m);
    }
    Settings s;
    s.train = c.config;
    json header = {
        {"format", "svfd-checkpoint"},
        {"version", 1},
        {"architecture", arch_json(c.net.arch())},
        {"parameter_count", c.net.num_params()},
        {"checksum", c.net.checksum()},
        {"ids", c.codes.ids},
        {"epoch", c.epoch},
        {"normalization",
         {{"scale", {c.normalization.scale.x(), c.normalization.scale.y(), c.normalization.scale.z()}},
          {"offset", {c.normalization.offset.x(), c.normalization.offset.y(), c.normalization.offset.z()}}}},
        {"config", json::parse(settings_to_json(s))},
        {"tensors", w.directory},
    };
    const std::string h = header.dump();
    std::string out(kMagic, 8);
    const std::uint64_t len = h.size();
    out.append(reinterpret_cast<const char*>(&len), 8);
    out += h;
    out += w.data;
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) invalid("bad magic");
    std::uint64_t len = 0;
    std::memcpy(&len, bytes.data() + 8, 8);
    if (len > bytes.size() - 16) invalid("header length exceeds file size");
    json h;
    try {
        h = json::parse(bytes.substr(16, len));
    } catch (const json::exception& e) {
        invalid(std::string("header is not JSON (") + e.what() + ")");
    }
    const std::size_t base = 16 + len;
    Checkpoint c;
    try {
        const Architecture arch = arch_from(h.at("architecture"));
        arch.validate();
        c.net = VelocityNet(arch);
        std::map<std::string, json> dir;
        for (const auto& t : h.at("tensors")) {
            if (t.at("dtype") != "f64") invalid("unsupported dtype " + t.at("dtype").dump());
            dir[t.at("name").get<std::string>()] = t;
        }
        auto read = [&](const std::string& name, std::vector<std::size_t> expect) -> const double* {
            const auto it = dir.find(name);
            if (it == dir.end()) invalid("missing tensor '" + name + "'");
            const auto shape = it->second.at("shape").get<std::vector<std::size_t>>();
            if (shape.size() != expect.size()) invalid("tensor '" + name + "' has the wrong rank");
            std::size_t n = 1;
            for (std::size_t i = 0; i < shape.size(); ++i) {
                if (expect[i] != 0 && shape[i] != expect[i]) invalid("tensor '" + name + "' has the wrong shape");
                n *= shape[i];
            }
            const auto off = it->second.at("offset").get<std::size_t>();
            if (off > bytes.size() - base || n * sizeof(double) > bytes.size() - base - off) {
                invalid("tensor '" + name + "' is truncated");
            }
            return reinterpret_cast<const double*>(bytes.data() + base + off);
        };
        auto copy = [](const double* src, double* dst, std::size_t n) { std::memcpy(dst, src, n * sizeof(double)); };

        copy(read("theta", {c.net.num_params()}), c.net.params().data(), c.net.num_params());
        c.codes.ids = h.at("ids").get<std::vector<std::string>>();
        const std::size_t ns = c.codes.ids.size();
        const auto nz = static_cast<std::size_t>(arch.n_z);
        c.codes.codes.resize(arch.n_z, static_cast<Eigen::Index>(ns));
        copy(read("codes", {ns, nz}), c.codes.codes.data(), ns * nz);

        const auto& wdir = dir.find("template.weights");
        if (wdir == dir.end()) invalid("missing tensor 'template.weights'");
        const std::size_t m = wdir->second.at("shape").at(0).get<std::size_t>();
        Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> tp(static_cast<Eigen::Index>(m), 3);
        copy(read("template.points", {m, 3}), tp.data(), 3 * m);
        c.templ.points = tp;
        c.templ.weights.resize(static_cast<Eigen::Index>(m));
        copy(read("template.weights", {m}), c.templ.weights.data(), m);
        if (dir.count("template.normals")) {
            copy(read("template.normals", {m, 3}), tp.data(), 3 * m);
            c.templ.normals = PointMatrix(tp);
        }
        const auto& nrm = h.at("normalization");
        const auto sc = nrm.at("scale").get<std::vector<double>>();
        const auto of = nrm.at("offset").get<std::vector<double>>();
        if (sc.size() != 3 || of.size() != 3) invalid("normalization must have 3 components");
        c.normalization.scale = Vec3(sc[0], sc[1], sc[2]);
        c.normalization.offset = Vec3(of[0], of[1], of[2]);
        c.epoch = h.value("epoch", 0);
        Settings s;
        s.train.arch = arch;
        if (h.contains("config")) apply_settings_json(s, h.at("config").dump());
        c.config = s.train;
        check_architecture(c.config.arch, arch);
        if (h.contains("checksum") && h.at("checksum").get<std::uint64_t>() != c.net.checksum()) {
            invalid("parameter checksum mismatch");
        }
    } catch (const json::exception& e) {
        invalid(std::string("malformed header (") + e.what() + ")");
    }
    try {
        c.net.validate();
        c.codes.validate();
        c.templ.validate();
        c.normalization.validate();
    } catch (const Error& e) {
        invalid(e.what());
    }
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    const std::string bytes = encode_checkpoint(ckpt);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw_io("cannot open '" + tmp + "' for writing");
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw_io("failed writing '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw_io("cannot move checkpoint into '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw_io("cannot open checkpoint '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return decode_checkpoint(ss.str());
}

void check_architecture(const Architecture& e, const Architecture& f) {
    std::ostringstream os;
    auto cmp = [&](const char* name, auto a, auto b) {
        if (a != b) os << ' ' << name << " (expected " << a << ", found " << b << ')';
    };
    cmp("w_fa", e.w_fa, f.w_fa);
    cmp("l_fa", e.l_fa, f.l_fa);
    cmp("w_df", e.w_df, f.w_df);
    cmp("l_df", e.l_df, f.l_df);
    cmp("n_e", e.n_e, f.n_e);
    cmp("g_z", e.g_z, f.g_z);
    cmp("n_z", e.n_z, f.n_z);
    cmp("negative_slope", e.negative_slope, f.negative_slope);
    if (!os.str().empty()) throw_validation("architecture mismatch:" + os.str());
}

}  // namespace svfd
