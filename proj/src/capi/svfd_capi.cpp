#include "svfd/svfd.h"

#include <atomic>
#include <cstring>
#include <memory>
#include <new>
#include <string>

#include <json.hpp>

#include "svfd/augmentation.hpp"
#include "svfd/checkpoint.hpp"
#include "svfd/config.hpp"
#include "svfd/distances.hpp"
#include "svfd/error.hpp"
#include "svfd/latent.hpp"
#include "svfd/vessel_io.hpp"

struct svfd_cloud {
    svfd::WeightedPointCloud c;
};
struct svfd_mesh {
    svfd::TriangleMesh m;
};
struct svfd_model {
    svfd::Checkpoint ck;
};
struct svfd_vessel {
    svfd::VesselDocument doc;
};

namespace {

using json = nlohmann::json;
using svfd::PointMatrix;
using svfd::WeightedPointCloud;

thread_local std::string g_last_error;
std::atomic<int> g_stop{0};
static_assert(std::atomic<int>::is_always_lock_free);

svfd_status fail(svfd_status s, const std::string& msg) {
    g_last_error = msg;
    return s;
}

template <class F>
svfd_status guard(F&& f) {
    try {
        f();
        g_last_error.clear();
        return SVFD_OK;
    } catch (const svfd::Error& e) {
        return fail(static_cast<svfd_status>(e.kind()), e.what());
    } catch (const json::exception& e) {
        return fail(SVFD_ERR_VALIDATION, std::string("invalid JSON: ") + e.what());
    } catch (const std::bad_alloc&) {
        return fail(SVFD_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(SVFD_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(SVFD_ERR_INTERNAL, "unknown error");
    }
}

void need(const void* p, const char* what) {
    if (!p) svfd::throw_validation(std::string(what) + " must not be NULL");
}

char* dup(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

bool stop_requested() { return g_stop.load(std::memory_order_relaxed) != 0; }

svfd::Settings settings_from(const char* overrides, const svfd::Settings& base = {}) {
    svfd::Settings s = base;
    if (overrides && *overrides) svfd::apply_settings_json(s, overrides);
    return s;
}

PointMatrix rows_to_matrix(const double* data, std::size_t n) {
    PointMatrix p(static_cast<Eigen::Index>(n), 3);
    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) p(static_cast<Eigen::Index>(i), k) = data[3 * i + static_cast<std::size_t>(k)];
    }
    return p;
}

void matrix_to_rows(const PointMatrix& p, double* out) {
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (int k = 0; k < 3; ++k) out[3 * i + k] = p(i, k);
    }
}

svfd_cloud* wrap(WeightedPointCloud c) { return new svfd_cloud{std::move(c)}; }

json summary(const svfd::LocalDistances& ld) {
    return {{"mean_fld", ld.mean_fld()}, {"max_fld", ld.max_fld()}, {"mean_bld", ld.mean_bld()}, {"max_bld", ld.max_bld()}};
}

json diag_json(const svfd::Diagnostics& d) {
    return {{"mean_fld", d.mean_fld}, {"max_fld", d.max_fld}, {"mean_bld", d.mean_bld}, {"max_bld", d.max_bld}};
}

struct DirectionMaps {
    WeightedPointCloud direct;   // shape mapped onto the template, unit cube
    WeightedPointCloud inverse;  // template mapped onto the shape, unit cube
};

DirectionMaps both_maps(const svfd::Checkpoint& ck, const WeightedPointCloud& shape_u, const Eigen::VectorXd& code) {
    const auto grid = svfd::reshape_code(code, ck.net.arch().g_z);
    const int K = ck.config.steps;
    DirectionMaps m;
    m.direct = shape_u.with_points(svfd::integrate_forward(shape_u.points, grid, ck.net, K).mapped());
    m.inverse = ck.templ.with_points(svfd::integrate_backward_modified(ck.templ.points, grid, ck.net, K).mapped());
    return m;
}

json direction_report(const svfd::Checkpoint& ck, const WeightedPointCloud& shape_u, const DirectionMaps& m) {
    const auto& T = ck.normalization;
    return {
        {"direct",
         {{"unit_cube", summary(svfd::local_distances(m.direct.points, ck.templ.points))},
          {"physical", summary(svfd::local_distances(T.invert(m.direct.points), T.invert(ck.templ.points)))}}},
        {"inverse",
         {{"unit_cube", summary(svfd::local_distances(m.inverse.points, shape_u.points))},
          {"physical", summary(svfd::local_distances(T.invert(m.inverse.points), T.invert(shape_u.points)))}}},
    };
}

Eigen::VectorXd code_from(const svfd_model* model, const double* code) {
    const auto nz = model->ck.net.arch().n_z;
    return Eigen::Map<const Eigen::VectorXd>(code, nz);
}

json loss_json(const svfd::EpochRecord& r) {
    return {{"epoch", r.epoch},
            {"total", r.loss.total},
            {"direct", r.loss.direct},
            {"inverse", r.loss.inverse},
            {"code_reg", r.loss.code_reg},
            {"theta_reg", r.loss.theta_reg},
            {"kinetic", r.loss.kinetic},
            {"seconds", r.seconds}};
}

svfd::TrainCallbacks callbacks(svfd_epoch_fn on_epoch, void* user, const char* checkpoint_path,
                               const svfd::Checkpoint* base) {
    svfd::TrainCallbacks cb;
    if (checkpoint_path && base) {
        const std::string path = checkpoint_path;
        cb.on_checkpoint = [path, base](const svfd::VelocityNet& net, const Eigen::MatrixXd& codes, int epoch) {
            svfd::Checkpoint ck = *base;
            ck.net = net;
            ck.codes.codes = codes;
            ck.epoch += epoch;
            svfd::save_checkpoint(ck, path);
        };
    }
    if (on_epoch) {
        cb.on_epoch = [on_epoch, user](const svfd::EpochRecord& r) { on_epoch(r.epoch, loss_json(r).dump().c_str(), user); };
    }
    cb.should_stop = stop_requested;
    return cb;
}

svfd_message_fn g_warn_fn = nullptr;
void* g_warn_user = nullptr;

}  // namespace

extern "C" {

const char* svfd_version(void) { return "0.1.0"; }

const char* svfd_last_error(void) { return g_last_error.c_str(); }

void svfd_string_free(char* s) { std::free(s); }

void svfd_set_warning_handler(svfd_message_fn fn, void* user) {
    g_warn_fn = fn;
    g_warn_user = user;
    if (fn) {
        svfd::set_warning_sink([](const std::string& m) { g_warn_fn(m.c_str(), g_warn_user); });
    } else {
        svfd::set_warning_sink(nullptr);
    }
}

void svfd_request_stop(void) { g_stop.store(1, std::memory_order_relaxed); }
void svfd_clear_stop(void) { g_stop.store(0, std::memory_order_relaxed); }
int svfd_stop_requested(void) { return stop_requested() ? 1 : 0; }

svfd_status svfd_default_settings(char** json_out) {
    return guard([&] {
        need(json_out, "json_out");
        *json_out = dup(svfd::settings_to_json(svfd::Settings{}));
    });
}

svfd_status svfd_resolve_settings(const char* overrides, char** json_out) {
    return guard([&] {
        need(json_out, "json_out");
        const svfd::Settings s = settings_from(overrides);
        s.train.validate();
        s.augment.validate();
        *json_out = dup(svfd::settings_to_json(s));
    });
}

/* ---- clouds ---- */

svfd_status svfd_cloud_load(const char* path, svfd_cloud** out) {
    return guard([&] {
        need(path, "path");
        need(out, "out");
        *out = wrap(svfd::load_cloud(path));
    });
}

svfd_status svfd_cloud_from_arrays(const double* points, const double* weights, const double* normals, size_t n,
                                   svfd_cloud** out) {
    return guard([&] {
        need(points, "points");
        need(out, "out");
        WeightedPointCloud c = WeightedPointCloud::uniform(rows_to_matrix(points, n));
        if (weights) c.weights = Eigen::Map<const Eigen::VectorXd>(weights, static_cast<Eigen::Index>(n));
        if (normals) c.normals = rows_to_matrix(normals, n);
        c.validate();
        *out = wrap(std::move(c));
    });
}

svfd_status svfd_cloud_save(const svfd_cloud* cloud, const char* path) {
    return guard([&] {
        need(cloud, "cloud");
        need(path, "path");
        svfd::save_cloud_ply(cloud->c, path);
    });
}

size_t svfd_cloud_size(const svfd_cloud* cloud) { return cloud ? cloud->c.size() : 0; }

int svfd_cloud_has_normals(const svfd_cloud* cloud) { return cloud && cloud->c.has_normals() ? 1 : 0; }

svfd_status svfd_cloud_points(const svfd_cloud* cloud, double* out) {
    return guard([&] {
        need(cloud, "cloud");
        need(out, "out");
        matrix_to_rows(cloud->c.points, out);
    });
}

svfd_status svfd_cloud_weights(const svfd_cloud* cloud, double* out) {
    return guard([&] {
        need(cloud, "cloud");
        need(out, "out");
        Eigen::Map<Eigen::VectorXd>(out, cloud->c.weights.size()) = cloud->c.weights;
    });
}

void svfd_cloud_free(svfd_cloud* cloud) { delete cloud; }

void svfd_cloud_array_free(svfd_cloud** clouds, size_t count) {
    if (!clouds) return;
    for (size_t i = 0; i < count; ++i) delete clouds[i];
    std::free(clouds);
}

/* ---- meshes ---- */

svfd_status svfd_mesh_load(const char* path, svfd_mesh** out) {
    return guard([&] {
        need(path, "path");
        need(out, "out");
        *out = new svfd_mesh{svfd::load_mesh(path)};
    });
}

svfd_status svfd_mesh_save(const svfd_mesh* mesh, const char* path) {
    return guard([&] {
        need(mesh, "mesh");
        need(path, "path");
        svfd::save_mesh_ply(mesh->m, path);
    });
}

svfd_status svfd_mesh_synth(const char* kind, const char* params_json, int resolution, svfd_mesh** out) {
    return guard([&] {
        need(kind, "kind");
        need(out, "out");
        svfd::ShapeParams p;
        if (params_json && *params_json) {
            const json j = json::parse(params_json);
            auto vec = [&](const char* key, svfd::Vec3& v) {
                if (!j.contains(key)) return;
                const auto a = j.at(key).get<std::vector<double>>();
                if (a.size() != 3) svfd::throw_validation(std::string(key) + " must have 3 components");
                v = svfd::Vec3(a[0], a[1], a[2]);
            };
            vec("axes", p.axes);
            vec("center", p.center);
            p.radius = j.value("radius", p.radius);
            p.length = j.value("length", p.length);
            p.branch_length = j.value("branch_length", p.branch_length);
            p.branch_angle = j.value("branch_angle", p.branch_angle);
            p.ring_vertices = j.value("ring_vertices", p.ring_vertices);
        }
        *out = new svfd_mesh{svfd::synth_shape(svfd::parse_shape_kind(kind), p, resolution)};
    });
}

svfd_status svfd_mesh_to_cloud(const svfd_mesh* mesh, svfd_cloud** out) {
    return guard([&] {
        need(mesh, "mesh");
        need(out, "out");
        *out = wrap(svfd::mesh_to_weighted_cloud(mesh->m));
    });
}

size_t svfd_mesh_vertex_count(const svfd_mesh* mesh) { return mesh ? mesh->m.vertex_count() : 0; }
size_t svfd_mesh_face_count(const svfd_mesh* mesh) { return mesh ? mesh->m.face_count() : 0; }

svfd_status svfd_mesh_quality(const svfd_mesh* mesh, char** json_out) {
    return guard([&] {
        need(mesh, "mesh");
        need(json_out, "json_out");
        const auto q = svfd::mesh_quality(mesh->m);
        *json_out = dup(json{{"min_jacobian", q.min_jacobian}, {"decile_mean", q.decile_mean}, {"pass", q.pass}}.dump());
    });
}

void svfd_mesh_free(svfd_mesh* mesh) { delete mesh; }

void svfd_mesh_array_free(svfd_mesh** meshes, size_t count) {
    if (!meshes) return;
    for (size_t i = 0; i < count; ++i) delete meshes[i];
    std::free(meshes);
}

svfd_status svfd_rigid_align(const svfd_cloud* source, const svfd_cloud* target, double outlier_weight,
                             double* transform_out, svfd_cloud** aligned) {
    return guard([&] {
        need(source, "source");
        need(target, "target");
        const auto& a = source->c;
        const auto& b = target->c;
        a.validate();
        b.validate();
        svfd::RigidTransform init;
        init.scale = b.bounding_diameter() / a.bounding_diameter();
        const svfd::Vec3 ca = a.points.transpose() * a.weights;
        const svfd::Vec3 cb = b.points.transpose() * b.weights;
        init.translation = cb - init.scale * ca;
        auto strided = [](const PointMatrix& p) {
            const Eigen::Index cap = 400;
            if (p.rows() <= cap) return PointMatrix(p);
            PointMatrix out(cap, 3);
            for (Eigen::Index i = 0; i < cap; ++i) out.row(i) = p.row(i * p.rows() / cap);
            return out;
        };
        svfd::CpdOptions o;
        o.outlier_weight = outlier_weight;
        const svfd::RigidTransform T = svfd::cpd_rigid(strided(a.points), strided(b.points), init, o).transform;
        if (transform_out) {
            Eigen::Map<Eigen::Matrix<double, 4, 4, Eigen::RowMajor>> M(transform_out);
            M.setIdentity();
            M.topLeftCorner<3, 3>() = T.scale * T.rotation;
            M.topRightCorner<3, 1>() = T.translation;
        }
        if (aligned) *aligned = wrap(T.apply(a));
    });
}

/* ---- discrepancy measures ---- */

svfd_status svfd_metrics(const svfd_cloud* a, const svfd_cloud* b, const char* options_json, char** json_out) {
    return guard([&] {
        need(a, "a");
        need(b, "b");
        need(json_out, "json_out");
        const json opts = options_json && *options_json ? json::parse(options_json) : json::object();
        svfd::AttachmentOptions ao;
        ao.w_n = opts.value("w_n", ao.w_n);
        bool sinkhorn_given = false;
        for (const char* key : {"sinkhorn.epsilon", "sinkhorn.scaling", "sinkhorn.max_iters", "sinkhorn.tolerance"}) {
            if (opts.contains(key)) sinkhorn_given = true;
        }
        ao.sinkhorn.epsilon = opts.value("sinkhorn.epsilon", ao.sinkhorn.epsilon);
        ao.sinkhorn.scaling = opts.value("sinkhorn.scaling", ao.sinkhorn.scaling);
        ao.sinkhorn.max_iters = opts.value("sinkhorn.max_iters", ao.sinkhorn.max_iters);
        ao.sinkhorn.tolerance = opts.value("sinkhorn.tolerance", ao.sinkhorn.tolerance);
        for (const auto& [k, v] : opts.items()) {
            if (k != "measures" && k != "w_n" && k.rfind("sinkhorn.", 0) != 0) {
                svfd::throw_validation("unknown metrics option '" + k + "'");
            }
        }
        const bool normals = a->c.has_normals() && b->c.has_normals();
        std::vector<svfd::Attachment> kinds;
        if (opts.contains("measures")) {
            for (const auto& m : opts.at("measures")) {
                const auto kind = svfd::parse_attachment(m.get<std::string>());
                if (svfd::attachment_needs_normals(kind) && !normals) {
                    svfd::throw_validation("measure '" + svfd::attachment_name(kind) + "' needs normals, but cloud " +
                                           (a->c.has_normals() ? "B" : "A") +
                                           " has none (load a mesh or a cloud PLY with nx/ny/nz)");
                }
                kinds.push_back(kind);
            }
        } else {
            using svfd::Attachment;
            kinds = {Attachment::CD, Attachment::CDW};
            if (normals) {
                for (auto k : {Attachment::PCD, Attachment::PCDW, Attachment::NCD, Attachment::NCDW}) kinds.push_back(k);
            }
            if (sinkhorn_given) {
                kinds.push_back(Attachment::SD);
                kinds.push_back(Attachment::SDW);
            }
        }
        json out = json::object();
        for (auto k : kinds) {
            ao.kind = k;
            out[svfd::attachment_name(k)] = svfd::evaluate_attachment(a->c, b->c, ao, false).value;
        }
        out["w_n"] = ao.w_n;
        out["local_distances"] = summary(svfd::local_distances(a->c, b->c));
        *json_out = dup(out.dump(2));
    });
}

/* ---- training and models ---- */

svfd_status svfd_train(const svfd_cloud* const* shapes, const char* const* ids, size_t count, const svfd_cloud* templ,
                       const char* settings_json, svfd_epoch_fn on_epoch, void* user, const char* checkpoint_path,
                       svfd_model** out) {
    return guard([&] {
        need(shapes, "shapes");
        need(templ, "templ");
        need(out, "out");
        if (count == 0) svfd::throw_validation("training needs at least one shape");
        const svfd::Settings s = settings_from(settings_json);
        s.train.validate();
        std::vector<WeightedPointCloud> all;
        for (size_t i = 0; i < count; ++i) {
            need(shapes[i], "shapes[i]");
            all.push_back(shapes[i]->c);
        }
        all.push_back(templ->c);
        auto norm = svfd::normalize_to_unit_cube(all);
        WeightedPointCloud t = std::move(norm.clouds.back());
        norm.clouds.pop_back();
        auto m = std::make_unique<svfd_model>();
        for (size_t i = 0; i < count; ++i) {
            m->ck.codes.ids.push_back(ids && ids[i] ? ids[i] : "shape_" + std::to_string(i));
        }
        m->ck.templ = std::move(t);
        m->ck.normalization = norm.transform;
        m->ck.config = s.train;
        svfd::TrainResult r =
            svfd::train(norm.clouds, m->ck.templ, s.train, callbacks(on_epoch, user, checkpoint_path, &m->ck));
        m->ck.net = std::move(r.net);
        m->ck.codes.codes = std::move(r.codes);
        m->ck.epoch = r.history.empty() ? 0 : r.history.back().epoch;
        *out = m.release();
    });
}

svfd_status svfd_train_resume(svfd_model* model, const svfd_cloud* const* shapes, size_t count,
                              const char* settings_json, svfd_epoch_fn on_epoch, void* user,
                              const char* checkpoint_path) {
    return guard([&] {
        need(model, "model");
        need(shapes, "shapes");
        auto& ck = model->ck;
        if (count != ck.codes.ids.size()) {
            svfd::throw_validation("model was trained on " + std::to_string(ck.codes.ids.size()) + " shapes, got " +
                                   std::to_string(count));
        }
        svfd::Settings base;
        base.train = ck.config;
        const svfd::Settings s = settings_from(settings_json, base);
        svfd::check_architecture(ck.net.arch(), s.train.arch);
        std::vector<WeightedPointCloud> clouds;
        for (size_t i = 0; i < count; ++i) {
            need(shapes[i], "shapes[i]");
            clouds.push_back(ck.normalization.apply(shapes[i]->c));
        }
        svfd::TrainInit init{&ck.net, &ck.codes.codes};
        const svfd::Checkpoint snapshot = ck;
        svfd::TrainResult r =
            svfd::train(clouds, ck.templ, s.train, callbacks(on_epoch, user, checkpoint_path, &snapshot), init);
        ck.net = std::move(r.net);
        ck.codes.codes = std::move(r.codes);
        ck.config = s.train;
        ck.epoch += r.history.empty() ? 0 : r.history.back().epoch;
    });
}

svfd_status svfd_model_report(const svfd_model* model, const svfd_cloud* const* shapes, size_t count,
                              char** json_out) {
    return guard([&] {
        need(model, "model");
        need(shapes, "shapes");
        need(json_out, "json_out");
        const auto& ck = model->ck;
        if (count != ck.codes.ids.size()) svfd::throw_validation("shape count does not match the model");
        json arr = json::array();
        for (size_t i = 0; i < count; ++i) {
            need(shapes[i], "shapes[i]");
            const WeightedPointCloud u = ck.normalization.apply(shapes[i]->c);
            const Eigen::VectorXd code = ck.codes.codes.col(static_cast<Eigen::Index>(i));
            json e = direction_report(ck, u, both_maps(ck, u, code));
            e["id"] = ck.codes.ids[i];
            arr.push_back(e);
        }
        *json_out = dup(json{{"shapes", arr}, {"epoch", ck.epoch}}.dump(2));
    });
}

svfd_status svfd_model_save(const svfd_model* model, const char* path) {
    return guard([&] {
        need(model, "model");
        need(path, "path");
        svfd::save_checkpoint(model->ck, path);
    });
}

svfd_status svfd_model_load(const char* path, svfd_model** out) {
    return guard([&] {
        need(path, "path");
        need(out, "out");
        *out = new svfd_model{svfd::load_checkpoint(path)};
    });
}

svfd_status svfd_model_info(const svfd_model* model, char** json_out) {
    return guard([&] {
        need(model, "model");
        need(json_out, "json_out");
        const auto& ck = model->ck;
        const auto& a = ck.net.arch();
        svfd::Settings s;
        s.train = ck.config;
        const json j = {
            {"architecture",
             {{"w_fa", a.w_fa}, {"l_fa", a.l_fa}, {"w_df", a.w_df}, {"l_df", a.l_df}, {"n_e", a.n_e}, {"g_z", a.g_z},
              {"n_z", a.n_z}, {"negative_slope", a.negative_slope}}},
            {"parameter_count", ck.net.num_params()},
            {"checksum", ck.net.checksum()},
            {"ids", ck.codes.ids},
            {"epoch", ck.epoch},
            {"template_points", ck.templ.size()},
            {"settings", json::parse(svfd::settings_to_json(s))},
        };
        *json_out = dup(j.dump(2));
    });
}

uint64_t svfd_model_checksum(const svfd_model* model) { return model ? model->ck.net.checksum() : 0; }

size_t svfd_model_code_dim(const svfd_model* model) {
    return model ? static_cast<size_t>(model->ck.net.arch().n_z) : 0;
}

size_t svfd_model_code_count(const svfd_model* model) { return model ? model->ck.codes.ids.size() : 0; }

svfd_status svfd_model_code(const svfd_model* model, size_t index, double* out) {
    return guard([&] {
        need(model, "model");
        need(out, "out");
        if (index >= model->ck.codes.ids.size()) svfd::throw_validation("code index out of range");
        const auto col = model->ck.codes.codes.col(static_cast<Eigen::Index>(index));
        Eigen::Map<Eigen::VectorXd>(out, col.size()) = col;
    });
}

svfd_status svfd_model_template(const svfd_model* model, svfd_cloud** out) {
    return guard([&] {
        need(model, "model");
        need(out, "out");
        *out = wrap(model->ck.normalization.invert(model->ck.templ));
    });
}

void svfd_model_free(svfd_model* model) { delete model; }

svfd_status svfd_infer(const svfd_model* model, const svfd_cloud* shape, const char* settings_json, double* code_out,
                       char** report_json, svfd_cloud** direct, svfd_cloud** inverse) {
    return guard([&] {
        need(model, "model");
        need(shape, "shape");
        const auto& ck = model->ck;
        svfd::Settings base;
        base.train = ck.config;
        const svfd::Settings s = settings_from(settings_json, base);
        svfd::check_architecture(ck.net.arch(), s.train.arch);
        const WeightedPointCloud u = ck.normalization.apply(shape->c);
        const std::uint64_t before = ck.net.checksum();
        const svfd::InferResult r = svfd::infer_code(u, ck.templ, ck.net, s.train, s.infer, stop_requested);
        if (ck.net.checksum() != before) svfd::throw_numeric("network parameters changed during inference");
        const DirectionMaps maps = both_maps(ck, u, r.code);
        if (code_out) Eigen::Map<Eigen::VectorXd>(code_out, r.code.size()) = r.code;
        if (report_json) {
            json j = direction_report(ck, u, maps);
            j["initial"] = diag_json(r.initial);
            j["final"] = diag_json(r.final);
            j["loss_history"] = r.loss_history;
            j["checksum"] = before;
            j["interrupted"] = stop_requested();
            *report_json = dup(j.dump(2));
        }
        if (direct) *direct = wrap(ck.normalization.invert(maps.direct));
        if (inverse) *inverse = wrap(ck.normalization.invert(maps.inverse));
    });
}

svfd_status svfd_geodesic(const svfd_model* model, const double* code, const svfd_cloud* cloud, int direction,
                          int steps, svfd_cloud*** snapshots, size_t* count) {
    return guard([&] {
        need(model, "model");
        need(code, "code");
        need(cloud, "cloud");
        need(snapshots, "snapshots");
        need(count, "count");
        if (direction != 0 && direction != 1) svfd::throw_validation("direction must be 0 or 1");
        const auto& ck = model->ck;
        const int K = steps > 0 ? steps : ck.config.steps;
        const WeightedPointCloud u = ck.normalization.apply(cloud->c);
        const auto grid = svfd::reshape_code(code_from(model, code), ck.net.arch().g_z);
        svfd::FlowResult f = direction == 0 ? svfd::integrate_forward(u.points, grid, ck.net, K)
                                            : svfd::integrate_backward_modified(u.points, grid, ck.net, K);
        // Backward results are stored in time order; report them from the input on.
        if (direction == 1) std::reverse(f.states.begin(), f.states.end());
        auto** arr = static_cast<svfd_cloud**>(std::calloc(f.states.size(), sizeof(svfd_cloud*)));
        if (!arr) throw std::bad_alloc();
        try {
            for (std::size_t i = 0; i < f.states.size(); ++i) {
                arr[i] = wrap(ck.normalization.invert(u.with_points(f.states[i])));
            }
        } catch (...) {
            svfd_cloud_array_free(arr, f.states.size());
            throw;
        }
        *snapshots = arr;
        *count = f.states.size();
    });
}

svfd_status svfd_generate(const svfd_model* model, const double* code, svfd_cloud** out) {
    return guard([&] {
        need(model, "model");
        need(code, "code");
        need(out, "out");
        const auto& ck = model->ck;
        const WeightedPointCloud g = svfd::generate_shape(code_from(model, code), ck.templ, ck.net, ck.config.steps);
        *out = wrap(ck.normalization.invert(g));
    });
}

svfd_status svfd_sample_codes(const svfd_model* model, size_t n, uint64_t seed, double* out) {
    return guard([&] {
        need(model, "model");
        if (n == 0) return;
        need(out, "out");
        const Eigen::MatrixXd cov = svfd::empirical_covariance(model->ck.codes);
        const Eigen::MatrixXd z = svfd::sample_codes(cov, static_cast<int>(n), seed);
        // Column-major N_z x n is row-major n x N_z.
        std::memcpy(out, z.data(), static_cast<std::size_t>(z.size()) * sizeof(double));
    });
}

svfd_status svfd_pca(const svfd_model* model, const double* extra, size_t n_extra, const char* const* extra_ids,
                     char** csv_out, char** svg_out) {
    return guard([&] {
        need(model, "model");
        if (n_extra > 0) need(extra, "extra");
        const auto& codes = model->ck.codes;
        const int dims = std::min<int>(2, static_cast<int>(codes.codes.rows()));
        svfd::PcaResult pca = svfd::pca_project(codes, dims);
        std::vector<std::string> ids = codes.ids;
        const std::size_t train_count = ids.size();
        if (n_extra > 0) {
            const Eigen::Map<const Eigen::MatrixXd> z(extra, codes.codes.rows(), static_cast<Eigen::Index>(n_extra));
            const Eigen::MatrixXd proj = svfd::pca_transform(pca, z);
            Eigen::MatrixXd all(pca.projections.rows() + proj.rows(), pca.projections.cols());
            all << pca.projections, proj;
            pca.projections = all;
            for (size_t i = 0; i < n_extra; ++i) {
                ids.push_back(extra_ids && extra_ids[i] ? extra_ids[i] : "sample_" + std::to_string(i));
            }
        }
        if (csv_out) *csv_out = dup(svfd::pca_csv(pca, ids, train_count));
        if (svg_out) *svg_out = dup(svfd::pca_svg(pca, ids, train_count));
    });
}

/* ---- vessel models and augmentation ---- */

svfd_status svfd_vessel_load(const char* path, svfd_vessel** out) {
    return guard([&] {
        need(path, "path");
        need(out, "out");
        *out = new svfd_vessel{svfd::load_vessel_document(path)};
    });
}

svfd_status svfd_vessel_mesh(const svfd_vessel* vessel, int ring_vertices, svfd_mesh** out) {
    return guard([&] {
        need(vessel, "vessel");
        need(out, "out");
        *out = new svfd_mesh{svfd::sweep_vessel_mesh(vessel->doc.model, ring_vertices)};
    });
}

void svfd_vessel_free(svfd_vessel* vessel) { delete vessel; }

svfd_status svfd_augment(const svfd_vessel* const* vessels, const svfd_mesh* const* meshes, size_t count,
                         const char* settings_json, svfd_mesh*** out, size_t* out_count, size_t* accepted,
                         char** report_csv) {
    return guard([&] {
        need(vessels, "vessels");
        need(out, "out");
        need(out_count, "out_count");
        const svfd::Settings s = settings_from(settings_json);
        std::vector<svfd::AugmentInput> inputs;
        for (size_t i = 0; i < count; ++i) {
            need(vessels[i], "vessels[i]");
            svfd::AugmentInput in;
            in.model = vessels[i]->doc.model;
            in.mesh = meshes && meshes[i] ? meshes[i]->m : svfd::sweep_vessel_mesh(in.model);
            in.anchors = vessels[i]->doc.anchors ? *vessels[i]->doc.anchors : svfd::default_anchors(in.model);
            inputs.push_back(std::move(in));
        }
        svfd::AugmentResult r = svfd::augment_dataset(inputs, s.augment, stop_requested);
        auto** arr = static_cast<svfd_mesh**>(std::calloc(std::max<std::size_t>(1, r.dataset.size()), sizeof(svfd_mesh*)));
        if (!arr) throw std::bad_alloc();
        for (std::size_t i = 0; i < r.dataset.size(); ++i) arr[i] = new svfd_mesh{std::move(r.dataset[i])};
        *out = arr;
        *out_count = r.dataset.size();
        if (accepted) *accepted = static_cast<size_t>(r.accepted);
        if (report_csv) *report_csv = dup(svfd::attempts_csv(r));
    });
}

}  // extern "C"
