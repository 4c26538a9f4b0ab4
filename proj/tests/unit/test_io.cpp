#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "support.hpp"
#include "svfd/checkpoint.hpp"
#include "svfd/config.hpp"
#include "svfd/error.hpp"
#include "svfd/vessel_io.hpp"

using namespace svfd;

namespace {
Checkpoint sample_checkpoint() {
    Checkpoint c;
    c.config.arch.w_fa = 4;
    c.config.arch.l_fa = 1;
    c.config.arch.w_df = 5;
    c.config.arch.l_df = 2;
    c.config.arch.n_z = 8;
    c.config.epochs = 17;
    InitResult init = init_params(c.config.arch, 2, 11);
    c.net = init.net;
    c.codes = {init.codes, {"left", "right"}};
    Rng rng(71);
    c.templ = svfd::test::random_cloud(rng, 9, true);
    c.normalization.scale = Vec3(0.5, 0.25, 2.0);
    c.normalization.offset = Vec3(0.1, 0.2, 0.3);
    c.epoch = 17;
    return c;
}
}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
    const Checkpoint c = sample_checkpoint();
    const std::string bytes = encode_checkpoint(c);
    CHECK(bytes.rfind("SVFDCKPT", 0) == 0);
    const Checkpoint d = decode_checkpoint(bytes);
    CHECK(d.net.params() == c.net.params());
    CHECK(d.net.checksum() == c.net.checksum());
    CHECK(d.codes.codes == c.codes.codes);
    CHECK(d.codes.ids == c.codes.ids);
    CHECK(d.templ.points == c.templ.points);
    CHECK(d.templ.weights == c.templ.weights);
    CHECK(d.templ.normals.value() == c.templ.normals.value());
    CHECK(d.normalization.scale == c.normalization.scale);
    CHECK(d.config.epochs == 17);
    CHECK(d.epoch == 17);

    const std::string path = svfd::test::temp_path("model.svfd");
    save_checkpoint(c, path);
    CHECK(load_checkpoint(path).net.params() == c.net.params());
    std::filesystem::remove(path);
}

TEST_CASE("corrupted containers are rejected") {
    const std::string bytes = encode_checkpoint(sample_checkpoint());
    CHECK_THROWS_WITH_AS(decode_checkpoint("not a checkpoint"), doctest::Contains("invalid container"), Error);
    CHECK_THROWS_WITH_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 8)), doctest::Contains("invalid container"),
                         Error);
    std::string flipped = bytes;
    flipped[flipped.size() - 3] ^= 0x40;
    CHECK_THROWS_WITH_AS(decode_checkpoint(flipped), doctest::Contains("invalid container"), Error);
    std::string header = bytes;
    header[20] = '#';
    CHECK_THROWS_WITH_AS(decode_checkpoint(header), doctest::Contains("invalid container"), Error);
    try {
        decode_checkpoint("x");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Io);
    }
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/model.svfd"), Error);
}

TEST_CASE("architecture mismatch lists every field") {
    Architecture a, b;
    b.w_df = 128;
    b.n_z = 64;
    CHECK_NOTHROW(check_architecture(a, a));
    try {
        check_architecture(a, b);
        FAIL("expected a mismatch");
    } catch (const Error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("w_df") != std::string::npos);
        CHECK(msg.find("n_z") != std::string::npos);
        CHECK(msg.find("l_fa") == std::string::npos);
    }
}

TEST_CASE("settings keys round trip") {
    Settings s;
    const std::string json = settings_to_json(s);
    for (const auto& k : settings_keys()) CHECK(json.find("\"" + k + "\"") != std::string::npos);
    apply_settings_json(s, R"({"train.epochs": 12, "sinkhorn": {"epsilon": 0.002}, "network.n_z": 64,
                               "train.attachment": "pcdw", "augment.tps_affine": false})");
    CHECK(s.train.epochs == 12);
    CHECK(s.train.sinkhorn.epsilon == 0.002);
    CHECK(s.train.arch.n_z == 64);
    CHECK(s.train.attachment == Attachment::PCDW);
    CHECK_FALSE(s.augment.tps_affine);
    Settings t;
    apply_settings_json(t, settings_to_json(s));
    CHECK(settings_to_json(t) == settings_to_json(s));

    CHECK_THROWS_WITH_AS(apply_settings_json(s, R"({"train.epoch": 3})"), doctest::Contains("train.epoch"), Error);
    CHECK_THROWS_WITH_AS(apply_settings_json(s, R"({"train.epochs": "many"})"), doctest::Contains("train.epochs"),
                         Error);
    apply_settings_json(s, R"({"network.n_z": 10})");
    CHECK_THROWS_WITH_AS(s.train.validate(), doctest::Contains("n_z"), Error);
    CHECK_THROWS_AS(apply_settings_json(s, "[1,2"), Error);
}

TEST_CASE("vessel documents") {
    const std::string text = R"({"portions": [
        {"name": "trunk", "parent": "", "control_points": [[0,0,0],[0,0,0.7],[0,0,1.4],[0,0,2]], "radii": [0.2, 0.15]},
        {"name": "side", "parent": "trunk", "control_points": [[0,0,1.5],[0.3,0,1.8],[0.6,0,2.1],[1,0,2.5]], "radii": [0.1]}],
        "anchors": {"inlet_center": [0,0,0], "outlet_normal": [0,0,1]}})";
    const VesselDocument d = parse_vessel_document(text);
    CHECK(d.model.portions.size() == 2);
    CHECK(d.model.index_of("side") == 1);
    REQUIRE(d.anchors.has_value());
    const VesselDocument back = parse_vessel_document(vessel_document_to_json(d));
    CHECK(back.model.portions[1].control_points[2] == d.model.portions[1].control_points[2]);
    CHECK(back.model.portions[0].radii == d.model.portions[0].radii);

    CHECK_THROWS_AS(parse_vessel_document(R"({"portions": [{"name": "a", "parent": "ghost",
        "control_points": [[0,0,0],[0,0,1],[0,0,2],[0,0,3]], "radii": [0.1]}]})"), Error);
    CHECK_THROWS_AS(parse_vessel_document(R"({"portions": [{"name": "a", "parent": "",
        "control_points": [[0,0,0],[0,0,1],[0,0,2],[0,0,3]], "radii": [-0.1]}]})"), Error);
}
