#include <doctest.h>

#include "helpers.hpp"
#include "vfl/errors.hpp"
#include "vfl/exclave.hpp"

using namespace vfl;
using test::make_seed;
using test::TempDir;

namespace {

struct Rig {
    KeyPair platform_root = keygen(make_seed("platform"));
    KeyPair issuer = keygen(make_seed("issuer:providerX"));
    std::map<std::string, VerifyKey> registry{{"providerX", issuer.verify_key()}};

    Exclave make(TaskKind kind, Bytes code = {}) {
        ExclaveConfig cfg;
        cfg.exclave_id = "providerX/" + std::string(to_string(kind));
        cfg.participant_id = "providerX";
        cfg.task_kind = kind;
        cfg.code_image = code.empty() ? code_image_for(kind) : std::move(code);
        cfg.issuer = issuer;
        cfg.sp_seed = make_seed("sp:" + cfg.exclave_id);
        return Exclave(std::move(cfg), platform_root);
    }
};

}  // namespace

TEST_CASE("launch measures the code image deterministically") {
    Rig rig;
    Exclave a = rig.make(TaskKind::model_update);
    Exclave b = rig.make(TaskKind::model_update);
    CHECK(a.pcr11() == b.pcr11());
    CHECK(a.code_measurement() == code_measurement(code_image_for(TaskKind::model_update)));

    Bytes tampered = code_image_for(TaskKind::model_update);
    tampered[0] ^= 1;
    Exclave c = rig.make(TaskKind::model_update, tampered);
    CHECK(c.pcr11() != a.pcr11());
}

TEST_CASE("responses carry an EDR that re-hashes exactly") {
    Rig rig;
    Exclave ex = rig.make(TaskKind::model_update);

    ModelVector prev(3), diff(3);
    prev << 1, 2, 3;
    diff << 0.5, -0.5, 0;

    TaskRequest req;
    req.kind = TaskKind::model_update;
    req.round = 1;
    req.payloads["model:global"] = serialize_model(prev);
    req.payloads["model:agg_diff"] = serialize_model(diff);

    TaskResponse resp = ex.handle_task(req);
    const Edr& edr = resp.endorsed_edr.edr;

    for (const auto& [label, bytes] : req.payloads)
        CHECK(edr.inputs.at(label) == hash_bytes(bytes));
    for (const auto& [label, bytes] : resp.payloads)
        CHECK(edr.outputs.at(label) == hash_bytes(bytes));
    CHECK(edr.outputs.count("model:global") == 1);
    CHECK(deserialize_model(resp.payloads.at("model:global")) == prev + diff);
    CHECK(edr.round == 1);
    CHECK(edr.code == ex.code_measurement());

    CHECK(edr_verify(resp.endorsed_edr, rig.platform_root.verify_key(), rig.registry));
}

TEST_CASE("task kind mismatch is rejected") {
    Rig rig;
    Exclave ex = rig.make(TaskKind::dp);
    TaskRequest req;
    req.kind = TaskKind::aggregate;
    CHECK_THROWS_AS(ex.handle_task(req), TaskKindMismatch);
}

TEST_CASE("train: dataset commitment is recorded, diff hash matches the EDR") {
    Rig rig;
    TempDir dir;
    std::vector<Record> recs = test::synth_records(64, 3, 6);
    Salt salt{};
    salt.fill(0x11);
    DatasetImage img = pack_dataset(recs, salt);
    save_image(img, dir.file("train.vfld"));

    Exclave ex = rig.make(TaskKind::train);
    TaskRequest req;
    req.kind = TaskKind::train;
    req.round = 0;
    req.payloads["model:global"] = serialize_model(ModelVector::Zero(4));
    req.payloads["params:train"] = to_bytes(Hyperparams{0.1, 4, 16, 0.0, 5}.to_json().dump());
    req.dataset = DatasetRef{dir.file("train.vfld"), img.commitment};

    TaskResponse resp = ex.handle_task(req);
    const Edr& edr = resp.endorsed_edr.edr;
    CHECK(edr.inputs.at("dataset:commitment") == img.commitment.commitment);
    CHECK(edr.outputs.at("model:diff:providerX") ==
          hash_bytes(resp.payloads.at("model:diff:providerX")));
}

TEST_CASE("wrong dataset commitment: no EDR, CommitmentMismatch propagates") {
    Rig rig;
    TempDir dir;
    DatasetImage img = pack_dataset(test::synth_records(32, 3, 6), Salt{});
    save_image(img, dir.file("x.vfld"));

    DataCommitment wrong = img.commitment;
    wrong.commitment.bytes[0] ^= 1;

    Exclave ex = rig.make(TaskKind::train);
    TaskRequest req;
    req.kind = TaskKind::train;
    req.payloads["model:global"] = serialize_model(ModelVector::Zero(4));
    req.payloads["params:train"] = to_bytes(Hyperparams{0.1, 1, 8, 0.0, 5}.to_json().dump());
    req.dataset = DatasetRef{dir.file("x.vfld"), wrong};
    CHECK_THROWS_AS(ex.handle_task(req), CommitmentMismatch);
}

TEST_CASE("sanitize: filters records, emits the new commitment") {
    Rig rig;
    TempDir dir;
    std::vector<Record> recs = test::synth_text_records(64, 3, 6, "FORBIDDEN");
    Salt salt{};
    salt.fill(0x22);
    DatasetImage img = pack_dataset(recs, salt);
    save_image(img, dir.file("raw.vfld"));

    Exclave ex = rig.make(TaskKind::sanitize);
    TaskRequest req;
    req.kind = TaskKind::sanitize;
    req.round = -1;
    req.payloads["params:sanitize"] =
        to_bytes(nlohmann::json{{"denylist", {"FORBIDDEN"}}}.dump());
    req.dataset = DatasetRef{dir.file("raw.vfld"), img.commitment};
    req.sanitized_image_path = dir.file("clean.vfld");

    TaskResponse resp = ex.handle_task(req);
    REQUIRE(resp.dataset_out.has_value());
    const Edr& edr = resp.endorsed_edr.edr;
    CHECK(edr.round == -1);
    CHECK(edr.inputs.at("dataset:commitment") == img.commitment.commitment);
    CHECK(edr.outputs.at("dataset:commitment") == resp.dataset_out->expected.commitment);
    CHECK(resp.dataset_out->expected.commitment != img.commitment.commitment);

    DatasetHandle clean =
        DatasetHandle::mount(resp.dataset_out->image_path, resp.dataset_out->expected);
    CHECK(clean.record_count() < recs.size());
    for (const auto& r : clean.read_all())
        CHECK(r.text.find("FORBIDDEN") == std::string::npos);
}

TEST_CASE("request envelopes round trip through their canonical JSON form") {
    TaskRequest req;
    req.kind = TaskKind::train;
    req.round = 3;
    req.payloads["model:global"] = serialize_model(ModelVector::Constant(2, 0.5));
    req.payloads["params:train"] = to_bytes("{\"x\":1}");
    Salt salt{};
    salt.fill(9);
    req.dataset = DatasetRef{"/data/img.vfld", make_commitment(hash_bytes("root"), salt)};

    TaskRequest parsed = TaskRequest::from_json(req.to_json());
    CHECK(parsed.kind == req.kind);
    CHECK(parsed.round == req.round);
    CHECK(parsed.payloads == req.payloads);
    REQUIRE(parsed.dataset.has_value());
    CHECK(parsed.dataset->image_path == req.dataset->image_path);
    CHECK(parsed.dataset->expected == req.dataset->expected);
    CHECK_FALSE(parsed.sanitized_image_path.has_value());
    CHECK(req.to_json().dump() == parsed.to_json().dump());
}

TEST_CASE("all EDRs from one exclave share the launch code measurement") {
    Rig rig;
    Exclave ex = rig.make(TaskKind::model_update);
    TaskRequest req;
    req.kind = TaskKind::model_update;
    req.payloads["model:global"] = serialize_model(ModelVector::Zero(2));
    req.payloads["model:agg_diff"] = serialize_model(ModelVector::Zero(2));

    Digest first;
    for (int round = 0; round < 3; ++round) {
        req.round = round;
        TaskResponse resp = ex.handle_task(req);
        if (round == 0)
            first = resp.endorsed_edr.edr.code;
        else
            CHECK(resp.endorsed_edr.edr.code == first);
        CHECK(resp.endorsed_edr.report.counter == static_cast<std::uint64_t>(round + 1));
    }
    CHECK(first == ex.code_measurement());
}
