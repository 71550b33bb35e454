#include <doctest.h>

#include <algorithm>

#include "helpers.hpp"
#include "vfl/errors.hpp"
#include "vfl/orchestrator.hpp"

using namespace vfl;
using test::FixtureOptions;
using test::TempDir;

namespace {

std::multiset<std::string> digest_multiset(const std::vector<EndorsedEdr>& records) {
    std::multiset<std::string> out;
    for (const auto& r : records) out.insert(edr_digest(r.edr).hex());
    return out;
}

// (kind, participant, round) -> edr digest, for locality diffs
std::map<std::string, std::string> digest_by_step(const std::vector<EndorsedEdr>& records) {
    std::map<std::string, std::string> out;
    for (const auto& r : records) {
        std::string key = std::string(to_string(r.edr.task_kind)) + "/" +
                          r.edr.participant_id + "/r" + std::to_string(r.edr.round);
        out[key] = edr_digest(r.edr).hex();
    }
    return out;
}

const EndorsedEdr& find_record(const std::vector<EndorsedEdr>& records, TaskKind kind,
                               const std::string& participant, int round) {
    for (const auto& r : records)
        if (r.edr.task_kind == kind && r.edr.participant_id == participant &&
            r.edr.round == round)
            return r;
    throw std::runtime_error("record not found");
}

}  // namespace

TEST_CASE("faithful run: expected record counts and store layout") {
    TempDir dir;
    FixtureOptions opts;
    opts.providers = 4;
    opts.rounds = 3;
    opts.records_per_provider = 64;
    JobDescription job = test::make_fixture_job(dir, opts);

    EdrStore store;
    run_job(job, store);
    // per round: P train + P dp + aggregate + model_update
    CHECK(store.size() == 3 * (2 * 4 + 2));

    auto snapshot = store.snapshot();
    auto registry = job.issuer_registry();
    for (const auto& r : snapshot)
        CHECK(edr_verify(r, job.platform_root().verify_key(), registry));
}

TEST_CASE("sanitize stage adds one record per provider") {
    TempDir dir;
    FixtureOptions opts;
    opts.providers = 2;
    opts.rounds = 2;
    opts.records_per_provider = 64;
    opts.sanitize = true;
    JobDescription job = test::make_fixture_job(dir, opts);

    EdrStore store;
    run_job(job, store);
    CHECK(store.size() == 2 + 2 * (2 * 2 + 2));

    auto snap = store.snapshot();
    const EndorsedEdr& san = find_record(snap, TaskKind::sanitize, "provider1", -1);
    const EndorsedEdr& train0 = find_record(snap, TaskKind::train, "provider1", 0);
    // training consumed the sanitized image
    CHECK(train0.edr.inputs.at("dataset:commitment") ==
          san.edr.outputs.at("dataset:commitment"));
    CHECK(san.edr.inputs.at("dataset:commitment") ==
          job.providers[0].registered_commitment);
}

TEST_CASE("identical seeds give identical models and record multisets") {
    TempDir dir;
    FixtureOptions opts;
    opts.providers = 3;
    opts.rounds = 2;
    opts.records_per_provider = 48;
    JobDescription job = test::make_fixture_job(dir, opts);

    EdrStore s1, s2;
    ModelVector m1 = run_job(job, s1);
    ModelVector m2 = run_job(job, s2);
    CHECK(serialize_model(m1) == serialize_model(m2));
    CHECK(digest_multiset(s1.snapshot()) == digest_multiset(s2.snapshot()));
}

TEST_CASE("concurrent and sequential branches agree") {
    TempDir dir;
    FixtureOptions opts;
    opts.providers = 4;
    opts.rounds = 2;
    opts.records_per_provider = 48;
    JobDescription job = test::make_fixture_job(dir, opts);

    EdrStore par_store, seq_store;
    RunOptions par{.parallel_providers = true};
    RunOptions seq{.parallel_providers = false};
    ModelVector mp = run_job(job, par_store, nullptr, par);
    ModelVector ms = run_job(job, seq_store, nullptr, seq);
    CHECK(serialize_model(mp) == serialize_model(ms));
    CHECK(digest_multiset(par_store.snapshot()) == digest_multiset(seq_store.snapshot()));
}

TEST_CASE("connector is a transparent pass-through") {
    TempDir dir;
    JobDescription job = test::make_fixture_job(dir, {.providers = 1, .rounds = 1,
                                                      .records_per_provider = 16});
    KeyPair root = job.platform_root();

    auto make_exclave = [&] {
        ExclaveConfig cfg;
        cfg.exclave_id = "provider1/model_update";
        cfg.participant_id = "provider1";
        cfg.task_kind = TaskKind::model_update;
        cfg.code_image = code_image_for(TaskKind::model_update);
        cfg.issuer = job.issuer_for("provider1");
        cfg.sp_seed = test::make_seed("fixed sp seed");
        return Exclave(std::move(cfg), root);
    };
    Exclave direct = make_exclave();
    Exclave connected = make_exclave();

    TaskRequest req;
    req.kind = TaskKind::model_update;
    req.payloads["model:global"] = serialize_model(ModelVector::Zero(3));
    req.payloads["model:agg_diff"] = serialize_model(ModelVector::Zero(3));

    TaskResponse a = direct.handle_task(req);
    TaskResponse b = ExclaveConnector(connected).invoke(req);
    CHECK(a.payloads == b.payloads);
    CHECK(a.endorsed_edr == b.endorsed_edr);
}

TEST_CASE("skip_dp feeds the raw diff to aggregation and drops the dp record") {
    TempDir dir;
    FixtureOptions opts;
    opts.providers = 3;
    opts.rounds = 2;
    opts.records_per_provider = 48;
    JobDescription job = test::make_fixture_job(dir, opts);

    DeviationScript script;
    script.injections = {{DeviationKind::skip_dp, "provider2", 1}};
    EdrStore store;
    run_job(job, store, &script);
    CHECK(store.size() == 2 * (2 * 3 + 2) - 1);

    auto snap = store.snapshot();
    CHECK_THROWS(find_record(snap, TaskKind::dp, "provider2", 1));
    const EndorsedEdr& agg = find_record(snap, TaskKind::aggregate, "modelowner", 1);
    const EndorsedEdr& train = find_record(snap, TaskKind::train, "provider2", 1);
    CHECK(agg.edr.inputs.at("model:diff:provider2") ==
          train.edr.outputs.at("model:diff:provider2"));
}

TEST_CASE("transit_tamper breaks the hash chain on exactly that leg") {
    TempDir dir;
    FixtureOptions opts;
    opts.providers = 3;
    opts.rounds = 2;
    opts.records_per_provider = 48;
    JobDescription job = test::make_fixture_job(dir, opts);

    DeviationScript script;
    script.injections = {{DeviationKind::transit_tamper, "provider3", 1, "dp"}};
    EdrStore faithful, deviated;
    run_job(job, faithful);
    run_job(job, deviated, &script);

    auto snap = deviated.snapshot();
    const EndorsedEdr& dp = find_record(snap, TaskKind::dp, "provider3", 1);
    const EndorsedEdr& agg = find_record(snap, TaskKind::aggregate, "modelowner", 1);
    CHECK(agg.edr.inputs.at("model:dp:provider3") !=
          dp.edr.outputs.at("model:dp:provider3"));

    // injection locality: everything before the target round is untouched
    auto before = digest_by_step(faithful.snapshot());
    auto after = digest_by_step(snap);
    for (const auto& [key, digest] : before)
        if (key.ends_with("/r0")) CHECK(after.at(key) == digest);
    CHECK(before != after);
}

TEST_CASE("drop_update removes one contribution from the aggregation request") {
    TempDir dir;
    FixtureOptions opts;
    opts.providers = 4;
    opts.rounds = 3;
    opts.records_per_provider = 48;
    JobDescription job = test::make_fixture_job(dir, opts);

    DeviationScript script;
    script.injections = {{DeviationKind::drop_update, "provider4", 2}};
    EdrStore store;
    run_job(job, store, &script);

    auto snap = store.snapshot();
    const EndorsedEdr& agg = find_record(snap, TaskKind::aggregate, "modelowner", 2);
    std::size_t model_inputs = 0;
    for (const auto& [label, _] : agg.edr.inputs)
        if (label.starts_with("model:")) ++model_inputs;
    CHECK(model_inputs == 3);
    CHECK(agg.edr.inputs.count("model:dp:provider4") == 0);
    // the dropped provider's dp record still exists
    CHECK_NOTHROW(find_record(snap, TaskKind::dp, "provider4", 2));
}

TEST_CASE("dataset_swap changes the recorded commitment from the named round on") {
    TempDir dir;
    FixtureOptions opts;
    opts.providers = 2;
    opts.rounds = 3;
    opts.records_per_provider = 48;
    JobDescription job = test::make_fixture_job(dir, opts);

    DeviationScript script;
    script.injections = {{DeviationKind::dataset_swap, "provider1", 2}};
    EdrStore store;
    run_job(job, store, &script);
    auto snap = store.snapshot();

    Digest c0 = find_record(snap, TaskKind::train, "provider1", 0)
                    .edr.inputs.at("dataset:commitment");
    Digest c1 = find_record(snap, TaskKind::train, "provider1", 1)
                    .edr.inputs.at("dataset:commitment");
    Digest c2 = find_record(snap, TaskKind::train, "provider1", 2)
                    .edr.inputs.at("dataset:commitment");
    CHECK(c0 == job.providers[0].registered_commitment);
    CHECK(c0 == c1);
    CHECK(c2 != c0);
}

TEST_CASE("forge_edr stores a record that fails verification") {
    TempDir dir;
    FixtureOptions opts;
    opts.providers = 2;
    opts.rounds = 2;
    opts.records_per_provider = 48;
    JobDescription job = test::make_fixture_job(dir, opts);

    DeviationScript script;
    Deviation d;
    d.kind = DeviationKind::forge_edr;
    d.participant = "provider1";
    d.round = 1;
    d.task = TaskKind::train;
    script.injections = {d};

    EdrStore store;
    run_job(job, store, &script);
    auto registry = job.issuer_registry();
    std::size_t failures = 0;
    for (const auto& r : store.snapshot())
        if (!edr_verify(r, job.platform_root().verify_key(), registry)) ++failures;
    CHECK(failures == 1);
}

TEST_CASE("deviation scripts are validated against the job") {
    TempDir dir;
    JobDescription job = test::make_fixture_job(dir, {.providers = 2, .rounds = 2,
                                                      .records_per_provider = 16});
    EdrStore store;

    DeviationScript unknown;
    unknown.injections = {{DeviationKind::skip_dp, "nobody", 0}};
    CHECK_THROWS_AS(run_job(job, store, &unknown), Error);

    DeviationScript bad_round;
    bad_round.injections = {{DeviationKind::skip_dp, "provider1", 7}};
    CHECK_THROWS_AS(run_job(job, store, &bad_round), Error);

    DeviationScript no_sanitize;
    no_sanitize.injections = {{DeviationKind::skip_sanitization, "provider1", 0}};
    CHECK_THROWS_AS(run_job(job, store, &no_sanitize), Error);
}
