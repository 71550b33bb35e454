#pragma once

// Shared fixture builders for the unit and acceptance suites, plus the
// naive EDG edge oracle the indexed builder is checked against.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "vfl/auditor.hpp"
#include "vfl/job.hpp"
#include "vfl/orchestrator.hpp"

namespace vfl::test {

KeyPair::Seed make_seed(std::uint8_t fill);
KeyPair::Seed make_seed(std::string_view tag);

// Scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    std::string file(const std::string& name) const { return (path / name).string(); }
};

// Linearly separable +/-1 rows: `features` columns then the label.
std::vector<Record> synth_records(std::size_t n, std::size_t features, std::uint64_t seed);

// As above with a text column; roughly every eighth row contains `marker`.
std::vector<Record> synth_text_records(std::size_t n, std::size_t features,
                                       std::uint64_t seed, const std::string& marker);

struct FixtureOptions {
    int providers = 4;
    int rounds = 3;
    int model_dim = 17;
    std::size_t records_per_provider = 256;
    std::uint64_t seed = 1;
    bool sanitize = false;
    std::string denylist_marker = "FORBIDDEN";
};

// Packs one dataset per provider under dir and returns a ready job with
// absolute dataset paths.
JobDescription make_fixture_job(const TempDir& dir, const FixtureOptions& opts = {});

// Literal quadratic scan over all vertex pairs (the reference construction),
// using the same round-compatibility rule as the indexed builder.
std::vector<EdgEdge> naive_edges(const std::vector<EdgVertex>& vertices);

// Canonical comparable rendering of an edge set, independent of edge order.
std::vector<std::string> edge_set_keys(const std::vector<EdgEdge>& edges,
                                       const std::vector<EdgVertex>& vertices);

// Random verified-by-construction vertices (no signatures) for edge-logic
// oracle tests: digests drawn from a small pool so intersections are common.
std::vector<EdgVertex> random_vertices(std::mt19937_64& rng, std::size_t count);

}  // namespace vfl::test
