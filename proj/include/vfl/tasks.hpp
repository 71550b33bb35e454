#pragma once

// The deterministic FL task set: local logistic-regression training,
// sparse-vector DP noise on the weight diff, FedAvg aggregation, model
// update, and the denylist sanitization filter.
//
// Every task is a pure function of its inputs and seeds: summations run
// in fixed left-to-right order, batches come from a seeded shuffle, and
// all noise flows through the fixed PRNG below. Identical inputs yield
// byte-identical serialized outputs, which is what makes EDG edges match.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include <nlohmann/json.hpp>

#include "vfl/bytes.hpp"
#include "vfl/dataset.hpp"

namespace vfl {

using ModelVector = Eigen::VectorXd;

// Wire form hashed into EDRs: u32 dimension, then float64 values, all
// little-endian.
Bytes serialize_model(const ModelVector& m);
ModelVector deserialize_model(std::span<const std::uint8_t> raw);  // throws Error

// The PRNG named in job descriptions. Draws are mt19937_64 words; unit
// doubles take the top 53 bits plus a half-step so the result lies in the
// open interval (0,1); Laplace uses the inverse CDF.
inline constexpr std::string_view kPrngId = "mt19937_64-u53-invcdf-1";

class Prng {
public:
    explicit Prng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    double next_unit_open() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Unbiased draw from [0, bound) by rejection.
    std::uint64_t next_below(std::uint64_t bound);

private:
    std::mt19937_64 gen_;
};

// Lap(scale): zero-mean, variance 2*scale^2. scale = 0 returns 0.
double laplace_draw(Prng& rng, double scale);

// Deterministic Fisher-Yates over [0, n).
std::vector<std::size_t> shuffled_indices(std::size_t n, Prng& rng);

struct Hyperparams {
    double learning_rate = 0.0;  // >= 0
    int steps = 0;               // >= 0
    int batch_size = 1;          // >= 1
    double l2 = 0.0;             // >= 0
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    static Hyperparams from_json(const nlohmann::json& j);
    void validate() const;
};

struct DpParams {
    double threshold = 0.0;
    double scale = 0.0;          // b; 0 disables the mechanism
    int max_releases = 0;        // c
    double release_scale = 0.0;  // b_r
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    static DpParams from_json(const nlohmann::json& j);
    void validate() const;
};

// Mini-batch gradient descent on l2-regularized logistic loss
//   L(w) = (1/n) sum log(1 + exp(-y_i * x_i . w)) + (l2/2) ||w||^2
// where each record is d-1 features plus a +/-1 label and the last weight
// is the bias (an implicit all-ones feature). Returns the weight diff
// w_final - w_global. Throws DimensionMismatch / Error on bad shapes or a
// non-finite result.
ModelVector local_train(const ModelVector& global, DatasetHandle& data,
                        const Hyperparams& hp);

// Sparse-vector release: one threshold perturbation rho ~ Lap(b), per-index
// nu_i ~ Lap(2b); indices passing |diff_i| + nu_i >= T + rho are released
// with Lap(b_r) noise, at most c of them; everything else is zeroed.
// scale = 0 is the identity.
ModelVector svt_dp(const ModelVector& diff, const DpParams& dp);

// Weighted average, left-to-right. Throws on an empty list, mismatched
// dimensions, or non-positive weights.
ModelVector aggregate_fedavg(const std::vector<std::pair<ModelVector, double>>& updates);

ModelVector model_update(const ModelVector& prev_global, const ModelVector& agg_diff);

// Drops every record whose text column contains any denylist pattern
// (exact substring match). Order preserved.
std::vector<Record> sanitize(std::span<const Record> records,
                             const std::vector<std::string>& denylist);

}  // namespace vfl
