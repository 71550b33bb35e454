#include "vfl/tasks.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

#include "vfl/errors.hpp"

namespace vfl {

Bytes serialize_model(const ModelVector& m) {
    Bytes out;
    out.reserve(4 + 8 * static_cast<std::size_t>(m.size()));
    put_u32_le(out, static_cast<std::uint32_t>(m.size()));
    for (Eigen::Index i = 0; i < m.size(); ++i)
        put_u64_le(out, std::bit_cast<std::uint64_t>(m[i]));
    return out;
}

ModelVector deserialize_model(std::span<const std::uint8_t> raw) {
    if (raw.size() < 4) throw Error("model payload truncated");
    std::uint32_t dim = get_u32_le(raw);
    if (raw.size() != 4 + 8ull * dim) throw Error("model payload has wrong length");
    ModelVector m(dim);
    for (std::uint32_t i = 0; i < dim; ++i)
        m[i] = std::bit_cast<double>(get_u64_le(raw.subspan(4 + 8ull * i)));
    return m;
}

std::uint64_t Prng::next_below(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("next_below: zero bound");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t r;
    do {
        r = next_u64();
    } while (r >= limit);
    return r % bound;
}

double laplace_draw(Prng& rng, double scale) {
    double u = rng.next_unit_open() - 0.5;  // (-0.5, 0.5)
    double mag = -scale * std::log(1.0 - 2.0 * std::abs(u));
    return u < 0 ? -mag : mag;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Prng& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = rng.next_below(i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

nlohmann::json Hyperparams::to_json() const {
    nlohmann::json j;
    j["learning_rate"] = learning_rate;
    j["steps"] = steps;
    j["batch_size"] = batch_size;
    j["l2"] = l2;
    j["seed"] = seed;
    return j;
}

Hyperparams Hyperparams::from_json(const nlohmann::json& j) {
    Hyperparams hp;
    hp.learning_rate = j.at("learning_rate").get<double>();
    hp.steps = j.at("steps").get<int>();
    hp.batch_size = j.at("batch_size").get<int>();
    hp.l2 = j.at("l2").get<double>();
    hp.seed = j.at("seed").get<std::uint64_t>();
    hp.validate();
    return hp;
}

void Hyperparams::validate() const {
    if (learning_rate < 0 || steps < 0 || batch_size < 1 || l2 < 0)
        throw Error("invalid hyperparameters");
}

nlohmann::json DpParams::to_json() const {
    nlohmann::json j;
    j["threshold"] = threshold;
    j["scale"] = scale;
    j["max_releases"] = max_releases;
    j["release_scale"] = release_scale;
    j["seed"] = seed;
    return j;
}

DpParams DpParams::from_json(const nlohmann::json& j) {
    DpParams dp;
    dp.threshold = j.at("threshold").get<double>();
    dp.scale = j.at("scale").get<double>();
    dp.max_releases = j.at("max_releases").get<int>();
    dp.release_scale = j.at("release_scale").get<double>();
    dp.seed = j.at("seed").get<std::uint64_t>();
    dp.validate();
    return dp;
}

void DpParams::validate() const {
    if (scale < 0 || max_releases < 0 || release_scale < 0)
        throw Error("invalid DP parameters");
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Gradient of the per-sample logistic loss at w, accumulated into grad.
// x_tilde is the record's features with an implicit trailing 1 for the bias.
void add_sample_gradient(const ModelVector& w, const Record& rec, ModelVector& grad) {
    const Eigen::Index d = w.size();
    double y = rec.values.back() > 0 ? 1.0 : -1.0;
    double score = w[d - 1];  // bias
    for (Eigen::Index i = 0; i + 1 < d; ++i) score += w[i] * rec.values[i];
    double factor = -y * sigmoid(-y * score);
    for (Eigen::Index i = 0; i + 1 < d; ++i) grad[i] += factor * rec.values[i];
    grad[d - 1] += factor;
}

}  // namespace

ModelVector local_train(const ModelVector& global, DatasetHandle& data,
                        const Hyperparams& hp) {
    hp.validate();
    const Eigen::Index d = global.size();
    if (d < 1) throw DimensionMismatch("model dimension must be >= 1");
    if (data.values_per_record() != static_cast<std::size_t>(d))
        throw DimensionMismatch("dataset rows must hold d-1 features plus a label");

    ModelVector w = global;
    const std::size_t n = data.record_count();
    Prng rng(hp.seed);
    std::vector<std::size_t> order = shuffled_indices(n, rng);
    std::size_t cursor = 0;

    for (int step = 0; step < hp.steps; ++step) {
        if (cursor >= order.size()) {
            order = shuffled_indices(n, rng);
            cursor = 0;
        }
        std::size_t take = std::min<std::size_t>(hp.batch_size, order.size() - cursor);
        ModelVector grad = ModelVector::Zero(d);
        for (std::size_t b = 0; b < take; ++b)
            add_sample_gradient(w, data.read_record(order[cursor + b]), grad);
        grad /= static_cast<double>(take);
        w -= hp.learning_rate * (grad + hp.l2 * w);
        cursor += take;
    }

    ModelVector diff = w - global;
    if (!diff.allFinite()) throw Error("local_train produced a non-finite update");
    return diff;
}

ModelVector svt_dp(const ModelVector& diff, const DpParams& dp) {
    dp.validate();
    if (dp.scale == 0.0) return diff;

    Prng rng(dp.seed);
    double rho = laplace_draw(rng, dp.scale);
    ModelVector out = ModelVector::Zero(diff.size());
    int releases = 0;
    for (Eigen::Index i = 0; i < diff.size(); ++i) {
        double nu = laplace_draw(rng, 2.0 * dp.scale);
        if (std::abs(diff[i]) + nu >= dp.threshold + rho && releases < dp.max_releases) {
            out[i] = diff[i] + laplace_draw(rng, dp.release_scale);
            ++releases;
        }
    }
    return out;
}

ModelVector aggregate_fedavg(const std::vector<std::pair<ModelVector, double>>& updates) {
    if (updates.empty()) throw Error("aggregate_fedavg: no updates");
    const Eigen::Index d = updates.front().first.size();

    // Fixed pairwise reduction tree: deterministic regardless of platform,
    // and exact when a power-of-two count of equal power-of-two weights
    // averages copies of one vector.
    std::vector<ModelVector> terms;
    std::vector<double> weights;
    terms.reserve(updates.size());
    for (const auto& [v, w] : updates) {
        if (v.size() != d) throw DimensionMismatch("aggregate_fedavg: mixed dimensions");
        if (!(w > 0)) throw Error("aggregate_fedavg: weights must be > 0");
        terms.push_back(w * v);
        weights.push_back(w);
    }
    while (terms.size() > 1) {
        std::size_t half = (terms.size() + 1) / 2;
        for (std::size_t i = 0; i + 1 < terms.size(); i += 2) {
            terms[i / 2] = terms[i] + terms[i + 1];
            weights[i / 2] = weights[i] + weights[i + 1];
        }
        if (terms.size() % 2 == 1) {
            terms[half - 1] = terms.back();
            weights[half - 1] = weights.back();
        }
        terms.resize(half);
        weights.resize(half);
    }
    return terms.front() / weights.front();
}

ModelVector model_update(const ModelVector& prev_global, const ModelVector& agg_diff) {
    if (prev_global.size() != agg_diff.size())
        throw DimensionMismatch("model_update: mixed dimensions");
    return prev_global + agg_diff;
}

std::vector<Record> sanitize(std::span<const Record> records,
                             const std::vector<std::string>& denylist) {
    std::vector<Record> kept;
    kept.reserve(records.size());
    for (const auto& r : records) {
        bool flagged = false;
        for (const auto& pattern : denylist) {
            if (!pattern.empty() && r.text.find(pattern) != std::string::npos) {
                flagged = true;
                break;
            }
        }
        if (!flagged) kept.push_back(r);
    }
    return kept;
}

}  // namespace vfl
