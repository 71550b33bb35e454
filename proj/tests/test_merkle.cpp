#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "vfl/merkle.hpp"

using namespace vfl;

namespace {

Bytes block_of(std::uint8_t fill) { return Bytes(kBlockSize, fill); }

Digest leaf(const Bytes& b) {
    Sha256 h;
    h.update(std::uint8_t{0x00}).update(b);
    return h.finish();
}

Digest node(const Digest& l, const Digest& r) {
    Sha256 h;
    h.update(std::uint8_t{0x01}).update(l).update(r);
    return h.finish();
}

}  // namespace

TEST_CASE("roots forced by the leaf, internal and promote rules") {
    Bytes b0 = block_of(0xa0), b1 = block_of(0xa1), b2 = block_of(0xa2);

    std::vector<Bytes> one = {b0};
    CHECK(merkle_build(one).root() == leaf(b0));

    std::vector<Bytes> two = {b0, b1};
    CHECK(merkle_build(two).root() == node(leaf(b0), leaf(b1)));

    std::vector<Bytes> three = {b0, b1, b2};
    CHECK(merkle_build(three).root() == node(node(leaf(b0), leaf(b1)), leaf(b2)));

    CHECK_THROWS(merkle_build(std::vector<Bytes>{}));
    CHECK_THROWS(merkle_build(std::vector<Bytes>{Bytes(10, 0)}));
}

TEST_CASE("honest proofs verify; corrupted blocks do not") {
    std::mt19937_64 rng(42);
    for (std::size_t count : {1u, 2u, 3u, 5u, 8u, 13u}) {
        std::vector<Bytes> blocks;
        for (std::size_t i = 0; i < count; ++i) {
            Bytes b(kBlockSize);
            for (auto& x : b) x = static_cast<std::uint8_t>(rng());
            blocks.push_back(std::move(b));
        }
        MerkleTree tree = merkle_build(blocks);
        for (std::size_t i = 0; i < count; ++i) {
            MerkleProof proof = merkle_prove(tree, i);
            CHECK(merkle_verify_block(tree.root(), i, blocks[i], proof));
            Bytes bad = blocks[i];
            bad[rng() % bad.size()] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
            CHECK_FALSE(merkle_verify_block(tree.root(), i, bad, proof));
        }
    }
}

TEST_CASE("a proof only verifies at its own index") {
    for (std::size_t count : {3u, 4u, 5u, 7u}) {
        std::vector<Bytes> blocks;
        for (std::size_t i = 0; i < count; ++i)
            blocks.push_back(block_of(static_cast<std::uint8_t>(i)));
        MerkleTree tree = merkle_build(blocks);
        for (std::size_t i = 0; i < count; ++i) {
            MerkleProof proof = merkle_prove(tree, i);
            for (std::size_t j = 0; j < count; ++j) {
                bool ok = merkle_verify_block(tree.root(), j, blocks[i], proof);
                CHECK(ok == (i == j));
            }
        }
    }
}

TEST_CASE("random single-bit corruptions are always detected") {
    std::mt19937_64 rng(1234);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t count = 1 + rng() % 12;
        Bytes payload(count * kBlockSize);
        for (auto& b : payload) b = static_cast<std::uint8_t>(rng());
        MerkleTree tree = merkle_build_payload(payload);

        std::size_t block = rng() % count;
        Bytes corrupted(payload.begin() + block * kBlockSize,
                        payload.begin() + (block + 1) * kBlockSize);
        corrupted[rng() % kBlockSize] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
        CHECK_FALSE(merkle_verify_block(tree.root(), block, corrupted,
                                        merkle_prove(tree, block)));
    }
}

TEST_CASE("commitments bind the root and differ per salt") {
    Digest root = hash_bytes("some root");
    Salt salt_a{};
    Salt salt_b{};
    salt_b[0] = 1;

    DataCommitment a = make_commitment(root, salt_a);
    DataCommitment b = make_commitment(root, salt_b);
    CHECK(a.root == b.root);
    CHECK(a.commitment != b.commitment);

    Sha256 h;
    h.update(std::uint8_t{0x02}).update(salt_a).update(root);
    CHECK(a.commitment == h.finish());
}

TEST_CASE("code measurement is the unsalted root of the padded image") {
    Bytes image = to_bytes("tiny code image");
    Bytes padded = image;
    padded.resize(kBlockSize, 0);
    CHECK(code_measurement(image) == merkle_build_payload(padded).root());

    Bytes other = image;
    other[0] ^= 1;
    CHECK(code_measurement(other) != code_measurement(image));
}
