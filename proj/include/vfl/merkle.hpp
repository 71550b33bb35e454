#pragma once

// Merkle-tree protection for dataset and code images, plus the salted
// data commitment derived from a tree root.
//
// Tree rules (fixed; any change breaks every stored commitment):
//   leaf     = H(0x00 || block)
//   internal = H(0x01 || left || right)
//   an unpaired node is promoted unchanged to the next level
//   commitment = H(0x02 || salt || root);   code images use the bare root

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "vfl/crypto.hpp"

namespace vfl {

inline constexpr std::size_t kBlockSize = 4096;

struct MerkleTree {
    std::size_t block_size = kBlockSize;
    // levels[0] = leaves, levels.back() = {root}
    std::vector<std::vector<Digest>> levels;

    const Digest& root() const { return levels.back().front(); }
    std::size_t leaf_count() const { return levels.front().size(); }
};

struct MerkleProofNode {
    // A level without a sibling is a promotion step (node carried up unchanged).
    std::optional<Digest> sibling;
    bool sibling_is_left = false;
};
using MerkleProof = std::vector<MerkleProofNode>;

// blocks must be non-empty and each exactly block_size bytes.
// Throws std::invalid_argument otherwise.
MerkleTree merkle_build(std::span<const Bytes> blocks, std::size_t block_size = kBlockSize);
// Same rules over a contiguous buffer whose length is a multiple of block_size.
MerkleTree merkle_build_payload(std::span<const std::uint8_t> payload,
                                std::size_t block_size = kBlockSize);

MerkleProof merkle_prove(const MerkleTree& tree, std::size_t index);

// True iff the block at `index` hashes up to `root` through `path`.
// Never throws; any inconsistency (wrong index parity, wrong sibling,
// modified block) returns false.
bool merkle_verify_block(const Digest& root, std::size_t index,
                         std::span<const std::uint8_t> block, const MerkleProof& path);

using Salt = std::array<std::uint8_t, 16>;

struct DataCommitment {
    Digest root;
    Salt salt{};
    Digest commitment;

    auto operator<=>(const DataCommitment&) const = default;
};

DataCommitment make_commitment(const Digest& root, const Salt& salt);

// Code measurement: Merkle root of the code image, zero-padded to a
// whole number of blocks. No salt, so allowlists stay stable.
Digest code_measurement(std::span<const std::uint8_t> code_image);

}  // namespace vfl
