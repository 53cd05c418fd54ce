// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace jumphjb {

using Rng = std::mt19937_64;

/// Named seed derivation. Every stream is a pure function of
/// (master seed, stage label, index), so any stage can be re-run alone.
class SeedSequence {
public:
    SeedSequence(std::uint64_t master, std::string_view label)
        : master_(master), label_hash_(hash_label(label)) {}

    std::uint64_t seed_for(std::uint64_t index) const {
        std::uint64_t s = mix(master_ ^ mix(label_hash_));
        return mix(s + 0x9e3779b97f4a7c15ULL * (index + 1));
    }

    Rng stream(std::uint64_t index) const { return Rng(seed_for(index)); }

    /// Child sequence for a nested stage (e.g. one stream family per decision node).
    SeedSequence child(std::string_view label, std::uint64_t index = 0) const {
        SeedSequence out = *this;
        out.label_hash_ = mix(label_hash_ ^ hash_label(label)) + index;
        return out;
    }

    std::uint64_t master() const { return master_; }

private:
    static constexpr std::uint64_t mix(std::uint64_t z) {
        // splitmix64 finalizer
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static constexpr std::uint64_t hash_label(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        return h;
    }

    std::uint64_t master_;
    std::uint64_t label_hash_;
};

}  // namespace jumphjb
