#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lmue/metaue.hpp"
#include "lmue/stream.hpp"

namespace lmue {

// Two-population corpus with known ground truth. Reliable records carry a
// reference that overlaps the answer; unreliable ones a token-disjoint
// reference. Every token of an unreliable record has its ReLU-L2 logit
// magnitude raised by `separation`, so the magnitude ranks the classes.
struct SyntheticSpec {
    std::size_t n = 2000;
    std::size_t min_length = 16;
    std::size_t max_length = 64;
    std::size_t k = 20;
    double separation = 2.0;
    double unreliable_fraction = 0.5;
    double base_magnitude = 10.0;  // mean token magnitude of reliable records
    double token_noise = 1.0;      // per-token magnitude sd
    double record_noise = 0.3;     // per-record magnitude offset sd
    double eos_probability = 0.9;
    double train_fraction = 0.6;
    double val_fraction = 0.2;
    std::size_t embed_dim = 8;  // 0 disables embeddings
    double embed_separation = 1.5;
    std::size_t vocab_size = 32000;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticSplit {
    std::vector<GenerationRecord> records;
    std::vector<EmbeddingRecord> embeddings;
};

struct SyntheticCorpus {
    SyntheticSplit train;
    SyntheticSplit val;
    SyntheticSplit test;
};

// Record i draws from its own generator seeded from (seed, i); the first
// round(n * train_fraction) records form the train split, then val, then test.
SyntheticCorpus generate_synthetic(const SyntheticSpec & spec);

}  // namespace lmue
