#pragma once

// Constructed MetaUE datasets with known optima.

#include <cmath>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "lmue/metaue.hpp"

namespace oracle {

struct MetaDataset {
    std::vector<lmue::EmbeddingRecord> embeddings;
    std::unordered_map<std::string, double> targets;
    std::unordered_map<std::string, bool> correct;  // correct = target <= 0.5
};

inline std::vector<double> random_direction(std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> a(d);
    double norm = 0.0;
    for (auto & v : a) {
        v = normal(rng);
        norm += v * v;
    }
    for (auto & v : a) v *= 2.0 / std::sqrt(norm);  // |a| = 2
    return a;
}

// x ~ N(0, I_d); U = sigmoid(a . x) for a fixed direction a.
inline MetaDataset linear_dataset(std::size_t n, std::size_t d, std::uint64_t seed, const std::string & prefix,
                                  const std::vector<double> & a) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    MetaDataset out;
    for (std::size_t i = 0; i < n; ++i) {
        lmue::EmbeddingRecord e;
        e.id = prefix + std::to_string(i);
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            e.vector.push_back(normal(rng));
            dot += a[j] * e.vector.back();
        }
        const double u = 1.0 / (1.0 + std::exp(-dot));
        out.targets[e.id] = u;
        out.correct[e.id] = u <= 0.5;
        out.embeddings.push_back(std::move(e));
    }
    return out;
}

// Random embeddings, every target equal to `value`, random correctness.
inline MetaDataset constant_dataset(std::size_t n, std::size_t d, double value, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    MetaDataset out;
    for (std::size_t i = 0; i < n; ++i) {
        lmue::EmbeddingRecord e;
        e.id = "c" + std::to_string(i);
        for (std::size_t j = 0; j < d; ++j) e.vector.push_back(normal(rng));
        out.targets[e.id] = value;
        out.correct[e.id] = i % 2 == 0 ? true : (i % 4 == 1 ? false : coin(rng));
        out.embeddings.push_back(std::move(e));
    }
    return out;
}

}  // namespace oracle
