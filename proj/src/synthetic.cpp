#include "lmue/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_set>

#include "lmue/random.hpp"

namespace lmue {

namespace {

constexpr std::int64_t kEosTokenId = 2;
constexpr std::int64_t kFirstWordId = 3;
constexpr std::uint64_t kEmbeddingStream = 0x656d62ull;  // separate streams for embeddings
constexpr std::uint64_t kDirectionStream = 0x646972ull;

std::vector<double> unit_direction(std::size_t dim, std::uint64_t seed) {
    auto rng = make_engine(seed, kDirectionStream);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> u(dim);
    double norm = 0.0;
    for (auto & x : u) {
        x = normal(rng);
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto & x : u) x /= norm;
    return u;
}

std::string join_words(const std::vector<std::string> & words) {
    std::string out;
    for (const auto & w : words) {
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

}  // namespace

void SyntheticSpec::validate() const {
    if (n == 0) throw std::invalid_argument("synthetic corpus needs n >= 1");
    if (min_length < 1 || max_length < min_length) throw std::invalid_argument("need 1 <= min_length <= max_length");
    if (k < 1) throw std::invalid_argument("K must be >= 1");
    if (!(separation >= 0.0)) throw std::invalid_argument("separation must be >= 0");
    if (!(unreliable_fraction >= 0.0 && unreliable_fraction <= 1.0))
        throw std::invalid_argument("unreliable fraction must lie in [0, 1]");
    if (!(base_magnitude > 0.0) || !(token_noise >= 0.0) || !(record_noise >= 0.0))
        throw std::invalid_argument("magnitude parameters must be positive");
    if (!(eos_probability >= 0.0 && eos_probability <= 1.0))
        throw std::invalid_argument("EOS probability must lie in [0, 1]");
    if (!(train_fraction >= 0.0 && val_fraction >= 0.0 && train_fraction + val_fraction <= 1.0))
        throw std::invalid_argument("split fractions must be non-negative and sum to at most 1");
    if (vocab_size < static_cast<std::size_t>(kFirstWordId) + k)
        throw std::invalid_argument("vocabulary too small for K distinct ids");
}

SyntheticCorpus generate_synthetic(const SyntheticSpec & spec) {
    spec.validate();
    const auto direction = spec.embed_dim > 0 ? unit_direction(spec.embed_dim, spec.seed) : std::vector<double>{};
    const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(spec.n)));
    const auto n_val = std::min(spec.n - n_train,
                                static_cast<std::size_t>(std::llround(spec.val_fraction * static_cast<double>(spec.n))));

    SyntheticCorpus corpus;
    for (std::size_t i = 0; i < spec.n; ++i) {
        auto rng = make_engine(spec.seed, i);
        std::bernoulli_distribution is_unreliable(spec.unreliable_fraction);
        std::uniform_int_distribution<std::size_t> length_dist(spec.min_length, spec.max_length);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> lead(2.0, 4.0);
        std::exponential_distribution<double> gap(2.0);  // mean 0.5
        std::uniform_int_distribution<std::int64_t> word(kFirstWordId, static_cast<std::int64_t>(spec.vocab_size) - 1);
        std::bernoulli_distribution ends_with_eos(spec.eos_probability);

        const bool unreliable = is_unreliable(rng);
        const std::size_t length = length_dist(rng);
        const bool eos = length > 1 && ends_with_eos(rng);
        const double record_offset = spec.record_noise * normal(rng);

        GenerationRecord rec;
        char id[32];
        std::snprintf(id, sizeof id, "syn-%06zu", i);
        rec.id = id;
        rec.prompt = "synthetic prompt " + std::to_string(i);

        std::vector<std::string> answer_words;
        for (std::size_t t = 0; t < length; ++t) {
            // Descending shape with a positive head and a negative tail, rescaled
            // so its ReLU-L2 magnitude hits the target exactly.
            std::vector<double> shape(spec.k);
            shape[0] = lead(rng);
            for (std::size_t k = 1; k < spec.k; ++k) shape[k] = shape[k - 1] - gap(rng);
            double positive_norm = 0.0;
            for (double v : shape) {
                if (v > 0.0) positive_norm += v * v;
            }
            positive_norm = std::sqrt(positive_norm);
            double target = std::max(0.5, spec.base_magnitude + record_offset + spec.token_noise * normal(rng));
            if (unreliable) target += spec.separation;
            const double scale = target / positive_norm;

            TokenStep step;
            std::unordered_set<std::int64_t> used;
            const bool is_eos_step = eos && t + 1 == length;
            for (std::size_t k = 0; k < spec.k; ++k) {
                std::int64_t id_k = (k == 0 && is_eos_step) ? kEosTokenId : word(rng);
                while (!used.insert(id_k).second) id_k = word(rng);
                step.topk_token_ids.push_back(id_k);
                step.topk_logits.push_back(shape[k] * scale);
            }
            step.token_id = step.topk_token_ids[0];
            step.is_eos = is_eos_step;
            step.token_text = is_eos_step ? "</s>" : "w" + std::to_string(step.token_id);
            if (!is_eos_step) answer_words.push_back(step.token_text);
            rec.steps.push_back(std::move(step));
        }
        rec.answer_text = join_words(answer_words);

        std::vector<std::string> reference;
        if (unreliable) {
            for (std::size_t w = 0; w < answer_words.size(); ++w) reference.push_back("r" + std::to_string(word(rng)));
        } else {
            const std::size_t span = (answer_words.size() + 1) / 2;
            std::uniform_int_distribution<std::size_t> start_dist(0, answer_words.size() - span);
            const std::size_t start = start_dist(rng);
            reference.assign(answer_words.begin() + static_cast<std::ptrdiff_t>(start),
                             answer_words.begin() + static_cast<std::ptrdiff_t>(start + span));
        }
        rec.reference = join_words(reference);

        SyntheticSplit & split = i < n_train ? corpus.train : (i < n_train + n_val ? corpus.val : corpus.test);
        if (spec.embed_dim > 0) {
            auto erng = make_engine(derive_seed(spec.seed, kEmbeddingStream), i);
            std::normal_distribution<double> enormal(0.0, 1.0);
            EmbeddingRecord emb;
            emb.id = rec.id;
            emb.vector.resize(spec.embed_dim);
            for (std::size_t d = 0; d < spec.embed_dim; ++d) {
                emb.vector[d] = enormal(erng) + (unreliable ? spec.embed_separation * direction[d] : 0.0);
            }
            split.embeddings.push_back(std::move(emb));
        }
        split.records.push_back(std::move(rec));
    }
    return corpus;
}

}  // namespace lmue
