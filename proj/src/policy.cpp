#include "tpo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tpo/errors.hpp"
#include "tpo/prng.hpp"

namespace tpo {

Vocabulary::Vocabulary() {
    words_ = {"<bos>", "<unk>"};
    index_.emplace("<bos>", kBosId);
    index_.emplace("<unk>", kUnkId);
}

Vocabulary Vocabulary::from_words(std::vector<std::string> words) {
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    Vocabulary v;
    for (auto& w : words) {
        if (w.empty() || w == "<bos>" || w == "<unk>") continue;
        const auto id = static_cast<std::uint32_t>(v.words_.size());
        v.index_.emplace(w, id);
        v.words_.push_back(std::move(w));
    }
    return v;
}

Vocabulary Vocabulary::from_dataset(const std::vector<PreferenceRecord>& records) {
    std::vector<std::string> words;
    auto split_into = [&words](const std::string& text) {
        std::istringstream is(text);
        std::string w;
        while (is >> w) words.push_back(w);
    };
    for (const auto& r : records) {
        split_into(r.preferred);
        split_into(r.dispreferred);
    }
    return from_words(std::move(words));
}

std::uint32_t Vocabulary::id_of(std::string_view word) const {
    const auto it = index_.find(word);
    return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::word_of(std::uint32_t id) const {
    if (id >= words_.size()) throw VocabError("token id " + std::to_string(id) + " out of range");
    return words_[id];
}

std::vector<std::uint32_t> Vocabulary::encode(std::string_view text) const {
    std::vector<std::uint32_t> out;
    std::istringstream is{std::string(text)};
    std::string w;
    while (is >> w) out.push_back(id_of(w));
    return out;
}

bool Vocabulary::operator==(const Vocabulary& o) const { return words_ == o.words_; }

ConditioningContext make_context(std::string_view video_id,
                                 std::span<const std::uint32_t> frame_indices,
                                 std::span<const std::uint32_t> query_token_ids) {
    std::ostringstream os;
    os << video_id << '|';
    for (std::size_t i = 0; i < frame_indices.size(); ++i) {
        if (i) os << ',';
        os << frame_indices[i];
    }
    os << '|';
    for (std::size_t i = 0; i < query_token_ids.size(); ++i) {
        if (i) os << ',';
        os << query_token_ids[i];
    }
    return ConditioningContext{fnv1a64(os.str())};
}

PolicyParameters::PolicyParameters(Vocabulary vocab, std::uint32_t num_buckets)
    : vocab_(std::move(vocab)), num_buckets_(num_buckets) {
    if (num_buckets_ == 0) throw ConfigError("num_buckets must be positive");
    weights_.assign(feature_count() * vocab_.size(), 0.0);
}

bool PolicyParameters::all_finite() const {
    return std::all_of(weights_.begin(), weights_.end(),
                       [](double w) { return std::isfinite(w); });
}

bool PolicyParameters::operator==(const PolicyParameters& o) const {
    return vocab_ == o.vocab_ && num_buckets_ == o.num_buckets_ && weights_ == o.weights_;
}

namespace {
constexpr char kSnapshotMagic[8] = {'T', 'P', 'O', 'W', '0', '0', '0', '1'};
}

void PolicyParameters::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write snapshot: " + path);
    out.write(kSnapshotMagic, sizeof(kSnapshotMagic));
    const std::uint64_t v = vocab_.size();
    const std::uint64_t f = feature_count();
    const std::uint32_t buckets = num_buckets_;
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    out.write(reinterpret_cast<const char*>(&f), sizeof(f));
    out.write(reinterpret_cast<const char*>(&buckets), sizeof(buckets));
    out.write(reinterpret_cast<const char*>(weights_.data()),
              static_cast<std::streamsize>(weights_.size() * sizeof(double)));
    if (!out) throw IoError("short write: " + path);

    nlohmann::ordered_json sidecar;
    sidecar["schema_version"] = kSchemaVersion;
    sidecar["vocab"] = vocab_.words();
    sidecar["num_buckets"] = num_buckets_;
    sidecar["feature_count"] = f;
    std::ofstream side(path + ".json", std::ios::trunc);
    if (!side) throw IoError("cannot write snapshot sidecar: " + path + ".json");
    side << sidecar.dump(2) << '\n';
}

PolicyParameters PolicyParameters::load(const std::string& path) {
    std::ifstream side_in(path + ".json");
    if (!side_in) throw IoError("cannot read snapshot sidecar: " + path + ".json");
    nlohmann::json sidecar;
    try {
        side_in >> sidecar;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad snapshot sidecar: ") + e.what());
    }
    auto words = sidecar.at("vocab").get<std::vector<std::string>>();
    if (words.size() < 2 || words[0] != "<bos>" || words[1] != "<unk>") {
        throw ParseError("snapshot vocab missing reserved tokens");
    }
    Vocabulary vocab = Vocabulary::from_words({words.begin() + 2, words.end()});
    if (vocab.words() != words) throw ParseError("snapshot vocab is not in canonical order");

    PolicyParameters params(std::move(vocab), sidecar.at("num_buckets").get<std::uint32_t>());

    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read snapshot: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kSnapshotMagic, sizeof(magic)) != 0) {
        throw ParseError("bad snapshot magic: " + path);
    }
    std::uint64_t v = 0, f = 0;
    std::uint32_t buckets = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    in.read(reinterpret_cast<char*>(&f), sizeof(f));
    in.read(reinterpret_cast<char*>(&buckets), sizeof(buckets));
    if (!in || v != params.vocab_size() || f != params.feature_count() ||
        buckets != params.num_buckets()) {
        throw ParseError("snapshot header does not match sidecar: " + path);
    }
    in.read(reinterpret_cast<char*>(params.weights_.data()),
            static_cast<std::streamsize>(params.weights_.size() * sizeof(double)));
    if (!in) throw ParseError("snapshot truncated: " + path);
    return params;
}

void SparseGrad::accumulate(double scale, const SparseGrad& other) {
    for (const auto& [f, row] : other.cols) {
        auto& dst = cols[f];
        if (dst.empty()) dst.assign(vocab_size, 0.0);
        for (std::uint32_t v = 0; v < vocab_size; ++v) dst[v] += scale * row[v];
    }
}

double SparseGrad::max_abs() const {
    double m = 0.0;
    for (const auto& [f, row] : cols) {
        for (double x : row) m = std::max(m, std::abs(x));
    }
    return m;
}

namespace {

void check_response(const PolicyParameters& params, std::span<const std::uint32_t> response) {
    if (response.empty()) throw VocabError("response is empty");
    for (auto id : response) {
        if (id >= params.vocab_size()) {
            throw VocabError("token id " + std::to_string(id) + " out of vocabulary");
        }
    }
}

// log-sum-exp over one weight column
double logsumexp(std::span<const double> logits) {
    double m = logits[0];
    for (double l : logits) m = std::max(m, l);
    double s = 0.0;
    for (double l : logits) s += std::exp(l - m);
    return m + std::log(s);
}

}  // namespace

double logprob_sequence(const PolicyParameters& params, ConditioningContext ctx,
                        std::span<const std::uint32_t> response) {
    check_response(params, response);
    double lp = 0.0;
    std::uint32_t prev = kBosId;
    for (auto token : response) {
        const auto col = params.column(params.feature_index(ctx, prev));
        lp += col[token] - logsumexp(col);
        prev = token;
    }
    return lp;
}

SparseGrad grad_logprob(const PolicyParameters& params, ConditioningContext ctx,
                        std::span<const std::uint32_t> response) {
    check_response(params, response);
    const std::uint32_t vsize = params.vocab_size();
    SparseGrad g;
    g.vocab_size = vsize;
    std::uint32_t prev = kBosId;
    for (auto token : response) {
        const std::uint64_t f = params.feature_index(ctx, prev);
        const auto col = params.column(f);
        const double lse = logsumexp(col);
        auto& row = g.cols[f];
        if (row.empty()) row.assign(vsize, 0.0);
        for (std::uint32_t v = 0; v < vsize; ++v) row[v] -= std::exp(col[v] - lse);
        row[token] += 1.0;
        prev = token;
    }
    return g;
}

}  // namespace tpo
