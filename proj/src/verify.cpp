#include "tpo/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "tpo/errors.hpp"
#include "tpo/frame_sampling.hpp"
#include "tpo/policy.hpp"
#include "tpo/prng.hpp"
#include "tpo/trainer.hpp"

namespace tpo {

namespace {

using clock_type = std::chrono::steady_clock;

double elapsed(clock_type::time_point start) {
    return std::chrono::duration<double>(clock_type::now() - start).count();
}

Vocabulary small_vocab(std::uint32_t content_words) {
    std::vector<std::string> words;
    for (std::uint32_t i = 0; i < content_words; ++i) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "t%02u", i);
        words.emplace_back(buf);
    }
    return Vocabulary::from_words(std::move(words));
}

void randomize(PolicyParameters& params, SplitMix64& rng, double scale = 1.0) {
    for (double& w : params.raw()) w = scale * (2.0 * rng.next_double() - 1.0);
}

std::vector<std::uint32_t> random_response(SplitMix64& rng, std::uint32_t vsize,
                                           std::size_t max_len) {
    const std::size_t len = 1 + static_cast<std::size_t>(rng.next_below(max_len));
    std::vector<std::uint32_t> out(len);
    for (auto& t : out) t = static_cast<std::uint32_t>(rng.next_below(vsize));
    return out;
}

}  // namespace

std::vector<CheckResult> verify_loss_oracles() {
    std::vector<CheckResult> out;

    {
        // theta == reference -> every record's dpo loss is exactly ln 2
        const auto start = clock_type::now();
        double worst = 0.0;
        for (std::uint32_t i = 0; i < 25; ++i) {
            SplitMix64 rng(2024, "verify/ln2/" + std::to_string(i));
            const std::uint32_t content = 2 + static_cast<std::uint32_t>(rng.next_below(7));
            PolicyParameters params(small_vocab(content),
                                    16 + static_cast<std::uint32_t>(rng.next_below(49)));
            randomize(params, rng);
            const ReferenceParameters reference{params};
            const ConditioningContext ctx{rng.next()};
            const auto r_plus = random_response(rng, params.vocab_size(), 5);
            const auto r_minus = random_response(rng, params.vocab_size(), 5);
            const double beta = 0.1 + 0.9 * rng.next_double();
            const double loss = dpo_loss(params, reference, ctx, r_plus, r_minus, beta);
            worst = std::max(worst, std::abs(loss - std::log(2.0)));
        }
        out.push_back({"loss-oracles", "dpo-at-initialization-ln2", worst <= 1e-9, worst, 1e-9,
                       "max |dpo - ln2| over 25 randomized fixtures", elapsed(start)});
    }

    {
        // z = 1 engineered exactly: single-token responses on one column
        const auto start = clock_type::now();
        PolicyParameters params(Vocabulary{}, 8);  // V = 2 (<bos>, <unk>)
        const ReferenceParameters reference{params};
        PolicyParameters policy = params;
        const ConditioningContext ctx{12345};
        policy.set(kUnkId, policy.feature_index(ctx, kBosId), 1.0);
        const std::vector<std::uint32_t> r_plus{kUnkId};
        const std::vector<std::uint32_t> r_minus{kBosId};
        const double loss = dpo_loss(policy, reference, ctx, r_plus, r_minus, 0.3);
        const double expected = std::log1p(std::exp(-0.3));  // independent scalar route
        const double dev = std::abs(loss - expected);
        out.push_back({"loss-oracles", "dpo-scalar-z1-beta0.3", dev <= 1e-9, dev, 1e-9,
                       "|dpo - ln(1+e^-0.3)| at engineered z=1", elapsed(start)});
    }

    {
        // uniform policy: sft of a length-4 response over V=16 is 4 ln 16
        const auto start = clock_type::now();
        PolicyParameters params(small_vocab(14), 16);
        const ConditioningContext ctx{99};
        const std::vector<std::uint32_t> response{3, 7, 11, 2};
        const double loss = sft_loss(params, ctx, response);
        const double dev = std::abs(loss - 4.0 * std::log(16.0));
        out.push_back({"loss-oracles", "sft-uniform-4ln16", dev <= 1e-9, dev, 1e-9,
                       "|sft - 4 ln 16| at theta=0, V=16", elapsed(start)});
    }

    return out;
}

std::vector<CheckResult> verify_gradients(std::uint32_t fixtures) {
    std::vector<CheckResult> out;
    constexpr double kEps = 1e-5;
    constexpr double kTol = 1e-4;

    const auto rel_err = [](double analytic, double numeric) {
        return std::abs(analytic - numeric) /
               std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    };

    {
        const auto start = clock_type::now();
        double worst = 0.0;
        for (std::uint32_t i = 0; i < fixtures; ++i) {
            SplitMix64 rng(2024, "verify/gradlp/" + std::to_string(i));
            const std::uint32_t content = 2 + static_cast<std::uint32_t>(rng.next_below(7));
            PolicyParameters params(small_vocab(content),
                                    16 + static_cast<std::uint32_t>(rng.next_below(49)));
            randomize(params, rng);
            const ConditioningContext ctx{rng.next()};
            const auto response = random_response(rng, params.vocab_size(), 5);
            const SparseGrad g = grad_logprob(params, ctx, response);
            for (const auto& [f, row] : g.cols) {
                for (std::uint32_t v = 0; v < params.vocab_size(); ++v) {
                    const std::uint64_t flat = f * params.vocab_size() + v;
                    const double saved = params.raw()[flat];
                    params.raw()[flat] = saved + kEps;
                    const double hi = logprob_sequence(params, ctx, response);
                    params.raw()[flat] = saved - kEps;
                    const double lo = logprob_sequence(params, ctx, response);
                    params.raw()[flat] = saved;
                    worst = std::max(worst, rel_err(row[v], (hi - lo) / (2.0 * kEps)));
                }
            }
        }
        out.push_back({"gradients", "grad-logprob-vs-central-differences", worst <= kTol, worst,
                       kTol, std::to_string(fixtures) + " randomized fixtures, eps 1e-5",
                       elapsed(start)});
    }

    {
        const auto start = clock_type::now();
        double worst = 0.0;
        for (std::uint32_t i = 0; i < fixtures; ++i) {
            SplitMix64 rng(2024, "verify/gradcomb/" + std::to_string(i));
            const std::uint32_t content = 2 + static_cast<std::uint32_t>(rng.next_below(7));
            PolicyParameters params(small_vocab(content),
                                    16 + static_cast<std::uint32_t>(rng.next_below(49)));
            randomize(params, rng);
            PolicyParameters ref_params = params;
            randomize(ref_params, rng, 0.5);
            const ReferenceParameters reference{ref_params};
            const ConditioningContext ctx{rng.next()};
            const auto r_plus = random_response(rng, params.vocab_size(), 5);
            const auto r_minus = random_response(rng, params.vocab_size(), 5);
            const double beta = 0.1 + 0.9 * rng.next_double();
            const double alphas[3] = {0.0, 0.5, 1.0};
            const double alpha = alphas[rng.next_below(3)];

            const SparseGrad g =
                grad_combined(params, reference, ctx, r_plus, r_minus, beta, alpha);
            for (const auto& [f, row] : g.cols) {
                for (std::uint32_t v = 0; v < params.vocab_size(); ++v) {
                    const std::uint64_t flat = f * params.vocab_size() + v;
                    const double saved = params.raw()[flat];
                    params.raw()[flat] = saved + kEps;
                    const double hi =
                        combined_loss(params, reference, ctx, r_plus, r_minus, beta, alpha);
                    params.raw()[flat] = saved - kEps;
                    const double lo =
                        combined_loss(params, reference, ctx, r_plus, r_minus, beta, alpha);
                    params.raw()[flat] = saved;
                    worst = std::max(worst, rel_err(row[v], (hi - lo) / (2.0 * kEps)));
                }
            }
        }
        out.push_back({"gradients", "grad-combined-vs-central-differences", worst <= kTol, worst,
                       kTol, std::to_string(fixtures) + " randomized fixtures, eps 1e-5",
                       elapsed(start)});
    }

    return out;
}

std::vector<CheckResult> verify_normalization(std::uint32_t draws) {
    const auto start = clock_type::now();
    double worst = 0.0;
    for (std::uint32_t d = 0; d < draws; ++d) {
        SplitMix64 rng(2024, "verify/norm/" + std::to_string(d));
        PolicyParameters params(small_vocab(2), 8);  // V = 4
        randomize(params, rng, 2.0);
        const ConditioningContext ctx{rng.next()};
        const std::uint32_t vsize = params.vocab_size();
        double total = 0.0;
        std::vector<std::uint32_t> seq(2);
        for (std::uint32_t a = 0; a < vsize; ++a) {
            for (std::uint32_t b = 0; b < vsize; ++b) {
                seq[0] = a;
                seq[1] = b;
                total += std::exp(logprob_sequence(params, ctx, seq));
            }
        }
        worst = std::max(worst, std::abs(total - 1.0));
    }
    std::vector<CheckResult> out;
    out.push_back({"normalization", "brute-force-V4-L2", worst <= 1e-9, worst, 1e-9,
                   std::to_string(draws) + " random parameter draws over all 16 sequences",
                   elapsed(start)});
    return out;
}

std::vector<CheckResult> verify_sampling(std::uint32_t cases) {
    std::vector<CheckResult> out;

    {
        const auto start = clock_type::now();
        std::uint64_t violations = 0;
        for (std::uint32_t i = 0; i < cases; ++i) {
            SplitMix64 rng(2024, "verify/irr/" + std::to_string(i));
            VideoRecord video;
            video.video_id = "v" + std::to_string(i);
            video.frame_count = 30 + static_cast<std::uint32_t>(rng.next_below(171));
            video.frame_refs.assign(video.frame_count, "f");
            SamplerConfig cfg;
            cfg.seed = rng.next();
            cfg.anchor_len =
                5 + static_cast<std::uint32_t>(rng.next_below(video.frame_count / 2 - 4));
            const AnchorSegment anchor = sample_anchor(video, cfg, "a/" + std::to_string(i));
            const std::uint32_t room = video.frame_count -
                                       static_cast<std::uint32_t>(anchor.indices.size());
            cfg.irrelevant_len = 1 + static_cast<std::uint32_t>(rng.next_below(room));
            const ManipulatedFrameSet s =
                sample_irrelevant(video, anchor, cfg, "s/" + std::to_string(i));
            const std::unordered_set<std::uint32_t> aset(anchor.indices.begin(),
                                                         anchor.indices.end());
            bool bad = s.indices.size() != cfg.irrelevant_len;
            for (auto idx : s.indices) {
                if (aset.count(idx) || idx >= video.frame_count) bad = true;
            }
            for (std::size_t k = 1; k < s.indices.size(); ++k) {
                if (s.indices[k] <= s.indices[k - 1]) bad = true;
            }
            if (bad) ++violations;
        }
        out.push_back({"sampling", "irrelevant-disjointness",
                       violations == 0, static_cast<double>(violations), 0.0,
                       std::to_string(cases) + " randomized cases", elapsed(start)});
    }

    {
        const auto start = clock_type::now();
        std::uint64_t violations = 0;
        for (std::uint32_t i = 0; i < cases; ++i) {
            SplitMix64 rng(2024, "verify/inc/" + std::to_string(i));
            const std::uint32_t n = 2 + static_cast<std::uint32_t>(rng.next_below(49));
            AnchorSegment anchor;
            anchor.video_id = "v";
            const std::uint32_t start_idx = static_cast<std::uint32_t>(rng.next_below(100));
            for (std::uint32_t k = 0; k < n; ++k) anchor.indices.push_back(start_idx + 2 * k);
            SamplerConfig cfg;
            cfg.seed = rng.next();
            cfg.incomplete_fraction = 0.05 + 0.9 * rng.next_double();
            const ManipulatedFrameSet s =
                sample_incomplete(anchor, cfg, "s/" + std::to_string(i));
            std::size_t expect =
                static_cast<std::size_t>(cfg.incomplete_fraction * static_cast<double>(n));
            expect = std::max<std::size_t>(1, std::min<std::size_t>(expect, n - 1));
            const std::unordered_set<std::uint32_t> aset(anchor.indices.begin(),
                                                         anchor.indices.end());
            bool bad = s.indices.size() != expect || s.indices.empty() ||
                       s.indices.size() >= anchor.indices.size();
            for (auto idx : s.indices) {
                if (!aset.count(idx)) bad = true;
            }
            if (bad) ++violations;
        }
        out.push_back({"sampling", "incomplete-proper-subset",
                       violations == 0, static_cast<double>(violations), 0.0,
                       std::to_string(cases) + " randomized cases", elapsed(start)});
    }

    {
        // every complement index should appear within +-30% of uniform
        const auto start = clock_type::now();
        VideoRecord video;
        video.video_id = "uniform";
        video.frame_count = 100;
        video.frame_refs.assign(100, "f");
        AnchorSegment anchor;
        anchor.video_id = video.video_id;
        for (std::uint32_t i = 40; i < 60; ++i) anchor.indices.push_back(i);
        SamplerConfig cfg;
        cfg.seed = 7;
        cfg.irrelevant_len = 16;
        std::map<std::uint32_t, std::uint64_t> freq;
        const std::uint32_t draws = 10000;
        for (std::uint32_t i = 0; i < draws; ++i) {
            const auto s = sample_irrelevant(video, anchor, cfg, "uni/" + std::to_string(i));
            for (auto idx : s.indices) freq[idx] += 1;
        }
        const double expected = static_cast<double>(draws) * 16.0 / 80.0;
        double worst = 0.0;
        for (std::uint32_t idx = 0; idx < 100; ++idx) {
            if (idx >= 40 && idx < 60) continue;
            const double f = static_cast<double>(freq[idx]);
            worst = std::max(worst, std::abs(f - expected) / expected);
        }
        out.push_back({"sampling", "irrelevant-uniformity-smoke", worst <= 0.30, worst, 0.30,
                       "max relative deviation from uniform over 10k draws", elapsed(start)});
    }

    return out;
}

std::vector<CheckResult> verify_all() {
    std::vector<CheckResult> out;
    for (auto&& group : {verify_loss_oracles(), verify_gradients(), verify_normalization(),
                         verify_sampling()}) {
        out.insert(out.end(), group.begin(), group.end());
    }
    return out;
}

std::string format_check_line(const CheckResult& check) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "[%s] %s/%s measured=%.3e threshold=%.3e (%.2fs) %s",
                  check.passed ? "PASS" : "FAIL", check.suite.c_str(), check.name.c_str(),
                  check.measured, check.threshold, check.seconds, check.detail.c_str());
    return buf;
}

}  // namespace tpo
