#include "tpo/frame_sampling.hpp"

#include <numeric>
#include <unordered_set>

#include "tpo/errors.hpp"
#include "tpo/prng.hpp"

namespace tpo {

AnchorSegment sample_anchor(const VideoRecord& video, const SamplerConfig& cfg,
                            const std::string& stream_id) {
    if (video.frame_count < cfg.anchor_len) {
        throw InsufficientFrames("video " + video.video_id + " has " +
                                 std::to_string(video.frame_count) + " frames, anchor needs " +
                                 std::to_string(cfg.anchor_len));
    }
    AnchorSegment out;
    out.video_id = video.video_id;
    if (cfg.anchor_mode == AnchorMode::FullVideo) {
        out.indices.resize(video.frame_count);
        std::iota(out.indices.begin(), out.indices.end(), 0u);
        return out;
    }
    SplitMix64 rng(cfg.seed, stream_id);
    const std::uint32_t start =
        static_cast<std::uint32_t>(rng.next_below(video.frame_count - cfg.anchor_len + 1));
    out.indices.resize(cfg.anchor_len);
    std::iota(out.indices.begin(), out.indices.end(), start);
    return out;
}

ManipulatedFrameSet sample_irrelevant(const VideoRecord& video, const AnchorSegment& anchor,
                                      const SamplerConfig& cfg, const std::string& stream_id) {
    const std::unordered_set<std::uint32_t> anchor_set(anchor.indices.begin(),
                                                       anchor.indices.end());
    std::vector<std::uint32_t> complement;
    complement.reserve(video.frame_count - anchor.indices.size());
    for (std::uint32_t i = 0; i < video.frame_count; ++i) {
        if (!anchor_set.count(i)) complement.push_back(i);
    }
    if (complement.size() < cfg.irrelevant_len) {
        throw InsufficientComplement("complement has " + std::to_string(complement.size()) +
                                     " frames, need " + std::to_string(cfg.irrelevant_len));
    }
    SplitMix64 rng(cfg.seed, stream_id);
    ManipulatedFrameSet out;
    out.video_id = video.video_id;
    out.strategy = Strategy::Irrelevant;
    out.indices = sample_without_replacement(std::move(complement), cfg.irrelevant_len, rng);
    return out;
}

ManipulatedFrameSet sample_incomplete(const AnchorSegment& anchor, const SamplerConfig& cfg,
                                      const std::string& stream_id) {
    const std::size_t n = anchor.indices.size();
    if (n < 2) {
        throw AnchorTooSmall("anchor of size " + std::to_string(n) +
                             " has no proper subset with at least one element");
    }
    std::size_t k = static_cast<std::size_t>(cfg.incomplete_fraction * static_cast<double>(n));
    if (k < 1) k = 1;
    if (k >= n) k = n - 1;
    SplitMix64 rng(cfg.seed, stream_id);
    ManipulatedFrameSet out;
    out.video_id = anchor.video_id;
    out.strategy = Strategy::Incomplete;
    out.indices = sample_without_replacement(anchor.indices, k, rng);
    return out;
}

MixPlan plan_mix(std::uint64_t total, std::uint64_t ratio_incomplete,
                 std::uint64_t ratio_irrelevant) {
    const std::uint64_t denom = ratio_incomplete + ratio_irrelevant;
    if (denom == 0) throw InvalidRatio("mix ratios must not both be zero");
    // round-half-up in exact integer arithmetic
    const std::uint64_t incomplete = (2 * total * ratio_incomplete + denom) / (2 * denom);
    return MixPlan{total, incomplete, total - incomplete};
}

}  // namespace tpo
