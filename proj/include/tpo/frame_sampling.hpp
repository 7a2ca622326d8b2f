#pragma once

#include <cstdint>
#include <string>

#include "tpo/core_model.hpp"

namespace tpo {

enum class AnchorMode { ContiguousSegment, FullVideo };

struct SamplerConfig {
    std::uint32_t anchor_len = 20;
    AnchorMode anchor_mode = AnchorMode::ContiguousSegment;
    std::uint32_t irrelevant_len = 20;   // defaults to anchor_len via pipeline config
    double incomplete_fraction = 0.5;    // strictly in (0,1)
    std::uint64_t seed = 0;
};

struct MixPlan {
    std::uint64_t total = 0;
    std::uint64_t incomplete_count = 0;
    std::uint64_t irrelevant_count = 0;

    bool operator==(const MixPlan&) const = default;
};

// ContiguousSegment: anchor_len consecutive indices, start drawn uniformly
// from stream (cfg.seed, stream_id). FullVideo: all indices.
AnchorSegment sample_anchor(const VideoRecord& video, const SamplerConfig& cfg,
                            const std::string& stream_id);

// irrelevant_len indices drawn uniformly without replacement from the
// complement of the anchor, ascending.
ManipulatedFrameSet sample_irrelevant(const VideoRecord& video, const AnchorSegment& anchor,
                                      const SamplerConfig& cfg, const std::string& stream_id);

// k = max(1, floor(incomplete_fraction * |anchor|)) indices drawn without
// replacement from the anchor, with k < |anchor| enforced, ascending.
ManipulatedFrameSet sample_incomplete(const AnchorSegment& anchor, const SamplerConfig& cfg,
                                      const std::string& stream_id);

// incomplete_count = round-half-up(total * ratio_incomplete / (ratio_incomplete
// + ratio_irrelevant)); the remainder goes to irrelevant.
MixPlan plan_mix(std::uint64_t total, std::uint64_t ratio_incomplete,
                 std::uint64_t ratio_irrelevant);

}  // namespace tpo
