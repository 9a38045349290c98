#pragma once

// Hierarchical 4-stage visual encoder stand-in: 4x4 patch embedding with a
// learned (zero-initialized) positional table, one global-attention block per
// stage, and 2x2 patch merging that halves the grid and doubles the channels.

#include <string>
#include <vector>

#include "tmc/nn.hpp"
#include "tmc/spatial.hpp"
#include "tmc/tensor.hpp"

namespace tmc {

struct StageFeature {
    int stage = 0;
    int h = 0, w = 0;
    Tensor tokens;  // [(h*w) x channels]

    int channels() const { return tokens.dim(1); }
    int count() const { return h * w; }
};

struct VisualEncoderConfig {
    int image_h = 32, image_w = 32;
    int in_channels = 1;
    int patch = 4;
    int base_channels = 8;  // C_1
    int num_stages = 4;
    std::vector<int> fusion_stages = {2, 3, 4};
    int heads = 2;
    int blocks_per_stage = 1;
    // When true, stage continuations at fusion stages consume fused tokens of
    // `common_dim` channels instead of the raw C_i.
    bool fused_continuation = false;
    int common_dim = 16;

    int channels_at(int stage) const { return base_channels << (stage - 1); }
    int grid_h(int stage) const { return (image_h / patch) >> (stage - 1); }
    int grid_w(int stage) const { return (image_w / patch) >> (stage - 1); }
    bool is_fusion_stage(int stage) const {
        for (int s : fusion_stages)
            if (s == stage) return true;
        return false;
    }
    int stage_input_channels(int stage) const {
        return fused_continuation && is_fusion_stage(stage) ? common_dim : channels_at(stage);
    }

    void validate() const {
        int div = patch << (num_stages - 1);
        if (num_stages < 1) throw std::invalid_argument("config error: num_stages < 1");
        if (image_h % div != 0 || image_w % div != 0)
            throw std::invalid_argument(
                "shape error: image " + std::to_string(image_h) + "x" + std::to_string(image_w) +
                " not divisible by patch*2^(stages-1) = " + std::to_string(div));
        for (int s : fusion_stages)
            if (s < 2 || s > num_stages)
                throw std::invalid_argument("stage-selection error: fusion stage " +
                                            std::to_string(s) + " outside {2.." +
                                            std::to_string(num_stages) + "}");
    }
};

class VisualEncoder {
  public:
    VisualEncoder() = default;
    VisualEncoder(ParamInit& init, const VisualEncoderConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        int n1 = (cfg.image_h / cfg.patch) * (cfg.image_w / cfg.patch);
        int proj_in = cfg.patch * cfg.patch * cfg.in_channels;
        patch_proj_ = Linear(init, "vis.patch", proj_in, cfg.base_channels);
        pos_ = init.zeros("vis.pos", {n1, cfg.base_channels});
        for (int stage = 1; stage < cfg.num_stages; ++stage) {
            Stage st;
            int c_in = cfg_.stage_input_channels(stage);
            for (int b = 0; b < cfg.blocks_per_stage; ++b)
                st.blocks.emplace_back(init,
                                       "vis.s" + std::to_string(stage) + ".b" + std::to_string(b),
                                       c_in, cfg.heads);
            st.merge = Linear(init, "vis.s" + std::to_string(stage) + ".merge", 4 * c_in,
                              cfg.channels_at(stage + 1));
            stages_.push_back(std::move(st));
        }
    }

    const VisualEncoderConfig& config() const { return cfg_; }

    // Image [Cin x H x W] -> stage-1 tokens.
    StageFeature patch_embed(const Tensor& image) const {
        if (image.shape() !=
            Shape{cfg_.in_channels, cfg_.image_h, cfg_.image_w})
            throw std::invalid_argument("shape error: patch_embed expects " +
                                        shape_str({cfg_.in_channels, cfg_.image_h, cfg_.image_w}) +
                                        ", got " + shape_str(image.shape()));
        Tensor rows = extract_patches(image, cfg_.patch);
        StageFeature f;
        f.stage = 1;
        f.h = cfg_.image_h / cfg_.patch;
        f.w = cfg_.image_w / cfg_.patch;
        f.tokens = add(patch_proj_(rows), pos_);
        return f;
    }

    // Attention block(s) at stage i, then patch merging into stage i+1.
    StageFeature encode_stage(const StageFeature& in) const {
        int i = in.stage;
        if (i < 1 || i >= cfg_.num_stages)
            throw std::invalid_argument("stage-selection error: encode_stage at stage " +
                                        std::to_string(i));
        const Stage& st = stages_[static_cast<size_t>(i - 1)];
        Tensor x = in.tokens;
        for (const auto& block : st.blocks) x = block(x);
        Tensor merged = merge_tokens_2x2(x, in.h, in.w);
        StageFeature out;
        out.stage = i + 1;
        out.h = in.h / 2;
        out.w = in.w / 2;
        out.tokens = st.merge(merged);
        return out;
    }

  private:
    struct Stage {
        std::vector<TransformerBlock> blocks;
        Linear merge;
    };

    VisualEncoderConfig cfg_;
    Linear patch_proj_;
    Tensor pos_;
    std::vector<Stage> stages_;
};

}  // namespace tmc
