#pragma once

// Full TMC assembly: Swin-lite encoder with stage-wise MCM fusion, dual
// CNN/ViT down paths with fused-feature injection, bottleneck merge, U-shaped
// decoder with triple concatenation, and the 1x1-conv sigmoid head.

#include <map>
#include <string>
#include <vector>

#include "tmc/fusion.hpp"
#include "tmc/nn.hpp"
#include "tmc/spatial.hpp"
#include "tmc/tensor.hpp"
#include "tmc/text.hpp"
#include "tmc/vision.hpp"

namespace tmc {

struct ModelConfig {
    int image_size = 32;
    int in_channels = 1;
    int base_channels = 8;  // C_1; doubles per stage
    int common_dim = 16;    // d, the cross-attention dim
    int text_dim = 32;      // d_l
    int align_dim = 16;     // D, shared alignment space
    int num_stages = 4;
    std::vector<int> fusion_stages = {2, 3, 4};
    int text_blocks = 2;
    int enc_heads = 2;
    int mcm_heads = 4;
    int text_heads = 4;
    int vocab_size = 14;
    bool mcm_on = true;
    bool align_on = true;
    AlignMode align_mode = AlignMode::kPaperLiteral;
    bool text_ablation = false;

    int channels_at(int stage) const { return base_channels << (stage - 1); }
    int grid(int stage) const { return (image_size / 4) >> (stage - 1); }
    bool is_fusion_stage(int stage) const {
        for (int s : fusion_stages)
            if (s == stage) return true;
        return false;
    }

    void validate() const {
        if (align_on && fusion_stages.empty())
            throw std::invalid_argument("config error: alignment enabled with empty fusion-stage set");
        for (size_t i = 1; i < fusion_stages.size(); ++i)
            if (fusion_stages[i] <= fusion_stages[i - 1])
                throw std::invalid_argument("config error: fusion stages must be ascending");
        VisualEncoderConfig v = encoder_config();
        v.validate();
    }

    VisualEncoderConfig encoder_config() const {
        VisualEncoderConfig v;
        v.image_h = v.image_w = image_size;
        v.in_channels = in_channels;
        v.base_channels = base_channels;
        v.num_stages = num_stages;
        v.fusion_stages = fusion_stages;
        v.heads = enc_heads;
        v.fused_continuation = mcm_on;
        v.common_dim = common_dim;
        return v;
    }
};

struct Conv2dLayer {
    Tensor w, b;
    int stride = 1, pad = 0;

    Conv2dLayer() = default;
    Conv2dLayer(ParamInit& init, const std::string& prefix, int cin, int cout, int k, int stride_,
                int pad_)
        : w(init.weight(prefix + ".w", {cout, cin, k, k}, cin * k * k)),
          b(init.zeros(prefix + ".b", {cout})),
          stride(stride_),
          pad(pad_) {}

    Tensor operator()(const Tensor& x) const { return conv2d(x, w, b, stride, pad); }
};

// Layer norm over channels at each spatial position.
inline Tensor channel_norm(const Tensor& x_chw, const LayerNorm& ln) {
    int h = x_chw.dim(1), w = x_chw.dim(2);
    return tokens_to_chw(ln(chw_to_tokens(x_chw)), h, w);
}

struct StageCache {
    Tensor v_pre;    // pre-fusion V_i tokens
    Tensor f_v;      // fused tokens fed onward (when MCM is on)
    Tensor attn_vl;  // visual->text attention (absent under text ablation)
    bool has_attn = false;
};

struct SegOutput {
    Tensor prob;  // [1 x H x W], strictly inside (0,1)
    std::map<int, StageCache> stages;
    std::vector<Tensor> align_losses;  // per selected stage, ascending
    std::vector<std::string> events;   // forward-order trace, e.g. "ma:2", "mcm:2"
    bool cosine_guard_hit = false;
};

class TmcNetwork {
  public:
    TmcNetwork(const ModelConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
        cfg_.validate();
        rng_.seed(derive_init(init_seed));
        ParamInit init{store_, rng_};

        TextEncoderConfig tc;
        tc.vocab_size = cfg_.vocab_size;
        tc.d_l = cfg_.text_dim;
        tc.d = cfg_.common_dim;
        tc.heads = cfg_.text_heads;
        tc.blocks = cfg_.text_blocks;
        tc.stages = cfg_.fusion_stages;
        text_ = TextEncoder(init, tc);

        vis_ = VisualEncoder(init, cfg_.encoder_config());

        for (int s : cfg_.fusion_stages) {
            mcm_.emplace(s, McmStage(init, "mcm.s" + std::to_string(s), cfg_.channels_at(s),
                                     cfg_.common_dim, cfg_.mcm_heads));
            align_.emplace(s, AlignmentHead(init, "align.s" + std::to_string(s),
                                            cfg_.channels_at(s), cfg_.common_dim, cfg_.align_dim));
        }

        int c1 = cfg_.base_channels;
        stem_conv0_ = Conv2dLayer(init, "seg.cnn_stem.c0", cfg_.in_channels, c1, 4, 2, 1);
        stem_ln0_ = LayerNorm(init, "seg.cnn_stem.ln0", c1);
        stem_conv1_ = Conv2dLayer(init, "seg.cnn_stem.c1", c1, c1, 4, 2, 1);
        stem_ln1_ = LayerNorm(init, "seg.cnn_stem.ln1", c1);

        int n1 = cfg_.grid(1) * cfg_.grid(1);
        vit_stem_proj_ = Linear(init, "seg.vit_stem.proj", 16 * cfg_.in_channels, c1);
        vit_stem_pos_ = init.zeros("seg.vit_stem.pos", {n1, c1});

        for (int i = 1; i < cfg_.num_stages; ++i) {
            int cin = cfg_.channels_at(i) + (fused(i) ? cfg_.common_dim : 0);
            int cout = cfg_.channels_at(i + 1);
            std::string si = std::to_string(i);
            down_cnn_.emplace_back(init, "seg.down_cnn.s" + si, cin, cout, 4, 2, 1);
            down_cnn_ln_.emplace_back(init, "seg.down_cnn.s" + si + ".ln", cout);
            down_vit_blocks_.emplace_back(init, "seg.down_vit.s" + si + ".block", cin,
                                          cfg_.enc_heads);
            down_vit_merge_.emplace_back(init, "seg.down_vit.s" + si + ".merge", 4 * cin, cout);
        }

        int cn = cfg_.channels_at(cfg_.num_stages);
        bottleneck_ = Conv2dLayer(init, "seg.bottleneck", 2 * cn, cn, 3, 1, 1);
        bottleneck_ln_ = LayerNorm(init, "seg.bottleneck.ln", cn);

        for (int i = cfg_.num_stages; i >= 1; --i) {
            int cin = 2 * cfg_.channels_at(i) + (fused(i) ? cfg_.common_dim : 0);
            int cout = i >= 2 ? cfg_.channels_at(i - 1) : c1;
            std::string si = std::to_string(i);
            up_conv0_.emplace_back(init, "seg.up.s" + si + ".c0", cin, cout, 3, 1, 1);
            up_ln_.emplace_back(init, "seg.up.s" + si + ".ln", cout);
            up_conv1_.emplace_back(init, "seg.up.s" + si + ".c1", cout, cout, 3, 1, 1);
        }
        head_ = Conv2dLayer(init, "seg.head", c1, 1, 1, 1, 0);
    }

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }
    const TextEncoder& text_encoder() const { return text_; }
    const VisualEncoder& visual_encoder() const { return vis_; }
    const AlignmentHead& alignment_head(int stage) const { return align_.at(stage); }
    const McmStage& mcm_stage_params(int stage) const { return mcm_.at(stage); }

    SegOutput forward(const Tensor& image, const TokenSeq& tokens) const {
        SegOutput out;
        bool text_needed = cfg_.align_on || (cfg_.mcm_on && !cfg_.text_ablation);
        TextFeatures tf;
        if (text_needed) tf = text_.encode(tokens);

        Tensor x = relu(channel_norm(stem_conv0_(image), stem_ln0_));
        x = relu(channel_norm(stem_conv1_(x), stem_ln1_));
        Tensor y = tokens_to_chw(add(vit_stem_proj_(extract_patches(image, 4)), vit_stem_pos_),
                                 cfg_.grid(1), cfg_.grid(1));
        StageFeature v = vis_.patch_embed(image);

        std::map<int, Tensor> fv;                        // fused tokens per stage
        std::vector<Tensor> skips(static_cast<size_t>(cfg_.num_stages) + 1);  // X_i per stage
        Tensor text_state;
        bool text_chained = false;

        for (int i = 1; i <= cfg_.num_stages; ++i) {
            skips[static_cast<size_t>(i)] = x;
            if (cfg_.is_fusion_stage(i)) {
                StageCache& cache = out.stages[i];
                cache.v_pre = v.tokens;
                if (cfg_.align_on) {
                    out.events.push_back("ma:" + std::to_string(i));
                    bool guard = false;
                    out.align_losses.push_back(ma_loss_stage(v.tokens, tf.cls_i.at(i),
                                                             align_.at(i), cfg_.align_mode,
                                                             &guard));
                    out.cosine_guard_hit = out.cosine_guard_hit || guard;
                }
                if (cfg_.mcm_on) {
                    out.events.push_back("mcm:" + std::to_string(i));
                    if (cfg_.text_ablation) {
                        fv[i] = mcm_.at(i).project_visual(v.tokens);
                    } else {
                        Tensor l_in = text_chained ? text_.refine_text(i, text_state, tf.mask)
                                                   : tf.l_i.at(i);
                        FusedPair pair = mcm_.at(i).run(v.tokens, l_in, tf.mask);
                        fv[i] = pair.f_v;
                        text_state = pair.f_l;
                        text_chained = true;
                        cache.attn_vl = pair.attn_vl;
                        cache.has_attn = true;
                    }
                    cache.f_v = fv[i];
                }
            }
            if (i < cfg_.num_stages) {
                Tensor xin = x, yin = y;
                if (fv.count(i)) {
                    Tensor fchw = tokens_to_chw(fv[i], v.h, v.w);
                    xin = concat_channels({x, fchw});
                    yin = concat_channels({y, fchw});
                }
                size_t di = static_cast<size_t>(i - 1);
                x = relu(channel_norm(down_cnn_[di](xin), down_cnn_ln_[di]));
                Tensor yt = down_vit_blocks_[di](chw_to_tokens(yin));
                yt = down_vit_merge_[di](merge_tokens_2x2(yt, v.h, v.w));
                y = tokens_to_chw(yt, v.h / 2, v.w / 2);
                StageFeature vin = v;
                if (fv.count(i)) vin.tokens = fv[i];
                v = vis_.encode_stage(vin);
            }
        }

        Tensor z = relu(channel_norm(bottleneck_(concat_channels({x, y})), bottleneck_ln_));
        for (int i = cfg_.num_stages; i >= 1; --i) {
            std::vector<Tensor> parts{z};
            if (fv.count(i)) parts.push_back(tokens_to_chw(fv[i], cfg_.grid(i), cfg_.grid(i)));
            parts.push_back(skips[static_cast<size_t>(i)]);
            size_t ui = static_cast<size_t>(cfg_.num_stages - i);
            Tensor u = up_conv0_[ui](upsample2x(concat_channels(parts)));
            u = relu(channel_norm(u, up_ln_[ui]));
            z = up_conv1_[ui](u);
        }
        out.prob = sigmoid(upsample2x(head_(z)));
        return out;
    }

  private:
    bool fused(int stage) const { return cfg_.mcm_on && cfg_.is_fusion_stage(stage); }
    static uint64_t derive_init(uint64_t seed) {
        seed ^= 0x6D656C6F64696Full;
        seed *= 0x9E3779B97F4A7C15ull;
        return seed ^ (seed >> 29);
    }

    ModelConfig cfg_;
    ParamStore store_;
    std::mt19937_64 rng_;
    TextEncoder text_;
    VisualEncoder vis_;
    std::map<int, McmStage> mcm_;
    std::map<int, AlignmentHead> align_;

    Conv2dLayer stem_conv0_, stem_conv1_;
    LayerNorm stem_ln0_, stem_ln1_;
    Linear vit_stem_proj_;
    Tensor vit_stem_pos_;
    std::vector<Conv2dLayer> down_cnn_;
    std::vector<LayerNorm> down_cnn_ln_;
    std::vector<TransformerBlock> down_vit_blocks_;
    std::vector<Linear> down_vit_merge_;
    Conv2dLayer bottleneck_;
    LayerNorm bottleneck_ln_;
    std::vector<Conv2dLayer> up_conv0_;
    std::vector<LayerNorm> up_ln_;
    std::vector<Conv2dLayer> up_conv1_;
    Conv2dLayer head_;
};

}  // namespace tmc
