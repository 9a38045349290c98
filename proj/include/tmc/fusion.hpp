#pragma once

// Bidirectional multi-stage cross-attention fusion (MCM) and the stage-wise
// alignment loss with learnable temperature.

#include <optional>
#include <string>
#include <vector>

#include "tmc/nn.hpp"
#include "tmc/tensor.hpp"

namespace tmc {

struct FusedPair {
    Tensor f_v;      // [N_i x d] fused visual tokens
    Tensor f_l;      // [T x d] fused language tokens
    Tensor attn_vl;  // [N_i x T] visual->text attention, mean over heads
};

// One fusion stage: the visual tokens are first updated under text guidance,
// then the language tokens are refined from the updated visual features.
struct McmStage {
    Linear v_proj;  // stage projection C_i -> d
    MhcaParams vis_from_text;
    LayerNorm ln_v;
    Ffn ffn_v;
    MhcaParams text_from_vis;
    LayerNorm ln_t;
    Ffn ffn_t;

    McmStage() = default;
    McmStage(ParamInit& init, const std::string& prefix, int c_in, int d, int heads)
        : v_proj(init, prefix + ".vproj", c_in, d),
          vis_from_text(init, prefix + ".v_attn", d, heads),
          ln_v(init, prefix + ".v_ln", d),
          ffn_v(init, prefix + ".v_ffn", d),
          text_from_vis(init, prefix + ".t_attn", d, heads),
          ln_t(init, prefix + ".t_ln", d),
          ffn_t(init, prefix + ".t_ffn", d) {}

    // Stage projection of the raw visual tokens alone; this is what replaces
    // F_V when the text path is severed.
    Tensor project_visual(const Tensor& v_raw) const { return v_proj(v_raw); }

    FusedPair run(const Tensor& v_raw, const Tensor& l_in, const KeyMask& text_mask) const {
        FusedPair out;
        Tensor v = v_proj(v_raw);
        Tensor av = mhca(v, l_in, l_in, vis_from_text, text_mask, &out.attn_vl);
        Tensor hv = add(v, av);
        out.f_v = add(hv, ffn_v(ln_v(hv)));
        Tensor at = mhca(l_in, out.f_v, out.f_v, text_from_vis);
        Tensor ht = add(l_in, at);
        out.f_l = add(ht, ffn_t(ln_t(ht)));
        return out;
    }
};

enum class AlignMode {
    kPaperLiteral,  // -log(sigma(s)) - log(1 - sigma(s)), minimized at s = 0
    kAttract,       // -log(sigma(s)) only
};

inline AlignMode parse_align_mode(const std::string& s) {
    if (s == "paper-literal") return AlignMode::kPaperLiteral;
    if (s == "attract") return AlignMode::kAttract;
    throw std::invalid_argument("config error: unknown align_mode '" + s + "'");
}

// Per-stage projections into the shared alignment space plus the learnable
// temperature tau_i = exp(log_tau_i), so tau stays positive under updates.
struct AlignmentHead {
    Linear p_v;  // C_i -> D
    Linear p_l;  // d -> D
    Tensor log_tau;

    AlignmentHead() = default;
    AlignmentHead(ParamInit& init, const std::string& prefix, int c_in, int d, int align_dim)
        : p_v(init, prefix + ".pv", c_in, align_dim),
          p_l(init, prefix + ".pl", d, align_dim),
          log_tau(init.zeros(prefix + ".log_tau", {1, 1})) {}

    double tau() const { return std::exp(log_tau.values()[0]); }
};

// Logistic contrastive alignment of the pooled stage-visual embedding with
// the stage CLS embedding. Consumes the pre-fusion V_i.
inline Tensor ma_loss_stage(const Tensor& v_raw, const Tensor& cls, const AlignmentHead& head,
                            AlignMode mode = AlignMode::kPaperLiteral, bool* guarded = nullptr) {
    Tensor z_v = global_avg_pool(head.p_v(v_raw));
    Tensor z_l = head.p_l(cls);
    Tensor cos = cosine_sim(z_v, z_l, kCosineEps, guarded);
    Tensor s = mul(cos, exp(scale(head.log_tau, -1.0)));
    Tensor sg = clamp(sigmoid(s), kProbEps, 1.0 - kProbEps);
    if (mode == AlignMode::kAttract) return scale(log(sg), -1.0);
    Tensor one_minus = add_scalar(scale(sg, -1.0), 1.0);
    return scale(add(log(sg), log(one_minus)), -1.0);
}

// Arithmetic mean over the selected stages.
inline Tensor ma_loss_total(const std::vector<Tensor>& stage_losses) {
    if (stage_losses.empty())
        throw std::invalid_argument("config error: alignment enabled with no selected stages");
    Tensor acc = stage_losses[0];
    for (size_t i = 1; i < stage_losses.size(); ++i) acc = add(acc, stage_losses[i]);
    return scale(acc, 1.0 / static_cast<double>(stage_losses.size()));
}

}  // namespace tmc
