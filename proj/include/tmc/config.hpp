#pragma once

// Flat key=value run configuration. Every key can come from a config file
// ("key = value" lines, '#' comments) and be overridden by a --key value
// command-line flag.

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tmc/dataset.hpp"
#include "tmc/fusion.hpp"
#include "tmc/segnet.hpp"

namespace tmc {

struct RunConfig {
    // dataset generation
    std::string data_dir = "data";
    int cases = 600;
    int slices_per_case = 1;
    int image_size = 32;
    double ambiguous_fraction = 0.5;
    // model dims
    int base_channels = 8;
    int common_dim = 16;
    int text_dim = 32;
    int align_dim = 0;  // 0 means: use common_dim
    int num_stages = 4;
    std::string fusion_stages = "2,3,4";
    int text_blocks = 2;
    int enc_heads = 2;
    int mcm_heads = 4;
    int text_heads = 4;
    // training protocol
    double lr = 3e-4;
    int batch_size = 8;
    int max_epochs = 200;
    int plateau_patience = 10;
    double plateau_factor = 0.1;
    int early_stop_patience = 20;
    double lambda = 0.1;
    double improvement_threshold = 1e-5;
    bool mcm_on = true;
    bool align_on = true;
    std::string align_mode = "paper-literal";
    bool text_ablation = false;
    bool freeze_text = false;
    uint64_t seed = 0;
    // drivers
    std::string seeds = "0,1,2";  // seed-replicated runs (ablate / multi-seed eval)
    std::string out_dir = "runs/run0";
    std::string ckpt;
    std::string split = "test";
    bool dump_masks = false;
    bool dump_probs = false;
    bool dump_attn = false;
    int sample_index = 0;

    void validate() const {
        if (batch_size < 1 || max_epochs < 1 || plateau_patience < 1 || early_stop_patience < 1)
            throw std::invalid_argument("config error: patience/epoch/batch values must be positive");
        if (lambda < 0.0) throw std::invalid_argument("config error: negative lambda");
        if (lr <= 0.0) throw std::invalid_argument("config error: non-positive lr");
        parse_align_mode(align_mode);
    }
};

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("config error: bad boolean '" + v + "' for key " + key);
}

inline std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

inline std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::istringstream is(csv);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        tok = detail::trim(tok);
        if (!tok.empty()) out.push_back(std::stoi(tok));
    }
    return out;
}

inline std::vector<uint64_t> parse_seed_list(const std::string& csv) {
    std::vector<uint64_t> out;
    std::istringstream is(csv);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        tok = detail::trim(tok);
        if (!tok.empty()) out.push_back(std::stoull(tok));
    }
    if (out.empty()) throw std::invalid_argument("config error: empty seed list");
    return out;
}

// Applies one key=value assignment; throws on unknown keys.
inline void apply_config_entry(RunConfig& c, const std::string& key, const std::string& value) {
    auto i = [&] { return std::stoi(value); };
    auto d = [&] { return std::stod(value); };
    auto b = [&] { return detail::parse_bool(value, key); };
    if (key == "data_dir") c.data_dir = value;
    else if (key == "cases") c.cases = i();
    else if (key == "slices_per_case") c.slices_per_case = i();
    else if (key == "image_size") c.image_size = i();
    else if (key == "ambiguous_fraction") c.ambiguous_fraction = d();
    else if (key == "base_channels") c.base_channels = i();
    else if (key == "common_dim") c.common_dim = i();
    else if (key == "text_dim") c.text_dim = i();
    else if (key == "align_dim") c.align_dim = i();
    else if (key == "num_stages") c.num_stages = i();
    else if (key == "fusion_stages") c.fusion_stages = value;
    else if (key == "text_blocks") c.text_blocks = i();
    else if (key == "enc_heads") c.enc_heads = i();
    else if (key == "mcm_heads") c.mcm_heads = i();
    else if (key == "text_heads") c.text_heads = i();
    else if (key == "lr") c.lr = d();
    else if (key == "batch_size") c.batch_size = i();
    else if (key == "max_epochs") c.max_epochs = i();
    else if (key == "plateau_patience") c.plateau_patience = i();
    else if (key == "plateau_factor") c.plateau_factor = d();
    else if (key == "early_stop_patience") c.early_stop_patience = i();
    else if (key == "lambda") c.lambda = d();
    else if (key == "improvement_threshold") c.improvement_threshold = d();
    else if (key == "mcm_on") c.mcm_on = b();
    else if (key == "align_on") c.align_on = b();
    else if (key == "align_mode") c.align_mode = value;
    else if (key == "text_ablation") c.text_ablation = b();
    else if (key == "freeze_text") c.freeze_text = b();
    else if (key == "seed") c.seed = std::stoull(value);
    else if (key == "seeds") c.seeds = value;
    else if (key == "out_dir") c.out_dir = value;
    else if (key == "ckpt") c.ckpt = value;
    else if (key == "split") c.split = value;
    else if (key == "dump_masks") c.dump_masks = b();
    else if (key == "dump_probs") c.dump_probs = b();
    else if (key == "dump_attn") c.dump_attn = b();
    else if (key == "sample_index") c.sample_index = i();
    else throw std::invalid_argument("config error: unknown key '" + key + "'");
}

inline void load_config_file(RunConfig& c, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("I/O error: cannot read config " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config error: " + path + ":" + std::to_string(lineno) +
                                        " is not key=value");
        apply_config_entry(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
}

// Serializes every key (the exact inverse of apply_config_entry).
inline std::string config_to_string(const RunConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << "data_dir=" << c.data_dir << "\ncases=" << c.cases
       << "\nslices_per_case=" << c.slices_per_case << "\nimage_size=" << c.image_size
       << "\nambiguous_fraction=" << c.ambiguous_fraction
       << "\nbase_channels=" << c.base_channels << "\ncommon_dim=" << c.common_dim
       << "\ntext_dim=" << c.text_dim << "\nalign_dim=" << c.align_dim
       << "\nnum_stages=" << c.num_stages << "\nfusion_stages=" << c.fusion_stages
       << "\ntext_blocks=" << c.text_blocks << "\nenc_heads=" << c.enc_heads
       << "\nmcm_heads=" << c.mcm_heads << "\ntext_heads=" << c.text_heads << "\nlr=" << c.lr
       << "\nbatch_size=" << c.batch_size << "\nmax_epochs=" << c.max_epochs
       << "\nplateau_patience=" << c.plateau_patience << "\nplateau_factor=" << c.plateau_factor
       << "\nearly_stop_patience=" << c.early_stop_patience << "\nlambda=" << c.lambda
       << "\nimprovement_threshold=" << c.improvement_threshold
       << "\nmcm_on=" << (c.mcm_on ? "true" : "false")
       << "\nalign_on=" << (c.align_on ? "true" : "false") << "\nalign_mode=" << c.align_mode
       << "\ntext_ablation=" << (c.text_ablation ? "true" : "false")
       << "\nfreeze_text=" << (c.freeze_text ? "true" : "false") << "\nseed=" << c.seed
       << "\nseeds=" << c.seeds << "\nout_dir=" << c.out_dir << "\nckpt=" << c.ckpt
       << "\nsplit=" << c.split << "\ndump_masks=" << (c.dump_masks ? "true" : "false")
       << "\ndump_probs=" << (c.dump_probs ? "true" : "false")
       << "\ndump_attn=" << (c.dump_attn ? "true" : "false")
       << "\nsample_index=" << c.sample_index << "\n";
    return os.str();
}

inline ModelConfig make_model_config(const RunConfig& c, int vocab_size) {
    ModelConfig m;
    m.image_size = c.image_size;
    m.base_channels = c.base_channels;
    m.common_dim = c.common_dim;
    m.text_dim = c.text_dim;
    m.align_dim = c.align_dim > 0 ? c.align_dim : c.common_dim;
    m.num_stages = c.num_stages;
    m.fusion_stages = parse_int_list(c.fusion_stages);
    m.text_blocks = c.text_blocks;
    m.enc_heads = c.enc_heads;
    m.mcm_heads = c.mcm_heads;
    m.text_heads = c.text_heads;
    m.vocab_size = vocab_size;
    m.mcm_on = c.mcm_on;
    m.align_on = c.align_on;
    m.align_mode = parse_align_mode(c.align_mode);
    m.text_ablation = c.text_ablation;
    return m;
}

inline DataConfig make_data_config(const RunConfig& c) {
    DataConfig d;
    d.cases = c.cases;
    d.slices_per_case = c.slices_per_case;
    d.image_size = c.image_size;
    d.ambiguous_fraction = c.ambiguous_fraction;
    d.seed = c.seed;
    return d;
}

}  // namespace tmc
