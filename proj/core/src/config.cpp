#include "pr/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pr/hash.hpp"

namespace pr::config {

const std::vector<KeySpec>& schema() {
    static const std::vector<KeySpec> s = {
        {"seed", "0", "global RNG seed (PR_SEED env var wins)"},
        {"out_dir", "", "output directory for the command"},
        {"threads", "1", "worker threads for batch scoring"},

        {"data", "", "dataset spec: toy:..., *.prtc, or an image directory"},
        {"data_resolution", "24", "square image resolution"},
        {"data_channels", "3", "image channels (1 or 3)"},

        {"checkpoint", "", "checkpoint dir (output of training, input of scoring)"},
        {"teacher_checkpoint", "", "denoiser checkpoint for distillation"},
        {"denoiser_checkpoint", "", "denoiser checkpoint for pi-based scores"},
        {"cm_checkpoint", "", "consistency checkpoint for full-step scores"},
        {"extractor_checkpoint", "", "optional external perceptual-extractor weights"},
        {"extractor_seed", "77", "seed of the frozen random extractor"},

        {"unet_base_channels", "32", "UNet base width"},
        {"unet_channel_multipliers", "1,2,2", "per-stage width multipliers"},
        {"unet_res_blocks", "1", "residual blocks per stage"},

        {"schedule_N", "17", "number of noise-level intervals"},
        {"schedule_eps", "0.002", "smallest noise level t_0"},
        {"schedule_T", "80", "largest noise level t_N"},
        {"schedule_rho", "7", "grid warp exponent"},
        {"sigma_data", "0.5", "data standard deviation for preconditioning"},

        {"steps", "2000", "training steps"},
        {"batch_size", "16", "training minibatch size"},
        {"lr", "0.0001", "Adam learning rate"},
        {"dsm_weighting", "edm", "score-matching sigma sampling: edm | uniform"},
        {"ema_mu", "0.99", "EMA decay of the consistency target"},
        {"train_distance", "l2", "consistency training metric: l2 | perceptual"},
        {"log_every", "100", "steps between loss log lines (0 = silent)"},

        {"method", "pr-ensemble", "score method: pr | pr-ensemble | proj | msma"},
        {"metric", "perceptual", "distance metric: l2 | ssim | perceptual | unet"},
        {"alpha", "9", "projection level index"},
        {"beta", "8", "scoring level index"},
        {"n_alpha", "40", "outer Monte-Carlo width"},
        {"n_beta", "10", "inner Monte-Carlo width"},
        {"ensemble", "cifar", "candidate set: cifar | svhn | a:b,a:b,... | around:A,B,R"},
        {"proj_mode", "full", "projection score mode: single | full"},
        {"proj_backend", "cm", "full-step backend: cm | ode"},
        {"timestep_index", "8", "schedule index for proj scores"},
        {"n_draws", "100", "Monte-Carlo draws for proj/msma scores"},
        {"msma_indices", "all", "schedule indices for the msma vector, or 'all'"},
        {"msma_fit_data", "", "dataset spec fitting the msma aggregation"},
        {"unet_gamma", "3", "schedule index of the feature-distance noise level"},
        {"unet_n_z", "1", "Monte-Carlo draws inside the unet distance"},
        {"score_out", "", "output score file path"},

        {"id_scores", "", "precomputed ID score file (metric-only evaluate)"},
        {"ood_scores", "", "precomputed OOD score file (metric-only evaluate)"},
        {"id_data", "", "ID dataset spec"},
        {"ood_data", "", "comma list of OOD dataset specs"},
        {"ood_names", "", "comma list of task labels (defaults to the specs)"},
        {"methods", "pr-ensemble", "comma list of methods for evaluate"},
        {"seeds", "", "comma list of seeds (defaults to 'seed')"},
        {"tpr", "0.95", "true-positive rate for the TNR metric"},

        {"sweep_variants", "pi-l2,pi-perceptual,full-l2,full-perceptual",
         "comma list of sweep variants"},
        {"sweep_n", "4", "Monte-Carlo draws per sweep cell"},
        {"plot", "false", "also emit an SVG plot of sweep curves"},

        {"grid", "preset:cifar", "select-hparams grid: a:b,... | around:A,B,R | preset:name"},
    };
    return s;
}

namespace {

const KeySpec* find_key(const std::string& key) {
    for (const auto& k : schema()) {
        if (key == k.name) return &k;
    }
    return nullptr;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

}  // namespace

RunConfig RunConfig::defaults() {
    RunConfig c;
    for (const auto& k : schema()) c.kv_[k.name] = k.def;
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    RunConfig c = defaults();
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        try {
            c.apply_line(t);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return c;
}

void RunConfig::apply_line(const std::string& line) {
    auto pos = line.find('=');
    if (pos == std::string::npos) {
        throw std::invalid_argument("expected key = value, got \"" + line + "\"");
    }
    set(trim(line.substr(0, pos)), trim(line.substr(pos + 1)));
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (!find_key(key)) {
        throw std::invalid_argument("unknown config key \"" + key + "\"");
    }
    kv_[key] = value;
}

void RunConfig::apply_env_overrides() {
    if (const char* s = std::getenv("PR_SEED")) {
        kv_["seed"] = s;
    }
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) {
        throw std::invalid_argument("unknown config key \"" + key + "\"");
    }
    return it->second;
}

long RunConfig::get_int(const std::string& key) const {
    const std::string& v = get(key);
    try {
        std::size_t used = 0;
        long r = std::stol(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: " + key + " must be an integer, got \"" + v +
                                    "\"");
    }
}

double RunConfig::get_double(const std::string& key) const {
    const std::string& v = get(key);
    try {
        std::size_t used = 0;
        double r = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: " + key + " must be a number, got \"" + v +
                                    "\"");
    }
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("config: " + key + " must be a boolean, got \"" + v + "\"");
}

std::uint64_t RunConfig::get_seed() const {
    return static_cast<std::uint64_t>(std::stoull(get("seed")));
}

std::vector<int> RunConfig::get_int_list(const std::string& key) const {
    std::vector<int> out;
    std::stringstream ss(get(key));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!trim(tok).empty()) out.push_back(std::stoi(trim(tok)));
    }
    return out;
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(get(key));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        std::string t = trim(tok);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

std::string RunConfig::resolved_text() const {
    std::string out;
    for (const auto& k : schema()) {
        out += k.name;
        out += "=";
        out += kv_.at(k.name);
        out += "\n";
    }
    return out;
}

std::string RunConfig::hash() const { return hash_hex(fnv1a(resolved_text())); }

}  // namespace pr::config
