#include "pr/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pr/container.hpp"

namespace fs = std::filesystem;

namespace pr::ckpt {
namespace {

std::string sanitize(const std::string& name) {
    std::string s = name;
    for (char& c : s) {
        if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
    }
    return s;
}

net::UNetConfig unet_config_from(const Manifest& m) {
    net::UNetConfig cfg;
    cfg.base_channels = static_cast<int>(m.get_long("unet_base_channels"));
    cfg.n_res_blocks_per_stage = static_cast<int>(m.get_long("unet_res_blocks"));
    cfg.in_channels = static_cast<int>(m.get_long("unet_in_channels"));
    cfg.resolution = static_cast<int>(m.get_long("unet_resolution"));
    cfg.seed = static_cast<std::uint64_t>(m.get_long("unet_seed"));
    cfg.channel_multipliers.clear();
    std::stringstream ss(m.get("unet_channel_multipliers"));
    std::string tok;
    while (std::getline(ss, tok, ',')) cfg.channel_multipliers.push_back(std::stoi(tok));
    return cfg;
}

void put_unet_config(Manifest& m, const net::UNetConfig& cfg) {
    m.fields.emplace_back("unet_base_channels", std::to_string(cfg.base_channels));
    std::string mults;
    for (std::size_t i = 0; i < cfg.channel_multipliers.size(); ++i) {
        if (i) mults += ",";
        mults += std::to_string(cfg.channel_multipliers[i]);
    }
    m.fields.emplace_back("unet_channel_multipliers", mults);
    m.fields.emplace_back("unet_res_blocks", std::to_string(cfg.n_res_blocks_per_stage));
    m.fields.emplace_back("unet_in_channels", std::to_string(cfg.in_channels));
    m.fields.emplace_back("unet_resolution", std::to_string(cfg.resolution));
    m.fields.emplace_back("unet_seed", std::to_string(cfg.seed));
}

diffusion::SigmaSchedule schedule_from(const Manifest& m) {
    return diffusion::karras_schedule(
        static_cast<int>(m.get_long("schedule_N")), m.get_double("schedule_eps"),
        m.get_double("schedule_T"), m.get_double("schedule_rho"));
}

void put_schedule(Manifest& m, const diffusion::SigmaSchedule& s) {
    m.fields.emplace_back("schedule_N", std::to_string(s.N));
    m.fields.emplace_back("schedule_eps", format_double(s.eps));
    m.fields.emplace_back("schedule_T", format_double(s.T));
    m.fields.emplace_back("schedule_rho", format_double(s.rho));
}

}  // namespace

const std::string& Manifest::get(const std::string& key) const {
    for (const auto& [k, v] : fields) {
        if (k == key) return v;
    }
    throw std::runtime_error("manifest: missing field " + key);
}

bool Manifest::has(const std::string& key) const {
    for (const auto& [k, v] : fields) {
        if (k == key) return true;
    }
    return false;
}

double Manifest::get_double(const std::string& key) const { return std::stod(get(key)); }
long Manifest::get_long(const std::string& key) const { return std::stol(get(key)); }

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_manifest(const Manifest& m, const std::string& dir) {
    std::ofstream f(fs::path(dir) / "manifest.txt", std::ios::trunc);
    if (!f) throw std::runtime_error("write_manifest: cannot open manifest in " + dir);
    for (const auto& [k, v] : m.fields) f << k << "=" << v << "\n";
    for (const auto& t : m.tensors) {
        f << "tensor " << t.name << " " << t.file << " ";
        for (std::size_t i = 0; i < t.shape.size(); ++i) {
            if (i) f << "x";
            f << t.shape[i];
        }
        f << "\n";
    }
}

Manifest read_manifest(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "manifest.txt");
    if (!f) throw std::runtime_error("read_manifest: no manifest.txt in " + dir);
    Manifest m;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        if (line.rfind("tensor ", 0) == 0) {
            std::stringstream ss(line);
            std::string tag, name, file, shape;
            ss >> tag >> name >> file >> shape;
            Manifest::TensorEntry e;
            e.name = name;
            e.file = file;
            std::stringstream sh(shape);
            std::string d;
            while (std::getline(sh, d, 'x')) e.shape.push_back(std::stoul(d));
            m.tensors.push_back(std::move(e));
        } else {
            auto pos = line.find('=');
            if (pos == std::string::npos) {
                throw std::runtime_error("read_manifest: malformed line: " + line);
            }
            m.fields.emplace_back(line.substr(0, pos), line.substr(pos + 1));
        }
    }
    return m;
}

void save_param_store(const nn::ParamStore<float>& ps, Manifest& m,
                      const std::string& dir) {
    fs::create_directories(fs::path(dir) / "tensors");
    for (std::size_t i = 0; i < ps.values.size(); ++i) {
        char idx[8];
        std::snprintf(idx, sizeof(idx), "%03zu", i);
        Manifest::TensorEntry e;
        e.name = ps.names[i];
        e.file = "tensors/" + std::string(idx) + "_" + sanitize(ps.names[i]) + ".prtc";
        e.shape = ps.values[i].shape();
        save_container(ps.values[i], (fs::path(dir) / e.file).string());
        m.tensors.push_back(std::move(e));
    }
}

void load_param_store(nn::ParamStore<float>& ps, const Manifest& m,
                      const std::string& dir) {
    if (m.tensors.size() != ps.values.size()) {
        throw std::runtime_error("checkpoint: tensor count mismatch in " + dir);
    }
    for (std::size_t i = 0; i < ps.values.size(); ++i) {
        const auto& e = m.tensors[i];
        if (e.name != ps.names[i]) {
            throw std::runtime_error("checkpoint: tensor order mismatch at " + e.name);
        }
        Tensor<float> t = load_container_as<float>((fs::path(dir) / e.file).string());
        if (t.shape() != ps.values[i].shape()) {
            throw std::runtime_error("checkpoint: shape mismatch for " + e.name);
        }
        ps.values[i] = std::move(t);
    }
}

std::string checkpoint_kind(const std::string& dir) {
    return read_manifest(dir).get("kind");
}

void save_denoiser(const diffusion::DenoiserModel<float>& m, const std::string& dir) {
    fs::create_directories(dir);
    Manifest mf;
    mf.fields.emplace_back("kind", "denoiser");
    mf.fields.emplace_back("sigma_data", format_double(m.sigma_data));
    put_schedule(mf, m.schedule);
    put_unet_config(mf, m.net.config());
    save_param_store(m.net.params(), mf, dir);
    write_manifest(mf, dir);
}

diffusion::DenoiserModel<float> load_denoiser(const std::string& dir) {
    Manifest mf = read_manifest(dir);
    if (mf.get("kind") != "denoiser") {
        throw std::runtime_error("load_denoiser: checkpoint kind is " + mf.get("kind"));
    }
    diffusion::DenoiserModel<float> m(unet_config_from(mf), schedule_from(mf),
                                      mf.get_double("sigma_data"));
    load_param_store(m.net.params(), mf, dir);
    return m;
}

void save_consistency(const consistency::ConsistencyModel<float>& m,
                      const std::string& dir) {
    fs::create_directories(dir);
    Manifest mf;
    mf.fields.emplace_back("kind", "consistency");
    mf.fields.emplace_back("sigma_data", format_double(m.sigma_data));
    put_schedule(mf, m.schedule);
    put_unet_config(mf, m.net.config());
    save_param_store(m.net.params(), mf, dir);
    write_manifest(mf, dir);
}

consistency::ConsistencyModel<float> load_consistency(const std::string& dir) {
    Manifest mf = read_manifest(dir);
    if (mf.get("kind") != "consistency") {
        throw std::runtime_error("load_consistency: checkpoint kind is " +
                                 mf.get("kind"));
    }
    consistency::ConsistencyModel<float> m(unet_config_from(mf), schedule_from(mf),
                                           mf.get_double("sigma_data"));
    load_param_store(m.net.params(), mf, dir);
    return m;
}

}  // namespace pr::ckpt
