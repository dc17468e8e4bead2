#include "pr/dataset.hpp"

#include <sstream>
#include <stdexcept>

#include "pr/container.hpp"
#include "pr/image_dir.hpp"
#include "pr/toy.hpp"

namespace pr::data {
namespace {

ImageBatch load_toy_spec(const std::string& args) {
    ToySpec spec;
    std::vector<int> select;
    std::stringstream ss(args);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        auto pos = tok.find('=');
        if (pos == std::string::npos) {
            throw std::invalid_argument("toy dataset spec: expected key=value, got \"" +
                                        tok + "\"");
        }
        std::string k = tok.substr(0, pos), v = tok.substr(pos + 1);
        if (k == "resolution") spec.resolution = std::stoi(v);
        else if (k == "classes") spec.n_semantic_classes = std::stoi(v);
        else if (k == "textures") spec.n_background_textures = std::stoi(v);
        else if (k == "per_class") spec.samples_per_class = std::stoi(v);
        else if (k == "seed") spec.seed = std::stoull(v);
        else if (k == "select") {
            std::stringstream cs(v);
            std::string c;
            while (std::getline(cs, c, '+')) select.push_back(std::stoi(c));
        } else {
            throw std::invalid_argument("toy dataset spec: unknown key \"" + k + "\"");
        }
    }
    ToyDataset d = gen_toy_dataset(spec);
    if (!select.empty()) d = filter_classes(d, select);
    return d.images;
}

}  // namespace

ImageBatch load_dataset(const std::string& spec, int resolution, int channels) {
    if (spec.empty()) throw std::invalid_argument("load_dataset: empty dataset spec");
    ImageBatch b;
    if (spec.rfind("toy:", 0) == 0) {
        b = load_toy_spec(spec.substr(4));
    } else if (spec.size() > 5 && spec.substr(spec.size() - 5) == ".prtc") {
        AnyTensor any = load_container(spec);
        if (auto* f = std::get_if<Tensor<float>>(&any)) {
            b = make_batch(std::move(*f));
        } else if (auto* u = std::get_if<Tensor<std::uint8_t>>(&any)) {
            b = normalize_pixels(*u);
        } else {
            throw std::runtime_error("load_dataset: container must be float32 or uint8");
        }
    } else {
        return load_image_dir(spec, resolution, channels);
    }
    if (b.resolution != resolution || b.channel_count != channels) {
        throw std::runtime_error("load_dataset: " + spec + " yields " +
                                 std::to_string(b.channel_count) + "x" +
                                 std::to_string(b.resolution) + "x" +
                                 std::to_string(b.resolution) + ", expected " +
                                 std::to_string(channels) + "x" +
                                 std::to_string(resolution) + "x" +
                                 std::to_string(resolution));
    }
    return b;
}

}  // namespace pr::data
