#include "elp/nn/parameters.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "elp/error.hpp"

namespace elp::nn {

Tensor ParameterStore::create(const std::string& name, Shape shape, std::vector<double> init) {
    for (const auto& p : params_) {
        if (p.name == name) throw Error(ErrorKind::InvalidParam, "duplicate parameter name " + name);
    }
    Tensor t = Tensor::from(shape, std::move(init), /*requires_grad=*/true);
    params_.push_back({name, t});
    return t;
}

Tensor ParameterStore::uniform(const std::string& name, Shape shape, double bound, Rng& rng) {
    std::vector<double> init(shape.size());
    for (double& v : init) v = (2.0 * rng.uniform() - 1.0) * bound;
    return create(name, shape, std::move(init));
}

Tensor ParameterStore::constant(const std::string& name, Shape shape, double value) {
    return create(name, shape, std::vector<double>(shape.size(), value));
}

const Tensor& ParameterStore::get(const std::string& name) const {
    for (const auto& p : params_) {
        if (p.name == name) return p.tensor;
    }
    throw Error(ErrorKind::InvalidParam, "unknown parameter " + name);
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.size();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

std::string checkpoint_to_string(const ParameterStore& store) {
    std::string out = "elp-checkpoint 1\n" + std::to_string(store.parameters().size()) + "\n";
    char buf[32];
    for (const auto& p : store.parameters()) {
        out += p.name + " " + std::to_string(p.tensor.rows()) + " " + std::to_string(p.tensor.cols()) + "\n";
        bool first = true;
        for (double v : p.tensor.values()) {
            const auto res = std::to_chars(buf, buf + sizeof buf, v);
            if (!first) out += ' ';
            out.append(buf, res.ptr);
            first = false;
        }
        out += '\n';
    }
    return out;
}

void checkpoint_from_string(ParameterStore& store, const std::string& text) {
    std::istringstream in(text);
    std::string magic;
    int version = 0;
    std::size_t count = 0;
    if (!(in >> magic >> version >> count) || magic != "elp-checkpoint") {
        throw Error(ErrorKind::ParseError, "checkpoint: missing header");
    }
    if (version != 1) throw Error(ErrorKind::ParseError, "checkpoint: unsupported version " + std::to_string(version));
    for (std::size_t i = 0; i < count; ++i) {
        std::string name;
        std::size_t rows = 0;
        std::size_t cols = 0;
        if (!(in >> name >> rows >> cols)) throw Error(ErrorKind::ParseError, "checkpoint: truncated entry header");
        Tensor t = store.get(name);
        if (t.shape() != Shape{rows, cols}) {
            throw Error(ErrorKind::ShapeError, "checkpoint: shape mismatch for " + name);
        }
        auto dst = t.mutable_values();
        for (double& v : dst) {
            std::string tok;
            if (!(in >> tok)) throw Error(ErrorKind::ParseError, "checkpoint: truncated values for " + name);
            v = std::strtod(tok.c_str(), nullptr);
        }
    }
}

void save_checkpoint(const ParameterStore& store, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
    out << checkpoint_to_string(store);
}

void load_checkpoint(ParameterStore& store, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    checkpoint_from_string(store, ss.str());
}

}  // namespace elp::nn
