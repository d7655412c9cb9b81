#include "model_io.hpp"

#include "error.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace repsample {

namespace {

using json = nlohmann::ordered_json;

const char *domain_name(Domain d) { return d == Domain::Line1D ? "line1d" : "disk2d"; }

Domain parse_domain(const json &j) {
    const auto s = j.get<std::string>();
    if (s == "line1d") return Domain::Line1D;
    if (s == "disk2d") return Domain::Disk2D;
    throw IoError("model file: unknown domain '" + s + "'");
}

const char *hidden_name(Activation a) { return a == Activation::SiLU ? "silu" : "relu"; }

const char *output_name(OutputActivation a) {
    switch (a) {
    case OutputActivation::None: return "none";
    case OutputActivation::Exp: return "exp";
    default: return "softplus_last";
    }
}

json finite_array(std::span<const double> v) {
    json a = json::array();
    for (double x : v) {
        if (!std::isfinite(x)) throw NumericError("model file: refusing to write a non-finite parameter");
        a.push_back(x);
    }
    return a;
}

json layers_json(const MlpParams &net) {
    json layers = json::array();
    const MlpSpec &s = net.spec;
    for (std::size_t l = 0; l < s.num_layers(); ++l) {
        const std::size_t in = s.layer_sizes[l], out = s.layer_sizes[l + 1];
        const bool last = l + 1 == s.num_layers();
        json layer;
        layer["in"] = in;
        layer["out"] = out;
        layer["activation"] = last ? output_name(s.output) : hidden_name(s.hidden);
        layer["weights"] = finite_array({net.values.data() + s.weight_offset(l), in * out});
        layer["biases"] = finite_array({net.values.data() + s.bias_offset(l), out});
        layers.push_back(std::move(layer));
    }
    return layers;
}

MlpParams layers_from_json(const json &layers) {
    if (!layers.is_array() || layers.size() < 2) throw IoError("model file: need at least two layers");
    MlpParams net;
    MlpSpec &s = net.spec;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const json &layer = layers[l];
        const std::size_t in = layer.at("in").get<std::size_t>(), out = layer.at("out").get<std::size_t>();
        if (l == 0) s.layer_sizes.push_back(in);
        else if (s.layer_sizes.back() != in) throw IoError("model file: layer sizes do not chain");
        s.layer_sizes.push_back(out);
        const auto act = layer.at("activation").get<std::string>();
        if (l + 1 < layers.size()) {
            Activation a;
            if (act == "silu") a = Activation::SiLU;
            else if (act == "relu") a = Activation::ReLU;
            else throw IoError("model file: unknown hidden activation '" + act + "'");
            if (l > 0 && a != s.hidden) throw IoError("model file: hidden activations differ between layers");
            s.hidden = a;
        } else {
            if (act == "none") s.output = OutputActivation::None;
            else if (act == "exp") s.output = OutputActivation::Exp;
            else if (act == "softplus_last") s.output = OutputActivation::SoftplusLast;
            else throw IoError("model file: unknown output activation '" + act + "'");
        }
    }
    try {
        s.validate();
    } catch (const InvalidArgument &e) {
        throw IoError(std::string("model file: ") + e.what());
    }
    net.values.assign(s.param_count(), 0.0);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const json &w = layers[l].at("weights"), &b = layers[l].at("biases");
        const std::size_t in = s.layer_sizes[l], out = s.layer_sizes[l + 1];
        if (!w.is_array() || w.size() != in * out) throw IoError("model file: weights have the wrong length");
        if (!b.is_array() || b.size() != out) throw IoError("model file: biases have the wrong length");
        double *pw = net.values.data() + s.weight_offset(l);
        double *pb = net.values.data() + s.bias_offset(l);
        for (std::size_t i = 0; i < w.size(); ++i) pw[i] = w[i].get<double>();
        for (std::size_t i = 0; i < b.size(); ++i) pb[i] = b[i].get<double>();
    }
    return net;
}

json training_json(const TrainingInfo &t) {
    json j;
    j["steps"] = t.steps;
    j["seed"] = t.seed;
    j["final_loss"] = std::isfinite(t.final_loss) ? json(t.final_loss) : json(nullptr);
    return j;
}

TrainingInfo training_from_json(const json &j) {
    TrainingInfo t;
    t.steps = j.at("steps").get<std::size_t>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.final_loss = j.at("final_loss").is_null() ? NAN : j.at("final_loss").get<double>();
    return t;
}

json cond_json(const std::optional<int> &freqs) {
    if (!freqs) return nullptr;
    json j;
    j["num_freqs"] = *freqs;
    return j;
}

std::optional<int> cond_from_json(const json &j) {
    if (j.is_null()) return std::nullopt;
    const int f = j.at("num_freqs").get<int>();
    if (f < 0 || f > 16) throw IoError("model file: num_freqs out of range");
    return f;
}

json parse_document(const std::string &text, const char *kind) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error &e) {
        throw IoError(std::string("model file is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw IoError("model file: top level must be an object");
    if (doc.value("format_version", -1) != kModelFormatVersion) throw IoError("model file: unsupported format_version");
    if (doc.value("model", std::string()) != kind)
        throw IoError(std::string("model file: expected a ") + kind + " model");
    return doc;
}

// Wraps library exceptions from malformed files into IoError.
template <class F> auto guarded(F &&f) {
    try {
        return f();
    } catch (const json::exception &e) {
        throw IoError(std::string("model file: ") + e.what());
    }
}

} // namespace

std::string sampler_to_json(const SamplerFile &f) {
    const SamplerModel &m = f.model;
    json j;
    j["format_version"] = kModelFormatVersion;
    j["model"] = "sampler";
    j["sampler_kind"] = m.kind == SamplerKind::Network ? "network" : "defensive_map";
    j["domain"] = domain_name(m.domain);
    j["cond_encoding"] = cond_json(m.cond_freqs);
    j["alpha"] = m.alpha;
    j["skip_identity"] = m.skip_identity;
    json prior;
    prior["kind"] = f.prior.kind == PriorKind::StdNormal ? "std_normal" : "uniform";
    prior["lo"] = f.prior.lo;
    prior["hi"] = f.prior.hi;
    j["prior"] = prior;
    j["layers"] = m.kind == SamplerKind::Network ? layers_json(m.net) : json::array();
    j["training"] = training_json(f.training);
    return j.dump(1) + "\n";
}

SamplerFile sampler_from_json(const std::string &text) {
    return guarded([&] {
        const json doc = parse_document(text, "sampler");
        SamplerFile f;
        SamplerModel &m = f.model;
        const auto kind = doc.at("sampler_kind").get<std::string>();
        m.domain = parse_domain(doc.at("domain"));
        if (kind == "defensive_map") {
            m = SamplerModel::defensive(m.domain);
        } else if (kind == "network") {
            m.kind = SamplerKind::Network;
            m.cond_freqs = cond_from_json(doc.at("cond_encoding"));
            m.alpha = doc.at("alpha").get<double>();
            if (!(m.alpha >= 0.0 && m.alpha < 1.0)) throw IoError("model file: alpha must lie in [0, 1)");
            m.skip_identity = doc.at("skip_identity").get<bool>();
            m.net = layers_from_json(doc.at("layers"));
            const auto &s = m.net.spec;
            const std::size_t out = m.domain == Domain::Line1D ? 1 : 3;
            if (s.input_dim() != m.input_dim() || s.output_dim() != out)
                throw IoError("model file: layer sizes do not match the domain and condition encoding");
            if (s.hidden != Activation::SiLU) throw IoError("model file: sampler hidden layers must be silu");
            const auto want = m.domain == Domain::Line1D ? OutputActivation::None : OutputActivation::SoftplusLast;
            if (s.output != want) throw IoError("model file: wrong output activation for the domain");
        } else {
            throw IoError("model file: unknown sampler_kind '" + kind + "'");
        }
        const json &p = doc.at("prior");
        const auto pk = p.at("kind").get<std::string>();
        if (pk == "std_normal") f.prior.kind = PriorKind::StdNormal;
        else if (pk == "uniform") f.prior.kind = PriorKind::Uniform;
        else throw IoError("model file: unknown prior kind '" + pk + "'");
        f.prior.dim = m.dim();
        f.prior.lo = p.at("lo").get<double>();
        f.prior.hi = p.at("hi").get<double>();
        if (f.prior.kind == PriorKind::Uniform && !(f.prior.hi > f.prior.lo))
            throw IoError("model file: uniform prior needs hi > lo");
        f.training = training_from_json(doc.at("training"));
        return f;
    });
}

std::string pdf_to_json(const PdfFile &f) {
    const PdfModel &m = f.model;
    json j;
    j["format_version"] = kModelFormatVersion;
    j["model"] = "pdf";
    j["domain"] = domain_name(m.domain);
    j["cond_encoding"] = cond_json(m.cond_freqs);
    j["layers"] = layers_json(m.net);
    j["training"] = training_json(f.training);
    return j.dump(1) + "\n";
}

PdfFile pdf_from_json(const std::string &text) {
    return guarded([&] {
        const json doc = parse_document(text, "pdf");
        PdfFile f;
        PdfModel &m = f.model;
        m.domain = parse_domain(doc.at("domain"));
        m.cond_freqs = cond_from_json(doc.at("cond_encoding"));
        m.net = layers_from_json(doc.at("layers"));
        const auto &s = m.net.spec;
        if (s.input_dim() != m.input_dim() || s.output_dim() != 1)
            throw IoError("model file: layer sizes do not match the domain and condition encoding");
        if (s.output != OutputActivation::Exp) throw IoError("model file: pdf output activation must be exp");
        f.training = training_from_json(doc.at("training"));
        return f;
    });
}

void write_text_file(const std::string &path, const std::string &text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << text;
    f.flush();
    if (!f) throw IoError("failed writing '" + path + "'");
}

std::string read_text_file(const std::string &path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void save_sampler(const SamplerFile &f, const std::string &path) { write_text_file(path, sampler_to_json(f)); }
void save_pdf(const PdfFile &f, const std::string &path) { write_text_file(path, pdf_to_json(f)); }
SamplerFile load_sampler(const std::string &path) { return sampler_from_json(read_text_file(path)); }
PdfFile load_pdf(const std::string &path) { return pdf_from_json(read_text_file(path)); }

} // namespace repsample
