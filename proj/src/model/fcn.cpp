#include "birdfcn/model/fcn.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "birdfcn/error.hpp"
#include "birdfcn/nn/init.hpp"

namespace birdfcn::model {

std::string to_string(Head head) { return head == Head::kDense ? "dense" : "gap"; }

Head head_from_string(const std::string& text) {
    if (text == "gap") return Head::kGap;
    if (text == "dense") return Head::kDense;
    throw ConfigError("unknown head '" + text + "' (expected gap or dense)");
}

void FcnConfig::validate() const {
    if (depth != 3 && depth != 4 && depth != 6) {
        throw ConfigError("depth must be 3, 4 or 6, got " + std::to_string(depth));
    }
    if (widths.size() != depth) {
        throw ConfigError("expected " + std::to_string(depth) + " widths, got " + std::to_string(widths.size()));
    }
    if (n_classes < 2) throw ConfigError("need at least 2 classes");
    if (widths.back() != n_classes) {
        throw ConfigError("final projection width " + std::to_string(widths.back()) + " must equal n_classes " +
                          std::to_string(n_classes));
    }
    for (std::size_t w : widths) {
        if (w == 0) throw ConfigError("layer widths must be positive");
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
    if (!(adaptive_scale > 0.0)) throw ConfigError("adaptive scale must be positive");
    if (slope_recovery < 0.0) throw ConfigError("slope-recovery weight must be nonnegative");
    if (head == Head::kDense) {
        if (fixed_frames == 0 || input_bands == 0) {
            throw ConfigError("dense head needs fixed_frames and input_bands");
        }
        if (fixed_frames < min_frames() || input_bands < min_frames()) {
            throw ConfigError("dense head input " + std::to_string(input_bands) + "x" +
                              std::to_string(fixed_frames) + " does not survive " +
                              std::to_string(pool_layers()) + " poolings");
        }
    }
}

bool FcnConfig::widest_in_grid() const {
    const std::size_t widest = *std::max_element(widths.begin(), widths.end() - 1);
    return widest == 100 || widest == 250 || widest == 400;
}

std::string FcnConfig::describe() const {
    std::ostringstream os;
    os.precision(17);
    os << "depth=" << depth << " widths=";
    for (std::size_t i = 0; i < widths.size(); ++i) os << (i ? "," : "") << widths[i];
    os << " activation=" << nn::to_string(activation) << " base=" << nn::to_string(adaptive_base)
       << " scale=" << adaptive_scale << " n_classes=" << n_classes << " dropout=" << dropout_rate
       << " head=" << to_string(head) << " fixed_frames=" << fixed_frames << " input_bands=" << input_bands
       << " slope_recovery=" << slope_recovery;
    return os.str();
}

FcnConfig FcnConfig::parse(const std::string& description) {
    std::map<std::string, std::string> kv;
    std::istringstream is(description);
    std::string tok;
    while (is >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw FormatError("malformed model config token '" + tok + "'");
        kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    auto need = [&](const char* key) -> const std::string& {
        const auto it = kv.find(key);
        if (it == kv.end()) throw FormatError(std::string("model config lacks '") + key + "'");
        return it->second;
    };
    FcnConfig c;
    try {
        c.depth = std::stoul(need("depth"));
        c.widths.clear();
        std::istringstream ws(need("widths"));
        for (std::string part; std::getline(ws, part, ',');) c.widths.push_back(std::stoul(part));
        c.activation = nn::activation_from_string(need("activation"));
        c.adaptive_base = nn::adaptive_base_from_string(need("base"));
        c.adaptive_scale = std::stod(need("scale"));
        c.n_classes = std::stoul(need("n_classes"));
        c.dropout_rate = std::stod(need("dropout"));
        c.head = head_from_string(need("head"));
        c.fixed_frames = std::stoul(need("fixed_frames"));
        c.input_bands = std::stoul(need("input_bands"));
        c.slope_recovery = std::stod(need("slope_recovery"));
    } catch (const std::logic_error& e) {
        throw FormatError(std::string("bad number in model config: ") + e.what());
    }
    c.validate();
    return c;
}

FcnConfig grid_config(std::size_t depth, std::size_t widest, nn::Activation activation, std::size_t n_classes,
                      double width_divisor) {
    if (!(width_divisor >= 1.0)) throw ConfigError("width divisor must be at least 1");
    if (widest == 0) throw ConfigError("widest layer must be positive");
    const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(widest / width_divisor)));
    const auto q = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(w / 4.0)));
    FcnConfig c;
    c.depth = depth;
    c.activation = activation;
    c.n_classes = n_classes;
    switch (depth) {
        case 3: c.widths = {w, w, n_classes}; break;
        case 4: c.widths = {q, w, q, n_classes}; break;
        case 6: c.widths = {q, q, w, q, q, n_classes}; break;
        default: throw ConfigError("depth must be 3, 4 or 6, got " + std::to_string(depth));
    }
    c.validate();
    return c;
}

FcnConfig canonical_config(std::size_t n_classes) {
    return grid_config(4, 400, nn::Activation::kAdaptive, n_classes);
}

// ---- Network ----

template <typename T>
Network<T>::Network(const FcnConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(seed);
    std::size_t in_ch = 1;
    for (std::size_t l = 0; l < config_.depth; ++l) {
        const bool last = l + 1 == config_.depth;
        const std::size_t k = last ? 1 : 3;
        const std::size_t out_ch = config_.widths[l];
        const std::string tag = "conv" + std::to_string(l);
        nn::Tensor<T> kernel({out_ch, in_ch, k, k});
        nn::glorot_uniform(kernel, in_ch * k * k, out_ch * k * k, rng);
        detail::LayerIndex li;
        li.kernel = params_.size();
        params_.push_back(nn::parameter(std::move(kernel), tag + ".kernel"));
        li.bias = params_.size();
        params_.push_back(nn::parameter(nn::Tensor<T>({out_ch}), tag + ".bias"));
        if (!last && config_.activation == nn::Activation::kAdaptive) {
            li.slope = params_.size();
            // n * a = 1 at initialization.
            params_.push_back(nn::parameter(nn::Tensor<T>({1}, static_cast<T>(1.0 / config_.adaptive_scale)),
                                            "act" + std::to_string(l) + ".slope"));
        }
        index_.push_back(li);
        in_ch = out_ch;
    }
    if (config_.head == Head::kDense) {
        std::size_t h = config_.input_bands, w = config_.fixed_frames;
        for (std::size_t p = 0; p < config_.pool_layers(); ++p) {
            h /= 2;
            w /= 2;
        }
        const std::size_t flat = config_.n_classes * h * w;
        nn::Tensor<T> weights({config_.n_classes, flat});
        nn::glorot_uniform(weights, flat, config_.n_classes, rng);
        dense_weights_ = params_.size();
        params_.push_back(nn::parameter(std::move(weights), "dense.weights"));
        dense_bias_ = params_.size();
        params_.push_back(nn::parameter(nn::Tensor<T>({config_.n_classes}), "dense.bias"));
    }
}

template <typename T>
std::size_t Network<T>::param_count() const {
    std::size_t total = 0;
    for (const auto& p : params_) total += p->value.size();
    return total;
}

template <typename T>
void Network<T>::zero_grad() {
    for (auto& p : params_) p->value.zero_grad();
}

template <typename T>
void Network<T>::check_input(const nn::Tensor<T>& input) const {
    if (input.rank() != 2) throw ShapeError("network input must be (bands, frames), got " + nn::shape_string(input.shape()));
    const std::size_t bands = input.dim(0), frames = input.dim(1);
    if (config_.input_bands != 0 && bands != config_.input_bands) {
        throw ShapeError("model expects " + std::to_string(config_.input_bands) + " feature bands, got " +
                         std::to_string(bands));
    }
    if (frames < config_.min_frames()) {
        throw DegenerateInputError("input has " + std::to_string(frames) + " frames; this model needs min_frames = " +
                                   std::to_string(config_.min_frames()));
    }
    if (bands < config_.min_frames()) {
        throw DegenerateInputError("input has " + std::to_string(bands) + " bands; " +
                                   std::to_string(config_.pool_layers()) + " poolings need at least " +
                                   std::to_string(config_.min_frames()));
    }
    if (config_.head == Head::kDense && frames != config_.fixed_frames) {
        throw ShapeError("dense-head model accepts exactly " + std::to_string(config_.fixed_frames) +
                         " frames, got " + std::to_string(frames));
    }
}

template <typename T>
nn::Var<T> Network<T>::forward(const nn::Tensor<T>& input, bool train, std::mt19937_64* rng) const {
    check_input(input);
    if (train && config_.dropout_rate > 0.0 && rng == nullptr) {
        throw ParameterError("training-mode forward needs a random generator for dropout");
    }
    nn::Var<T> x = nn::constant(nn::Tensor<T>({1, input.dim(0), input.dim(1)}, input.values()));
    for (std::size_t l = 0; l < config_.depth; ++l) {
        const auto& li = index_[l];
        x = nn::ops::conv2d(x, params_[li.kernel], params_[li.bias]);
        if (l + 1 == config_.depth) break;
        switch (config_.activation) {
            case nn::Activation::kRelu: x = nn::ops::relu(x); break;
            case nn::Activation::kTanh: x = nn::ops::tanh(x); break;
            case nn::Activation::kAdaptive:
                x = nn::ops::adaptive(x, params_[*li.slope], static_cast<T>(config_.adaptive_scale),
                                      config_.adaptive_base);
                break;
        }
        x = nn::ops::maxpool2(x);
    }
    if (config_.head == Head::kGap) {
        x = nn::ops::global_avg_pool(x);
    } else {
        x = nn::ops::dense(nn::ops::flatten(x), params_[*dense_weights_], params_[*dense_bias_]);
    }
    std::mt19937_64 unused(0);
    x = nn::ops::dropout(x, config_.dropout_rate, train, rng ? *rng : unused);
    return nn::ops::softmax(x);
}

namespace {

/// 1 / mean_k exp(a_k): grows as the slopes shrink, pushing them up when added to the loss.
template <typename T>
nn::Var<T> slope_recovery_term(const std::vector<nn::Var<T>>& slopes) {
    const double k = static_cast<double>(slopes.size());
    double mean_exp = 0.0;
    for (const auto& s : slopes) mean_exp += std::exp(static_cast<double>(s->value[0]));
    mean_exp /= k;
    const double value = 1.0 / mean_exp;
    return nn::make_result<T>(nn::Tensor<T>({1}, static_cast<T>(value)), slopes,
                              [value, k](nn::Node<T>& node) {
                                  const double g = node.value.grad()[0];
                                  for (auto& parent : node.parents) {
                                      if (!parent->requires_grad) continue;
                                      const double a = parent->value[0];
                                      parent->value.grad()[0] +=
                                          static_cast<T>(-g * value * value * std::exp(a) / k);
                                  }
                              });
}

template <typename T>
nn::Var<T> add_scaled(const nn::Var<T>& a, const nn::Var<T>& b, double weight) {
    return nn::make_result<T>(nn::Tensor<T>({1}, static_cast<T>(a->value[0] + weight * b->value[0])), {a, b},
                              [weight](nn::Node<T>& node) {
                                  const T g = node.value.grad()[0];
                                  if (node.parents[0]->requires_grad) node.parents[0]->value.grad()[0] += g;
                                  if (node.parents[1]->requires_grad) {
                                      node.parents[1]->value.grad()[0] += static_cast<T>(weight * g);
                                  }
                              });
}

}  // namespace

template <typename T>
nn::Var<T> Network<T>::loss(const nn::Tensor<T>& input, std::size_t target, bool train, std::mt19937_64* rng,
                            std::vector<T>* probabilities) const {
    const auto probs = forward(input, train, rng);
    if (probabilities) *probabilities = probs->value.values();
    auto ce = nn::ops::cross_entropy(probs, target);
    if (config_.slope_recovery > 0.0 && config_.activation == nn::Activation::kAdaptive) {
        std::vector<nn::Var<T>> slopes;
        for (const auto& li : index_) {
            if (li.slope) slopes.push_back(params_[*li.slope]);
        }
        if (!slopes.empty()) ce = add_scaled(ce, slope_recovery_term(slopes), config_.slope_recovery);
    }
    return ce;
}

template class Network<float>;
template class Network<double>;

// ---- model-level helpers ----

FcnModel build_model(const FcnConfig& config, std::vector<std::string> label_set, std::uint64_t seed) {
    if (label_set.size() != config.n_classes) {
        throw ConfigError("label set has " + std::to_string(label_set.size()) + " names but the model has " +
                          std::to_string(config.n_classes) + " classes");
    }
    FcnModel m;
    m.net = Network<float>(config, seed);
    m.label_set = std::move(label_set);
    return m;
}

FcnModel build_cnn_dense(FcnConfig config, std::size_t fixed_frames, std::size_t input_bands,
                         std::vector<std::string> label_set, std::uint64_t seed) {
    config.head = Head::kDense;
    config.fixed_frames = fixed_frames;
    config.input_bands = input_bands;
    return build_model(config, std::move(label_set), seed);
}

nn::Tensor<float> model_input(const FcnModel& model, const dsp::FeatureMatrix& features) {
    if (features.bands == 0 || features.frames == 0) {
        throw DegenerateInputError("empty feature matrix");
    }
    dsp::FeatureMatrix fm = features;
    if (model.standardizer) model.standardizer->apply(fm);
    std::vector<float> v(fm.values.begin(), fm.values.end());
    return nn::Tensor<float>({fm.bands, fm.frames}, std::move(v));
}

std::vector<double> predict(const FcnModel& model, const dsp::FeatureMatrix& features) {
    const auto out = model.net.forward(model_input(model, features), false, nullptr);
    return {out->value.values().begin(), out->value.values().end()};
}

// ---- weights container ----

namespace {

constexpr std::array<char, 4> kMagic{'F', 'C', 'N', 'W'};
constexpr std::uint8_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(std::string data) : data_(std::move(data)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }
    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw CorruptionError("weights file is truncated");
    }
    std::string data_;
    std::size_t pos_ = 0;
};

std::string join_doubles(const std::vector<double>& v) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

std::vector<double> split_doubles(const std::string& s) {
    std::vector<double> out;
    std::istringstream is(s);
    for (std::string part; std::getline(is, part, ',');) out.push_back(std::stod(part));
    return out;
}

}  // namespace

void save_weights(const FcnModel& model, const std::filesystem::path& path) {
    std::ostringstream header;
    header << "config " << model.config().describe() << '\n';
    if (model.features) header << "features " << model.features->describe() << '\n';
    if (model.standardizer) {
        header << "standardizer mean=" << join_doubles(model.standardizer->mean)
               << " std=" << join_doubles(model.standardizer->stddev) << '\n';
    }
    for (const auto& p : model.net.parameters()) header << "param " << p->name << ' ' << nn::shape_string(p->value.shape()) << '\n';
    const std::string text = header.str();

    std::string buf(kMagic.begin(), kMagic.end());
    buf.push_back(static_cast<char>(kVersion));
    put_u32(buf, static_cast<std::uint32_t>(text.size()));
    buf += text;
    put_u32(buf, static_cast<std::uint32_t>(model.label_set.size()));
    for (const auto& name : model.label_set) {
        put_u32(buf, static_cast<std::uint32_t>(name.size()));
        buf += name;
    }
    static_assert(std::endian::native == std::endian::little, "weights files assume a little-endian host");
    for (const auto& p : model.net.parameters()) {
        const auto values = p->value.data();
        buf.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(float));
    }

    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open " + tmp + " for writing");
        os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!os) throw IoError("failed writing " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp + " into place: " + ec.message());
}

FcnModel load_weights(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open weights file " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    std::string data = ss.str();
    if (data.size() < 5 || std::memcmp(data.data(), kMagic.data(), 4) != 0) {
        throw FormatError(path.string() + " is not an FCNW weights file");
    }
    if (static_cast<std::uint8_t>(data[4]) != kVersion) {
        throw FormatError(path.string() + " has unsupported weights version " +
                          std::to_string(static_cast<unsigned char>(data[4])));
    }
    Reader r(data.substr(5));
    const std::string text = r.bytes(r.u32());

    std::optional<FcnConfig> config;
    std::optional<dsp::FeatureConfig> features;
    std::optional<dsp::Standardizer> standardizer;
    std::vector<std::pair<std::string, std::string>> declared;
    try {
        std::istringstream lines(text);
        for (std::string line; std::getline(lines, line);) {
            const auto sp = line.find(' ');
            const std::string kind = line.substr(0, sp);
            const std::string rest = sp == std::string::npos ? "" : line.substr(sp + 1);
            if (kind == "config") {
                config = FcnConfig::parse(rest);
            } else if (kind == "features") {
                features = dsp::FeatureConfig::parse(rest);
            } else if (kind == "standardizer") {
                const auto m = rest.find("mean="), s = rest.find(" std=");
                if (m != 0 || s == std::string::npos) throw CorruptionError("malformed standardizer line");
                dsp::Standardizer st;
                st.mean = split_doubles(rest.substr(5, s - 5));
                st.stddev = split_doubles(rest.substr(s + 5));
                if (st.mean.size() != st.stddev.size()) throw CorruptionError("standardizer mean/std lengths differ");
                standardizer = std::move(st);
            } else if (kind == "param") {
                const auto sp2 = rest.find(' ');
                if (sp2 == std::string::npos) throw CorruptionError("malformed param line '" + line + "'");
                declared.emplace_back(rest.substr(0, sp2), rest.substr(sp2 + 1));
            } else if (!line.empty()) {
                throw CorruptionError("unknown header line '" + line + "'");
            }
        }
    } catch (const FormatError& e) {
        throw CorruptionError(std::string("weights header: ") + e.what());
    } catch (const ConfigError& e) {
        throw CorruptionError(std::string("weights header: ") + e.what());
    } catch (const std::logic_error& e) {
        throw CorruptionError(std::string("weights header: ") + e.what());
    }
    if (!config) throw CorruptionError("weights header has no config line");

    std::vector<std::string> labels(r.u32());
    for (auto& name : labels) name = r.bytes(r.u32());

    FcnModel model;
    try {
        model = build_model(*config, std::move(labels), 0);
    } catch (const ConfigError& e) {
        throw CorruptionError(std::string("weights file inconsistent: ") + e.what());
    }
    const auto& params = model.net.parameters();
    if (declared.size() != params.size()) {
        throw CorruptionError("header declares " + std::to_string(declared.size()) + " tensors, config implies " +
                              std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (declared[i].first != params[i]->name || declared[i].second != nn::shape_string(params[i]->value.shape())) {
            throw CorruptionError("tensor " + declared[i].first + " " + declared[i].second + " does not match " +
                                  params[i]->name + " " + nn::shape_string(params[i]->value.shape()));
        }
        auto values = params[i]->value.data();
        const std::string raw = r.bytes(values.size() * sizeof(float));
        std::memcpy(values.data(), raw.data(), raw.size());
    }
    if (!r.done()) throw CorruptionError("trailing bytes after the last parameter tensor");
    if (standardizer && config->input_bands != 0 && standardizer->mean.size() != config->input_bands) {
        throw CorruptionError("standardizer band count disagrees with the model");
    }
    model.features = std::move(features);
    model.standardizer = std::move(standardizer);
    return model;
}

}  // namespace birdfcn::model
