#include "dcnn/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dcnn/errors.hpp"

namespace dcnn {

namespace {

Tensor reshape_copy(const Tensor& t, Shape shape) {
  if (shape.elements() != t.size())
    throw ShapeError("reshape: element count mismatch " + t.shape().str() +
                     " -> " + shape.str());
  return Tensor::from_data(std::move(shape),
                           std::vector<float>(t.data(), t.data() + t.size()));
}

}  // namespace

std::vector<StageShape> shape_trace(const NetworkConfig& config) {
  if (config.fc_dims.empty())
    throw ConfigError("config: at least one fully-connected layer required");
  if (config.fc_dims.back() != 2)
    throw ConfigError("config: final fully-connected width must be 2, got " +
                      std::to_string(config.fc_dims.back()));
  if (config.stride == 0) throw ConfigError("config: stride must be >= 1");
  for (std::size_t idx : config.pool_after)
    if (idx >= config.convs.size())
      throw ConfigError("config: pool_after index " + std::to_string(idx) +
                        " exceeds conv count " +
                        std::to_string(config.convs.size()));

  std::vector<StageShape> trace;
  std::size_t c = 1, h = config.input_h, w = config.input_w;
  if (h == 0 || w == 0) throw ConfigError("config: input extents must be >= 1");
  trace.push_back({"input", {c, h, w}});

  for (std::size_t i = 0; i < config.convs.size(); ++i) {
    const ConvSpec& spec = config.convs[i];
    if (spec.out_channels == 0 || spec.kernel == 0)
      throw ConfigError("config: conv " + std::to_string(i) +
                        " has non-positive channels or kernel");
    const std::size_t ph = h + 2 * config.padding;
    const std::size_t pw = w + 2 * config.padding;
    if (ph < spec.kernel || pw < spec.kernel)
      throw ConfigError("config: conv " + std::to_string(i) + " kernel " +
                        std::to_string(spec.kernel) +
                        " exceeds its input extent " + std::to_string(h) +
                        "x" + std::to_string(w));
    h = (ph - spec.kernel) / config.stride + 1;
    w = (pw - spec.kernel) / config.stride + 1;
    c = spec.out_channels;
    trace.push_back({"conv" + std::to_string(i), {c, h, w}});
    if (config.pool_after.count(i)) {
      if (h < 2 || w < 2)
        throw ConfigError("config: pool after conv " + std::to_string(i) +
                          " needs spatial extents >= 2, got " +
                          std::to_string(h) + "x" + std::to_string(w));
      h = (h - 2) / 2 + 1;
      w = (w - 2) / 2 + 1;
      trace.push_back({"pool" + std::to_string(i), {c, h, w}});
    }
  }

  std::size_t width = c * h * w;
  trace.push_back({"flatten", {width}});
  for (std::size_t j = 0; j < config.fc_dims.size(); ++j) {
    if (config.fc_dims[j] == 0)
      throw ConfigError("config: fc " + std::to_string(j) +
                        " width must be >= 1");
    width = config.fc_dims[j];
    trace.push_back({"fc" + std::to_string(j), {width}});
  }
  return trace;
}

Network Network::build(const NetworkConfig& config, Rng& rng) {
  shape_trace(config);  // validates

  Network net;
  net.config_ = config;
  std::size_t in_ch = 1;
  for (const ConvSpec& spec : config.convs) {
    const std::size_t fan_in = in_ch * spec.kernel * spec.kernel;
    const float stddev = std::sqrt(2.0f / static_cast<float>(fan_in));
    ConvLayer layer;
    layer.weights = fill_normal(
        rng, Shape{spec.out_channels, in_ch, spec.kernel, spec.kernel}, 0.0f,
        stddev);
    layer.bias = Tensor::zeros(Shape{spec.out_channels});
    layer.stride = config.stride;
    layer.padding = config.padding;
    net.conv_layers_.push_back(std::move(layer));
    in_ch = spec.out_channels;
  }

  const auto trace = shape_trace(config);
  // flatten width precedes the fc stages at the trace tail
  std::size_t in_dim = trace[trace.size() - config.fc_dims.size() - 1].dims[0];
  for (std::size_t width : config.fc_dims) {
    const float stddev = std::sqrt(2.0f / static_cast<float>(in_dim));
    DenseLayer layer;
    layer.weights = fill_normal(rng, Shape{width, in_dim}, 0.0f, stddev);
    layer.bias = Tensor::zeros(Shape{width});
    net.dense_layers_.push_back(std::move(layer));
    in_dim = width;
  }

  for (const Tensor* p : net.parameters())
    net.velocities_.push_back(Tensor::zeros(p->shape()));
  return net;
}

ForwardTrace Network::forward(const Tensor& batch) const {
  if (batch.shape().rank() != 4 || batch.shape()[1] != 1 ||
      batch.shape()[2] != config_.input_h || batch.shape()[3] != config_.input_w)
    throw ShapeError("forward: batch shape " + batch.shape().str() +
                     " does not match configured input [N, 1, " +
                     std::to_string(config_.input_h) + ", " +
                     std::to_string(config_.input_w) + "]");

  ForwardTrace trace;
  trace.owner = this;
  Tensor x = batch;
  for (std::size_t i = 0; i < conv_layers_.size(); ++i) {
    trace.conv_inputs.push_back(x);
    Tensor z = conv_forward(conv_layers_[i], x);
    trace.conv_preacts.push_back(z);
    x = relu_forward(z);
    if (config_.pool_after.count(i)) {
      auto [pooled, cache] = maxpool_forward(x);
      trace.pool_caches.emplace(i, std::move(cache));
      x = std::move(pooled);
    }
  }

  trace.flatten_shape = x.shape();
  const std::size_t n = x.shape()[0];
  x = reshape_copy(x, Shape{n, x.size() / n});

  for (std::size_t j = 0; j < dense_layers_.size(); ++j) {
    trace.dense_inputs.push_back(x);
    Tensor z = dense_forward(dense_layers_[j], x);
    if (j + 1 < dense_layers_.size()) {
      trace.dense_preacts.push_back(z);
      x = relu_forward(z);
    } else {
      x = z;
    }
  }
  trace.logits = x;
  trace.probs = softmax(trace.logits);
  return trace;
}

std::vector<Tensor> Network::backward(const ForwardTrace& trace,
                                      const Tensor& d_logits) const {
  if (trace.owner != this)
    throw StateError("backward: trace does not belong to this network");
  if (d_logits.shape() != trace.logits.shape())
    throw ShapeError("backward: d_logits shape " + d_logits.shape().str() +
                     " does not match logits " + trace.logits.shape().str());

  std::vector<Tensor> conv_w_grads(conv_layers_.size());
  std::vector<Tensor> conv_b_grads(conv_layers_.size());
  std::vector<Tensor> dense_w_grads(dense_layers_.size());
  std::vector<Tensor> dense_b_grads(dense_layers_.size());

  Tensor g = d_logits;
  for (std::size_t j = dense_layers_.size(); j-- > 0;) {
    if (j + 1 < dense_layers_.size())
      g = relu_backward(trace.dense_preacts[j], g);
    LayerGrads lg = dense_backward(dense_layers_[j], trace.dense_inputs[j], g);
    dense_w_grads[j] = std::move(lg.d_weights);
    dense_b_grads[j] = std::move(lg.d_bias);
    g = std::move(lg.d_input);
  }

  g = reshape_copy(g, trace.flatten_shape);
  for (std::size_t i = conv_layers_.size(); i-- > 0;) {
    if (auto it = trace.pool_caches.find(i); it != trace.pool_caches.end())
      g = maxpool_backward(it->second, g);
    g = relu_backward(trace.conv_preacts[i], g);
    LayerGrads lg = conv_backward(conv_layers_[i], trace.conv_inputs[i], g);
    conv_w_grads[i] = std::move(lg.d_weights);
    conv_b_grads[i] = std::move(lg.d_bias);
    g = std::move(lg.d_input);
  }

  std::vector<Tensor> grads;
  for (std::size_t i = 0; i < conv_layers_.size(); ++i) {
    grads.push_back(std::move(conv_w_grads[i]));
    grads.push_back(std::move(conv_b_grads[i]));
  }
  for (std::size_t j = 0; j < dense_layers_.size(); ++j) {
    grads.push_back(std::move(dense_w_grads[j]));
    grads.push_back(std::move(dense_b_grads[j]));
  }
  return grads;
}

std::vector<std::string> Network::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < conv_layers_.size(); ++i) {
    names.push_back("conv" + std::to_string(i) + ".weight");
    names.push_back("conv" + std::to_string(i) + ".bias");
  }
  for (std::size_t j = 0; j < dense_layers_.size(); ++j) {
    names.push_back("fc" + std::to_string(j) + ".weight");
    names.push_back("fc" + std::to_string(j) + ".bias");
  }
  return names;
}

std::vector<Tensor*> Network::parameters() {
  std::vector<Tensor*> params;
  for (auto& layer : conv_layers_) {
    params.push_back(&layer.weights);
    params.push_back(&layer.bias);
  }
  for (auto& layer : dense_layers_) {
    params.push_back(&layer.weights);
    params.push_back(&layer.bias);
  }
  return params;
}

std::vector<const Tensor*> Network::parameters() const {
  std::vector<const Tensor*> params;
  for (const auto& layer : conv_layers_) {
    params.push_back(&layer.weights);
    params.push_back(&layer.bias);
  }
  for (const auto& layer : dense_layers_) {
    params.push_back(&layer.weights);
    params.push_back(&layer.bias);
  }
  return params;
}

std::vector<Tensor*> Network::velocities() {
  std::vector<Tensor*> out;
  for (auto& v : velocities_) out.push_back(&v);
  return out;
}

namespace {

constexpr char kCheckpointMagic[4] = {'D', 'C', 'N', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_u32_le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& in, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in)
    throw FormatError(std::string("checkpoint: truncated while reading ") +
                      what);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::string config_to_text(const NetworkConfig& c) {
  std::ostringstream os;
  os << "input_h=" << c.input_h << "\n";
  os << "input_w=" << c.input_w << "\n";
  os << "stride=" << c.stride << "\n";
  os << "padding=" << c.padding << "\n";
  os << "convs=";
  for (std::size_t i = 0; i < c.convs.size(); ++i) {
    if (i) os << ",";
    os << c.convs[i].out_channels << "x" << c.convs[i].kernel;
  }
  os << "\n";
  os << "pool_after=";
  std::size_t k = 0;
  for (std::size_t idx : c.pool_after) os << (k++ ? "," : "") << idx;
  os << "\n";
  os << "fc=";
  for (std::size_t j = 0; j < c.fc_dims.size(); ++j)
    os << (j ? "," : "") << c.fc_dims[j];
  os << "\n";
  return os.str();
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  parts.push_back(cur);
  return parts;
}

std::size_t parse_size(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw FormatError("checkpoint: bad value \"" + s + "\" for key " + key);
  }
}

NetworkConfig config_from_text(const std::string& text) {
  NetworkConfig c;
  c.convs.clear();
  c.pool_after.clear();
  c.fc_dims.clear();
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError("checkpoint: malformed config line \"" + line + "\"");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "input_h") {
      c.input_h = parse_size(value, key);
    } else if (key == "input_w") {
      c.input_w = parse_size(value, key);
    } else if (key == "stride") {
      c.stride = parse_size(value, key);
    } else if (key == "padding") {
      c.padding = parse_size(value, key);
    } else if (key == "convs") {
      if (!value.empty())
        for (const std::string& item : split_on(value, ',')) {
          const auto x = item.find('x');
          if (x == std::string::npos)
            throw FormatError("checkpoint: bad conv spec \"" + item + "\"");
          c.convs.push_back({parse_size(item.substr(0, x), key),
                             parse_size(item.substr(x + 1), key)});
        }
    } else if (key == "pool_after") {
      if (!value.empty())
        for (const std::string& item : split_on(value, ','))
          c.pool_after.insert(parse_size(item, key));
    } else if (key == "fc") {
      for (const std::string& item : split_on(value, ','))
        c.fc_dims.push_back(parse_size(item, key));
    } else {
      throw FormatError("checkpoint: unknown config key \"" + key + "\"");
    }
  }
  return c;
}

}  // namespace

void Network::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(kCheckpointMagic, 4);
  write_u32_le(out, kCheckpointVersion);
  const std::string cfg = config_to_text(config_);
  write_u32_le(out, static_cast<std::uint32_t>(cfg.size()));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

  const auto names = parameter_names();
  const auto params = parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = names[i];
    const std::uint16_t len = static_cast<std::uint16_t>(name.size());
    const unsigned char lb[2] = {static_cast<unsigned char>(len & 0xff),
                                 static_cast<unsigned char>(len >> 8)};
    out.write(reinterpret_cast<const char*>(lb), 2);
    out.write(name.data(), len);
    save_tnsr(*params[i], out);
  }
  if (!out) throw IoError("checkpoint: write failed: " + path);
}

Network Network::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw FormatError("checkpoint: bad magic, expected \"DCN1\"");
  const std::uint32_t version = read_u32_le(in, "version");
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " +
                      std::to_string(version));
  const std::uint32_t cfg_len = read_u32_le(in, "config length");
  std::string cfg_text(cfg_len, '\0');
  in.read(cfg_text.data(), cfg_len);
  if (!in) throw FormatError("checkpoint: truncated config block");

  const NetworkConfig config = config_from_text(cfg_text);
  shape_trace(config);  // throws ConfigError on an inconsistent block

  // Build the skeleton with zero parameters, then fill from the records.
  Network net;
  net.config_ = config;
  std::size_t in_ch = 1;
  auto stages = shape_trace(config);
  for (const ConvSpec& spec : config.convs) {
    ConvLayer layer;
    layer.weights =
        Tensor::zeros(Shape{spec.out_channels, in_ch, spec.kernel, spec.kernel});
    layer.bias = Tensor::zeros(Shape{spec.out_channels});
    layer.stride = config.stride;
    layer.padding = config.padding;
    net.conv_layers_.push_back(std::move(layer));
    in_ch = spec.out_channels;
  }
  std::size_t in_dim = stages[stages.size() - config.fc_dims.size() - 1].dims[0];
  for (std::size_t width : config.fc_dims) {
    DenseLayer layer;
    layer.weights = Tensor::zeros(Shape{width, in_dim});
    layer.bias = Tensor::zeros(Shape{width});
    net.dense_layers_.push_back(std::move(layer));
    in_dim = width;
  }

  const auto names = net.parameter_names();
  auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    unsigned char lb[2];
    in.read(reinterpret_cast<char*>(lb), 2);
    if (!in)
      throw FormatError("checkpoint: truncated before parameter \"" +
                        names[i] + "\"");
    const std::uint16_t len =
        static_cast<std::uint16_t>(lb[0] | (lb[1] << 8));
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in || name != names[i])
      throw FormatError("checkpoint: expected parameter \"" + names[i] +
                        "\", found \"" + name + "\"");
    Tensor t = load_tnsr(in);
    if (t.shape() != params[i]->shape())
      throw FormatError("checkpoint: parameter \"" + name +
                        "\": expected shape " + params[i]->shape().str() +
                        ", found " + t.shape().str());
    *params[i] = std::move(t);
  }

  for (const Tensor* p : net.parameters())
    net.velocities_.push_back(Tensor::zeros(p->shape()));
  return net;
}

}  // namespace dcnn
