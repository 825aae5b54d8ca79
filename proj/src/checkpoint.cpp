#include "cetx/checkpoint.hpp"

#include <map>

#include "binary_io.hpp"
#include "cetx/text.hpp"

namespace cetx {

namespace {

constexpr char kMagic[] = "CETM";
constexpr std::uint32_t kVersion = 1;

std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

std::string encode_header(const ModelConfig& cfg, const CheckpointInfo& info) {
  std::string s;
  auto put = [&s](const std::string& k, const std::string& v) { s += k + "=" + v + "\n"; };
  put("model.channels", std::to_string(cfg.channels_in));
  put("model.length", std::to_string(cfg.length_in));
  put("model.num_classes", std::to_string(cfg.num_classes));
  put("model.hidden_units", std::to_string(cfg.hidden_units));
  put("model.l2_rate", format_double(cfg.l2_rate));
  put("model.seed", std::to_string(cfg.seed));
  std::string blocks;
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    const auto& b = cfg.blocks[i];
    blocks += (i ? "," : "") + std::to_string(b.filters) + ":" + std::to_string(b.kernel) + ":" +
              std::to_string(b.pool) + ":" + format_double(b.dropout_rate);
  }
  put("model.blocks", blocks);
  for (std::size_t i = 0; i < info.class_names.size(); ++i) put("class." + std::to_string(i), info.class_names[i]);
  if (info.channel_stats) {
    put("norm.mean", join_doubles(info.channel_stats->mean));
    put("norm.std", join_doubles(info.channel_stats->stddev));
  }
  return s;
}

struct Header {
  ModelConfig model;
  CheckpointInfo info;
};

Header decode_header(const std::string& text, const std::string& what) {
  std::map<std::string, std::string> kv;
  for (const auto& line : split(text, '\n')) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(what + ": malformed header line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw FormatError(what + ": header is missing " + k);
    return it->second;
  };
  auto get_uint = [&](const std::string& k) {
    auto v = parse_uint(get(k));
    if (!v) throw FormatError(what + ": header field " + k + " is not an integer");
    return *v;
  };
  auto get_doubles = [&](const std::string& k) {
    std::vector<double> out;
    for (const auto& f : split(get(k), ',')) {
      auto v = parse_double(f);
      if (!v) throw FormatError(what + ": header field " + k + " is not numeric");
      out.push_back(*v);
    }
    return out;
  };

  Header h;
  auto& m = h.model;
  m.channels_in = get_uint("model.channels");
  m.length_in = get_uint("model.length");
  m.num_classes = get_uint("model.num_classes");
  m.hidden_units = get_uint("model.hidden_units");
  m.seed = get_uint("model.seed");
  auto l2 = parse_double(get("model.l2_rate"));
  if (!l2) throw FormatError(what + ": header field model.l2_rate is not numeric");
  m.l2_rate = *l2;
  m.blocks.clear();
  for (const auto& b : split(get("model.blocks"), ',')) {
    const auto parts = split(b, ':');
    if (parts.size() != 4) throw FormatError(what + ": malformed block spec '" + b + "'");
    auto f = parse_uint(parts[0]), k = parse_uint(parts[1]), p = parse_uint(parts[2]);
    auto d = parse_double(parts[3]);
    if (!f || !k || !p || !d) throw FormatError(what + ": malformed block spec '" + b + "'");
    m.blocks.push_back({*f, *k, *p, *d});
  }
  for (std::size_t i = 0; kv.count("class." + std::to_string(i)); ++i) {
    h.info.class_names.push_back(kv["class." + std::to_string(i)]);
  }
  if (kv.count("norm.mean")) {
    h.info.channel_stats = ChannelStats{get_doubles("norm.mean"), get_doubles("norm.std")};
  }
  try {
    m.validate();
  } catch (const ConfigError& e) {
    throw FormatError(what + ": invalid model config: " + e.what());
  }
  return h;
}

struct Payload {
  Header header;
  std::vector<std::pair<std::string, Tensor<float>>> params;
};

Payload read_payload(const std::filesystem::path& path) {
  const std::string what = "checkpoint " + path.string();
  const auto bytes = detail::read_file(path, what);
  detail::ByteReader r(bytes, what);
  if (r.bytes(4) != std::string_view(kMagic, 4)) throw FormatError(what + ": bad magic (not a CETM file)");
  const auto version = r.u32();
  if (version != kVersion) throw FormatError(what + ": unsupported version " + std::to_string(version));
  const std::size_t payload_end = detail::verify_checksum(bytes, what);

  Payload out;
  out.header = decode_header(r.str(), what);
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const auto rank = r.u32();
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.u32());
    r.need(shape_size(shape) * 4);
    Tensor<float> t(shape);
    for (auto& v : t.data()) v = r.f32();
    out.params.emplace_back(std::move(name), std::move(t));
  }
  if (r.pos() != payload_end) throw FormatError(what + ": unexpected trailing bytes");
  return out;
}

void assign_params(MultiExitNet& net, const Payload& p, const std::string& what) {
  auto& params = net.parameters();
  if (params.size() != p.params.size()) {
    throw ShapeError(what + ": has " + std::to_string(p.params.size()) + " parameters, network has " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, value] = p.params[i];
    if (params[i].name != name) {
      throw ShapeError(what + ": parameter " + std::to_string(i) + " is '" + name + "', network expects '" +
                       params[i].name + "'");
    }
    if (params[i].value.shape() != value.shape()) {
      throw ShapeError(what + ": parameter " + name + " has shape " + shape_str(value.shape()) +
                       ", network expects " + shape_str(params[i].value.shape()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].value = p.params[i].second;
    params[i].zero_grad();
  }
}

}  // namespace

void save_checkpoint(const MultiExitNet& net, const CheckpointInfo& info, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.bytes(std::string_view(kMagic, 4));
  w.u32(kVersion);
  w.str(encode_header(net.config(), info));
  w.u32(static_cast<std::uint32_t>(net.parameters().size()));
  for (const auto& p : net.parameters()) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (auto v : p.value.data()) w.f32(v);
  }
  w.seal();
  detail::write_file(path, w.buffer(), "checkpoint");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const auto payload = read_payload(path);
  LoadedCheckpoint out{MultiExitNet(payload.header.model), payload.header.info};
  assign_params(out.net, payload, "checkpoint " + path.string());
  return out;
}

CheckpointInfo load_checkpoint_into(MultiExitNet& net, const std::filesystem::path& path) {
  const auto payload = read_payload(path);
  assign_params(net, payload, "checkpoint " + path.string());
  return payload.header.info;
}

}  // namespace cetx
