#include "cat/model_io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace cat {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

int parse_int(const std::string& v, int line) {
  int out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config line " + std::to_string(line) + ": '" + v + "' is not an integer");
  }
  return out;
}

double parse_real(const std::string& v, int line) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw ConfigError("config line " + std::to_string(line) + ": '" + v + "' is not a number");
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& v, int line) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int(trim(item), line));
  if (out.empty()) throw ConfigError("config line " + std::to_string(line) + ": empty list");
  return out;
}

bool parse_bool(const std::string& v, int line) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw ConfigError("config line " + std::to_string(line) + ": '" + v + "' is not a boolean");
}

}  // namespace

ModelConfig parse_config(std::string_view text) {
  ModelConfig c;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string body = trim(raw);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (!seen.insert(key).second) {
      throw ConfigError("config line " + std::to_string(line) + ": repeated key '" + key + "'");
    }
    if (key == "groups") c.groups = parse_int(value, line);
    else if (key == "blocks") c.blocks = parse_int(value, line);
    else if (key == "channels") c.channels = parse_int(value, line);
    else if (key == "in_channels") c.in_channels = parse_int(value, line);
    else if (key == "out_channels") c.out_channels = parse_int(value, line);
    else if (key == "heads") c.heads = parse_int(value, line);
    else if (key == "mlp_ratio") c.mlp_ratio = parse_real(value, line);
    else if (key == "scale") c.scale = parse_int(value, line);
    else if (key == "head_width") c.head_width = parse_int(value, line);
    else if (key == "bias_hidden") c.bias_hidden = parse_int(value, line);
    else if (key == "lcm") c.lcm = parse_bool(value, line);
    else if (key == "axial_sl") c.axial_sl = parse_int_list(value, line);
    else if (key == "window") {
      if (value == "regular") c.window = WindowKind::Regular;
      else if (value == "axial") c.window = WindowKind::Axial;
      else throw ConfigError("config line " + std::to_string(line) + ": window must be regular or axial");
    } else if (key == "window_size") {
      const auto v = parse_int_list(value, line);
      if (v.size() != 2) {
        throw ConfigError("config line " + std::to_string(line) + ": window_size needs 'sh, sw'");
      }
      c.sh = v[0];
      c.sw = v[1];
    } else if (key == "task") {
      if (value == "sr") c.task = Task::SR;
      else if (value == "car") c.task = Task::CAR;
      else throw ConfigError("config line " + std::to_string(line) + ": task must be sr or car");
    } else {
      throw ConfigError("config line " + std::to_string(line) + ": unknown key '" + key + "'");
    }
  }
  if (c.task == Task::CAR && !seen.count("scale")) c.scale = 1;
  c.validate();
  return c;
}

ModelConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const ModelConfig& c) {
  std::ostringstream os;
  os << "groups = " << c.groups << '\n'
     << "blocks = " << c.blocks << '\n'
     << "channels = " << c.channels << '\n'
     << "in_channels = " << c.in_channels << '\n'
     << "out_channels = " << c.out_channels << '\n'
     << "heads = " << c.heads << '\n'
     << "mlp_ratio = " << c.mlp_ratio << '\n';
  if (c.window == WindowKind::Regular) {
    os << "window = regular\nwindow_size = " << c.sh << ", " << c.sw << '\n';
  } else {
    os << "window = axial\naxial_sl = ";
    for (std::size_t i = 0; i < c.axial_sl.size(); ++i) os << (i ? ", " : "") << c.axial_sl[i];
    os << '\n';
  }
  os << "task = " << (c.task == Task::SR ? "sr" : "car") << '\n'
     << "scale = " << c.scale << '\n'
     << "head_width = " << c.head_width << '\n'
     << "lcm = " << (c.lcm ? "true" : "false") << '\n'
     << "bias_hidden = " << c.bias_hidden << '\n';
  return os.str();
}

// ---------------------------------------------------------------- weights

namespace {

static_assert(std::endian::native == std::endian::little, "weight I/O assumes a little-endian host");

constexpr char kMagic[4] = {'C', 'A', 'T', 'W'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <typename U>
  U get(const char* what) {
    U v;
    need(sizeof v, what);
    std::memcpy(&v, bytes_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }

  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("weights truncated while reading ") + what + " at offset " +
                        std::to_string(pos_));
    }
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_weights(const ParamStore& store, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot write weights to " + path.string());
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, entry] : store) {
    if (name.size() > 0xffff) throw FormatError("parameter name too long: " + name.substr(0, 64));
    put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(os, 0);
    const Shape& s = entry.value.shape();
    put<std::uint8_t>(os, static_cast<std::uint8_t>(s.size()));
    for (auto d : s) put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    const auto data = entry.value.data();
    os.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size() * sizeof(float)));
  }
  if (!os) throw FormatError("write failed for " + path.string());
}

ParamStore load_weights(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open weights " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  Reader r(ss.str());

  if (r.take(4, "magic") != std::string(kMagic, 4)) throw FormatError("bad magic in " + path.string());
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion) {
    throw FormatError("unsupported weights version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>("entry count");
  ParamStore store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    const auto len = r.get<std::uint16_t>("name length");
    std::string name = r.take(len, "name");
    const auto dtype = r.get<std::uint8_t>("dtype");
    if (dtype != 0) {
      throw FormatError("entry '" + name + "' at offset " + std::to_string(at) +
                        ": unsupported dtype " + std::to_string(dtype));
    }
    const auto rank = r.get<std::uint8_t>("rank");
    Shape shape;
    for (int k = 0; k < rank; ++k) {
      const auto d = r.get<std::uint32_t>("dims");
      if (d == 0) throw FormatError("entry '" + name + "' has a zero extent");
      shape.push_back(d);
    }
    const auto bytes = static_cast<std::size_t>(shape_numel(shape)) * sizeof(float);
    const std::string raw = r.take(bytes, "tensor data");
    std::vector<float> data(bytes / sizeof(float));
    std::memcpy(data.data(), raw.data(), bytes);
    if (store.contains(name)) {
      throw FormatError("duplicate entry '" + name + "' at offset " + std::to_string(at));
    }
    store.add(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
  }
  if (!r.done()) {
    throw FormatError("trailing bytes after last entry at offset " + std::to_string(r.offset()));
  }
  return store;
}

ParamStore load_weights_for(const std::filesystem::path& path, const ModelConfig& config) {
  ParamStore store = load_weights(path);
  std::map<std::string, Shape> expected;
  for (auto& [name, shape] : param_layout(config)) expected.emplace(name, shape);
  for (const auto& [name, entry] : store) {
    auto it = expected.find(name);
    if (it == expected.end()) throw FormatError("unexpected weight entry '" + name + "'");
    if (it->second != entry.value.shape()) {
      throw FormatError("weight '" + name + "' has shape " + shape_str(entry.value.shape()) +
                        ", config expects " + shape_str(it->second));
    }
  }
  for (const auto& [name, shape] : expected) {
    if (!store.contains(name)) throw FormatError("missing weight entry '" + name + "'");
  }
  return store;
}

}  // namespace cat
