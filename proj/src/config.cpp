#include "stp/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace stp {

GeneratorSpec DataConfig::generator_spec() const {
  GeneratorSpec spec;
  spec.kind = generator;
  spec.t_in = t_in;
  spec.t_out = t_out;
  spec.blobs.height = height;
  spec.blobs.width = width;
  spec.blobs.n_blobs = n_blobs;
  spec.advection.height = height;
  spec.advection.width = width;
  spec.advection.vx = vx;
  spec.advection.vy = vy;
  spec.advection.nu = diffusivity;
  spec.advection.substeps = substeps;
  spec.navier_stokes.n = height;
  spec.navier_stokes.nu = viscosity;
  spec.navier_stokes.forcing = forcing;
  spec.navier_stokes.dt = solver_dt;
  spec.navier_stokes.frame_interval = frame_interval;
  return spec;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m = model;
  m.channels = 1;
  m.height = data.height;
  m.width = data.width;
  return m;
}

void RunConfig::validate() const {
  model_config().validate();
  loss.validate();
  auto fail = [](const std::string& msg) { throw std::invalid_argument("run config: " + msg); };
  if (!(optim.learning_rate >= 0.0)) fail("optim.learning_rate must be >= 0");
  if (!(optim.clip_norm >= 0.0)) fail("optim.clip_norm must be >= 0");
  if (optim.batch_size == 0) fail("optim.batch_size must be positive");
  if (data.t_in == 0 || data.t_out == 0) fail("data.t_in and data.t_out must be positive");
  if (!data_free && data.dir.empty() && data.train_sequences == 0) fail("data.train_sequences must be positive");
  if (data.generator == Generator::navier_stokes && data.height != data.width) {
    fail("navier_stokes needs a square grid (data.height == data.width)");
  }
  if (data.generator == Generator::advection_diffusion) data.generator_spec().advection.check_stability();
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw std::invalid_argument("config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw std::invalid_argument("config key '" + key + "': expected true or false, got '" + text + "'");
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Member>
Field size_field(Member member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) {
            member(c) = parse_number<std::size_t>(k, v);
          },
          [member](const RunConfig& c) { return std::to_string(member(c)); }};
}

template <typename Member>
Field double_field(Member member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) {
            member(c) = parse_number<double>(k, v);
          },
          [member](const RunConfig& c) { return format_double(member(c)); }};
}

template <typename Member>
Field bool_field(Member member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = parse_bool(k, v); },
          [member](const RunConfig& c) { return member(c) ? "true" : "false"; }};
}

using Registry = std::vector<std::pair<std::string, Field>>;

const Registry& registry() {
  static const Registry fields = [] {
    Registry r;
    r.emplace_back("seed", Field{[](RunConfig& c, const std::string& k,
                                    const std::string& v) { c.seed = parse_number<std::uint64_t>(k, v); },
                                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    r.emplace_back("output_dir", Field{[](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = v; },
                                       [](const RunConfig& c) { return c.output_dir; }});
    r.emplace_back("data_free", bool_field([](auto& c) -> auto& { return c.data_free; }));

    r.emplace_back("model.patch_size", size_field([](auto& c) -> auto& { return c.model.patch_size; }));
    r.emplace_back("model.embed_dim", size_field([](auto& c) -> auto& { return c.model.embed_dim; }));
    r.emplace_back("model.transformer_blocks",
                   size_field([](auto& c) -> auto& { return c.model.transformer_blocks; }));
    r.emplace_back("model.fourier_blocks", size_field([](auto& c) -> auto& { return c.model.fourier_blocks; }));
    r.emplace_back("model.window_size", size_field([](auto& c) -> auto& { return c.model.window_size; }));
    r.emplace_back("model.mlp_ratio", size_field([](auto& c) -> auto& { return c.model.mlp_ratio; }));
    r.emplace_back("model.derivative_order",
                   size_field([](auto& c) -> auto& { return c.model.derivative_order; }));
    r.emplace_back("model.rk_mode",
                   Field{[](RunConfig& c, const std::string&, const std::string& v) { c.model.rk_mode = parse_rk_mode(v); },
                         [](const RunConfig& c) { return to_string(c.model.rk_mode); }});
    r.emplace_back("model.scalar_gate", bool_field([](auto& c) -> auto& { return c.model.scalar_gate; }));
    r.emplace_back("model.upsampler", Field{[](RunConfig& c, const std::string&,
                                               const std::string& v) { c.model.upsampler = parse_upsampler(v); },
                                            [](const RunConfig& c) { return to_string(c.model.upsampler); }});
    r.emplace_back("model.fourier_init",
                   Field{[](RunConfig& c, const std::string&,
                            const std::string& v) { c.model.fourier_init = parse_fourier_init(v); },
                         [](const RunConfig& c) { return to_string(c.model.fourier_init); }});

    r.emplace_back("optim.learning_rate",
                   double_field([](auto& c) -> auto& { return c.optim.learning_rate; }));
    r.emplace_back("optim.steps", size_field([](auto& c) -> auto& { return c.optim.steps; }));
    r.emplace_back("optim.batch_size", size_field([](auto& c) -> auto& { return c.optim.batch_size; }));
    r.emplace_back("optim.clip_norm", double_field([](auto& c) -> auto& { return c.optim.clip_norm; }));

    r.emplace_back("loss.h1", double_field([](auto& c) -> auto& { return c.loss.h1; }));
    r.emplace_back("loss.moment", double_field([](auto& c) -> auto& { return c.loss.moment; }));

    r.emplace_back("data.generator", Field{[](RunConfig& c, const std::string&,
                                              const std::string& v) { c.data.generator = parse_generator(v); },
                                           [](const RunConfig& c) { return to_string(c.data.generator); }});
    r.emplace_back("data.t_in", size_field([](auto& c) -> auto& { return c.data.t_in; }));
    r.emplace_back("data.t_out", size_field([](auto& c) -> auto& { return c.data.t_out; }));
    r.emplace_back("data.height", size_field([](auto& c) -> auto& { return c.data.height; }));
    r.emplace_back("data.width", size_field([](auto& c) -> auto& { return c.data.width; }));
    r.emplace_back("data.train_sequences", size_field([](auto& c) -> auto& { return c.data.train_sequences; }));
    r.emplace_back("data.eval_sequences", size_field([](auto& c) -> auto& { return c.data.eval_sequences; }));
    r.emplace_back("data.dir", Field{[](RunConfig& c, const std::string&, const std::string& v) { c.data.dir = v; },
                                     [](const RunConfig& c) { return c.data.dir; }});
    r.emplace_back("data.n_blobs", size_field([](auto& c) -> auto& { return c.data.n_blobs; }));
    r.emplace_back("data.vx", double_field([](auto& c) -> auto& { return c.data.vx; }));
    r.emplace_back("data.vy", double_field([](auto& c) -> auto& { return c.data.vy; }));
    r.emplace_back("data.diffusivity", double_field([](auto& c) -> auto& { return c.data.diffusivity; }));
    r.emplace_back("data.substeps", size_field([](auto& c) -> auto& { return c.data.substeps; }));
    r.emplace_back("data.viscosity", double_field([](auto& c) -> auto& { return c.data.viscosity; }));
    r.emplace_back("data.forcing", double_field([](auto& c) -> auto& { return c.data.forcing; }));
    r.emplace_back("data.solver_dt", double_field([](auto& c) -> auto& { return c.data.solver_dt; }));
    r.emplace_back("data.frame_interval", double_field([](auto& c) -> auto& { return c.data.frame_interval; }));
    return r;
  }();
  return fields;
}

// Exact match, or a bare key naming the last segment of exactly one dotted key.
const Field& lookup(const std::string& key) {
  std::vector<const std::pair<std::string, Field>*> suffix;
  for (const auto& entry : registry()) {
    if (entry.first == key) return entry.second;
    if (key.find('.') == std::string::npos && entry.first.ends_with("." + key)) suffix.push_back(&entry);
  }
  if (suffix.size() == 1) return suffix.front()->second;
  if (suffix.size() > 1) {
    std::string names;
    for (const auto* e : suffix) names += (names.empty() ? "" : ", ") + e->first;
    throw std::invalid_argument("ambiguous config key '" + key + "': " + names);
  }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [name, field] : registry()) keys.push_back(name);
  return keys;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  lookup(key).set(cfg, key, value);
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) { return lookup(key).get(cfg); }

RunConfig parse_config(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(origin + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    try {
      set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(origin + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw std::invalid_argument("override '" + assignment + "' is not key=value");
  set_config_value(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [name, field] : registry()) out += name + " = " + field.get(cfg) + "\n";
  return out;
}

}  // namespace stp
