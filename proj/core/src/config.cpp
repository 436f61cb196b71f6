#include "lfp/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <limits>
#include <utility>

#include <json.hpp>

#include "lfp/errors.hpp"
#include "lfp/io.hpp"
#include "lfp/parallel.hpp"

namespace lfp::config {

using nlohmann::json;

unsigned CoreConfig::workers() const {
  if (deterministic) return 1;
  if (threads > 0) return static_cast<unsigned>(threads);
  return worker_count();
}

namespace {

template <class E>
using EnumTable = std::vector<std::pair<E, const char*>>;

const EnumTable<nn::BlockType> kBlocks{{nn::BlockType::Basic, "basic"},
                                       {nn::BlockType::Bottleneck, "bottleneck"}};
const EnumTable<nn::NormKind> kNorms{{nn::NormKind::Group, "group"}, {nn::NormKind::None, "none"}};
const EnumTable<cspp::Variant> kVariants{{cspp::Variant::None, "none"},
                                         {cspp::Variant::NonLocal, "nonlocal"},
                                         {cspp::Variant::Aspp, "aspp"},
                                         {cspp::Variant::Cspp, "cspp"}};
const EnumTable<cspp::UpsampleMode> kUpsample{{cspp::UpsampleMode::Bilinear, "bilinear"},
                                              {cspp::UpsampleMode::Nearest, "nearest"}};
const EnumTable<matting::FusionPoint> kFusion{{matting::FusionPoint::None, "none"},
                                              {matting::FusionPoint::Input, "input"},
                                              {matting::FusionPoint::PrePpm, "pre_ppm"},
                                              {matting::FusionPoint::PostPpm, "post_ppm"}};
const EnumTable<inference::Blend> kBlend{{inference::Blend::None, "none"},
                                         {inference::Blend::LinearRamp, "linear-ramp"}};
const EnumTable<PadMode> kPad{{PadMode::Reflect, "reflect"}, {PadMode::Replicate, "replicate"}};

json::json_pointer pointer(const std::string& dotted) {
  std::string p = "/" + dotted;
  std::replace(p.begin(), p.end(), '.', '/');
  return json::json_pointer(p);
}

struct Writer {
  json root = json::object();

  template <class T>
  void field(const std::string& path, const T& v) {
    root[pointer(path)] = v;
  }
  template <class E>
  void choice(const std::string& path, const E& v, const EnumTable<E>& table) {
    for (const auto& [e, name] : table) {
      if (e == v) root[pointer(path)] = name;
    }
  }
};

struct Reader {
  const json& root;

  const json& at(const std::string& path) const {
    const auto p = pointer(path);
    if (!root.contains(p)) throw ConfigError("missing key '" + path + "'");
    return root.at(p);
  }

  template <class T>
  void field(const std::string& path, T& v) const {
    const json& j = at(path);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!j.is_boolean()) throw ConfigError("'" + path + "' expects a boolean");
        v = j.get<bool>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!j.is_number_integer()) throw ConfigError("'" + path + "' expects an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (j.is_number_unsigned()) {
            v = j.get<T>();
          } else if (j.get<std::int64_t>() < 0) {
            throw ConfigError("'" + path + "' must be non-negative");
          } else {
            v = static_cast<T>(j.get<std::int64_t>());
          }
        } else {
          const std::int64_t x = j.get<std::int64_t>();
          if (x < std::numeric_limits<T>::min() || x > std::numeric_limits<T>::max()) {
            throw ConfigError("'" + path + "' is out of range");
          }
          v = static_cast<T>(x);
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!j.is_number()) throw ConfigError("'" + path + "' expects a number");
        v = j.get<T>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!j.is_string()) throw ConfigError("'" + path + "' expects a string");
        v = j.get<std::string>();
      } else {
        // arrays of ints
        if (!j.is_array()) throw ConfigError("'" + path + "' expects an array");
        for (const auto& e : j) {
          if (!e.is_number_integer()) throw ConfigError("'" + path + "' expects integers");
        }
        T tmp{};
        if constexpr (requires { tmp.resize(0); }) {
          tmp = j.get<T>();
        } else {
          if (j.size() != tmp.size()) {
            throw ConfigError("'" + path + "' expects " + std::to_string(tmp.size()) +
                              " entries, got " + std::to_string(j.size()));
          }
          for (std::size_t i = 0; i < tmp.size(); ++i) tmp[i] = j[i].get<int>();
        }
        v = tmp;
      }
    } catch (const json::exception& e) {
      throw ConfigError("'" + path + "': " + e.what());
    }
  }

  template <class E>
  void choice(const std::string& path, E& v, const EnumTable<E>& table) const {
    const json& j = at(path);
    if (!j.is_string()) throw ConfigError("'" + path + "' expects a string");
    const std::string s = j.get<std::string>();
    std::string names;
    for (const auto& [e, name] : table) {
      if (s == name) {
        v = e;
        return;
      }
      names += names.empty() ? name : std::string(", ") + name;
    }
    throw ConfigError("'" + path + "' must be one of {" + names + "}, got '" + s + "'");
  }
};

template <class V, class C>
void visit(V& v, C& c) {
  v.field("preset", c.preset);

  v.field("core.seed", c.core.seed);
  v.field("core.deterministic", c.core.deterministic);
  v.field("core.threads", c.core.threads);

  auto& a = c.datagen.augment;
  v.field("datagen.crop_sizes", a.crop_sizes);
  v.field("datagen.kernel_min", a.kernel_min);
  v.field("datagen.kernel_max", a.kernel_max);
  v.field("datagen.fg_to_unknown_prob", a.fg_to_unknown_prob);
  v.field("datagen.rotation_max_deg", a.rotation_max_deg);
  v.field("datagen.scale_min", a.scale_min);
  v.field("datagen.scale_max", a.scale_max);
  v.field("datagen.shear_max_deg", a.shear_max_deg);
  v.field("datagen.flip_prob", a.flip_prob);
  v.field("datagen.saturation_min", a.saturation_min);
  v.field("datagen.saturation_max", a.saturation_max);
  v.field("datagen.grayscale_prob", a.grayscale_prob);
  v.field("datagen.gamma_min", a.gamma_min);
  v.field("datagen.gamma_max", a.gamma_max);
  v.field("datagen.contrast_min", a.contrast_min);
  v.field("datagen.contrast_max", a.contrast_max);
  v.field("datagen.rng_seed", a.rng_seed);
  v.field("datagen.procedural_fg", c.datagen.procedural_fg);
  v.field("datagen.procedural_bg", c.datagen.procedural_bg);
  v.field("datagen.procedural_side", c.datagen.procedural_side);
  v.field("datagen.samples", c.datagen.samples);
  v.field("datagen.queue_capacity", c.datagen.queue_capacity);

  auto& p = c.propagating;
  v.field("propagating.input_downsample_factor", p.input_downsample_factor);
  v.field("propagating.stem_channels", p.stem_channels);
  v.field("propagating.stem_kernel", p.stem_kernel);
  v.choice("propagating.block", p.block, kBlocks);
  v.field("propagating.stage_widths", p.stage_widths);
  v.field("propagating.stage_blocks", p.stage_blocks);
  v.field("propagating.strides", p.strides);
  v.field("propagating.dilations", p.dilations);
  v.field("propagating.block_kernel", p.block_kernel);
  v.field("propagating.decoder_widths", p.decoder_widths);
  v.field("propagating.decoder_kernel", p.decoder_kernel);
  v.field("propagating.head_kernel", p.head_kernel);
  v.field("propagating.tap_level", p.tap_level);
  v.choice("propagating.norm", p.norm, kNorms);
  v.choice("propagating.variant", p.variant, kVariants);
  v.field("propagating.bottleneck.csp_grids", p.bottleneck.csp_grids);
  v.field("propagating.bottleneck.csp_branch_channels", p.bottleneck.csp_branch_channels);
  v.field("propagating.bottleneck.aspp_rates", p.bottleneck.aspp_rates);
  v.field("propagating.bottleneck.aspp_branch_channels", p.bottleneck.aspp_branch_channels);
  v.field("propagating.bottleneck.fuse_channels", p.bottleneck.fuse_channels);
  v.field("propagating.bottleneck.fusion_projection", p.bottleneck.fusion_projection);
  v.choice("propagating.bottleneck.upsample", p.bottleneck.upsample, kUpsample);
  v.field("propagating.bottleneck.linear", p.bottleneck.linear);

  auto& m = c.matting;
  v.field("matting.stem_widths", m.stem_widths);
  v.choice("matting.block", m.block, kBlocks);
  v.field("matting.stage_widths", m.stage_widths);
  v.field("matting.stage_blocks", m.stage_blocks);
  v.field("matting.strides", m.strides);
  v.field("matting.dilations", m.dilations);
  v.choice("matting.fusion", m.fusion, kFusion);
  v.field("matting.fusion_channels", m.fusion_channels);
  v.field("matting.ppm_grids", m.ppm_grids);
  v.field("matting.ppm_channels", m.ppm_channels);
  v.field("matting.decoder_widths", m.decoder_widths);
  v.field("matting.head_width", m.head_width);
  v.choice("matting.norm", m.norm, kNorms);

  auto& l = c.losses;
  v.field("losses.lambda_alpha", l.lambda_alpha);
  v.field("losses.lambda_fb", l.lambda_fb);
  v.field("losses.gamma", l.gamma);
  v.field("losses.pyramid_levels", l.pyramid_levels);
  v.field("losses.composite_unknown_only", l.composite_unknown_only);
  v.field("losses.laplacian_full_patch", l.laplacian_full_patch);

  auto& i = c.inference;
  v.field("inference.inner_side", i.inner_side);
  v.field("inference.overlap", i.overlap);
  v.choice("inference.blend", i.blend, kBlend);
  v.choice("inference.pad_mode", i.pad_mode, kPad);
  v.field("inference.tta", i.tta);
  v.field("inference.skip_known_tiles", i.skip_known_tiles);

  auto& t = c.training;
  v.field("training.optimizer.lr", t.optimizer.lr);
  v.field("training.optimizer.weight_decay", t.optimizer.weight_decay);
  v.field("training.optimizer.beta1", t.optimizer.beta1);
  v.field("training.optimizer.beta2", t.optimizer.beta2);
  v.field("training.optimizer.eps", t.optimizer.eps);
  v.field("training.pretrain_epochs", t.pretrain_epochs);
  v.field("training.stage_epochs", t.stage_epochs);
  v.field("training.propagating_weight", t.propagating_weight);
  v.field("training.shuffle", t.shuffle);
  v.field("training.checkpoint_every", t.checkpoint_every);

  v.field("analysis.threshold", c.analysis.threshold);
  v.field("analysis.marker_px", c.analysis.marker_px);
}

json tree(const AppConfig& c) {
  Writer w;
  AppConfig copy = c;
  visit(w, copy);
  return w.root;
}

std::string kind(const json& j) {
  if (j.is_boolean()) return "boolean";
  if (j.is_number_integer()) return "integer";
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_array()) return "array";
  if (j.is_object()) return "table";
  return "null";
}

// Overlays `patch` onto `base`; every key must already exist with a
// compatible type.
void merge(json& base, const json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw ConfigError("configuration root must be a table");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown key '" + path + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      if (!value.is_object()) throw ConfigError("'" + path + "' expects a table");
      merge(slot, value, path);
      continue;
    }
    const bool ok = (slot.is_number_integer() && value.is_number_integer()) ||
                    (slot.is_number_float() && value.is_number()) ||
                    (slot.is_boolean() && value.is_boolean()) ||
                    (slot.is_string() && value.is_string()) ||
                    (slot.is_array() && value.is_array());
    if (!ok) {
      throw ConfigError("'" + path + "' expects " + kind(slot) + ", got " + kind(value));
    }
    slot = value;
  }
}

void check_sides(const AppConfig& c) {
  const ModelConfig m = c.model();
  auto wrap = [&](const char* what, int s) {
    try {
      check_patch_side(m, s);
    } catch (const GeometryError& e) {
      throw ConfigError(std::string(what) + " = " + std::to_string(s) + ": " + e.what());
    }
  };
  for (int s : c.datagen.augment.crop_sizes) wrap("datagen.crop_sizes entry", s);
  wrap("inference.inner_side", c.inference.inner_side);
}

}  // namespace

void AppConfig::validate() const {
  auto section = [](const char* name, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(std::string(name) + ": " + e.what());
    }
  };
  if (core.threads < 0) throw ConfigError("core.threads must be >= 0");
  section("datagen", [&] { datagen.augment.validate(); });
  if (datagen.procedural_fg < 1 || datagen.procedural_bg < 1 || datagen.samples < 1 ||
      datagen.queue_capacity < 1) {
    throw ConfigError("datagen counts must be >= 1");
  }
  if (datagen.procedural_side < 8) throw ConfigError("datagen.procedural_side must be >= 8");
  section("propagating", [&] { propagating.validate(); });
  section("matting", [&] { matting.validate(); });
  section("losses", [&] { losses.validate(); });
  section("inference", [&] { inference.validate(); });
  section("training", [&] { training.validate(); });
  if (!(analysis.threshold > 0.0 && analysis.threshold < 1.0)) {
    throw ConfigError("analysis.threshold must lie in (0, 1)");
  }
  if (analysis.marker_px < 0.0) throw ConfigError("analysis.marker_px must be >= 0");
  check_sides(*this);
}

void check_patch_side(const ModelConfig& m, int side) {
  if (side < 8 || side % 2 != 0) {
    throw GeometryError("patch side must be even and >= 8");
  }
  const int ms = m.matting.total_stride();
  if (side % ms != 0) {
    throw GeometryError("inner side must be divisible by the matting stride " + std::to_string(ms));
  }
  const int mb = side / ms;
  const int ppm = *std::max_element(m.matting.ppm_grids.begin(), m.matting.ppm_grids.end());
  if (ppm > mb) {
    throw GeometryError("matting bottleneck " + std::to_string(mb) + " px is smaller than pooling grid " +
                        std::to_string(ppm));
  }
  if (m.matting.fusion == matting::FusionPoint::None) return;
  const int ctx = 2 * side;
  const int ps = m.propagating.total_stride();
  const int f = m.propagating.input_downsample_factor;
  if (ctx % ps != 0 || ctx % (2 * f) != 0) {
    throw GeometryError("context side must be divisible by the propagating stride " +
                        std::to_string(ps));
  }
  const int pb = ctx / ps;
  if (m.propagating.variant == cspp::Variant::Cspp) {
    const auto& g = m.propagating.bottleneck.csp_grids;
    const int big = *std::max_element(g.begin(), g.end());
    if (big > pb) {
      throw GeometryError("propagating bottleneck " + std::to_string(pb) +
                          " px is smaller than pooling grid " + std::to_string(big));
    }
  }
}

std::vector<std::string> preset_names() { return {"tiny", "small", "paper"}; }

AppConfig preset(const std::string& name) {
  AppConfig c;
  c.preset = name;
  if (name == "tiny") {
    c.datagen.augment.crop_sizes = {64};
    c.datagen.augment.kernel_max = 15;
    c.inference.inner_side = 64;
    c.training.optimizer.lr = 1e-3;
    c.training.pretrain_epochs = 1;
    c.training.stage_epochs = {2, 1, 1};
    return c;
  }
  if (name == "small") {
    auto& p = c.propagating;
    p.stem_channels = 32;
    p.stage_widths = {32, 64, 128, 256};
    p.decoder_widths = {128, 64, 32, 32};
    p.bottleneck.aspp_branch_channels = 64;
    p.bottleneck.fuse_channels = 128;
    auto& m = c.matting;
    m.stem_widths = {32, 32, 64};
    m.stage_widths = {32, 64, 128, 256};
    m.fusion_channels = 64;
    m.ppm_channels = 64;
    m.decoder_widths = {128, 128, 64, 64};
    m.head_width = 64;
    c.datagen.augment.crop_sizes = {256};
    c.datagen.procedural_side = 384;
    c.inference.inner_side = 256;
    c.training.stage_epochs = {4, 2, 1};
    return c;
  }
  if (name == "paper") {
    auto& p = c.propagating;
    p.stem_channels = 64;
    p.block = nn::BlockType::Bottleneck;
    p.stage_widths = {256, 512, 1024, 2048};
    p.stage_blocks = {3, 4, 6, 3};
    p.decoder_widths = {256, 128, 64, 32};
    p.bottleneck.aspp_branch_channels = 256;
    p.bottleneck.fuse_channels = 256;
    auto& m = c.matting;
    m.stem_widths = {32, 32, 64};
    m.block = nn::BlockType::Bottleneck;
    m.stage_widths = {256, 512, 1024, 2048};
    m.stage_blocks = {3, 4, 6, 3};
    m.fusion_channels = 256;
    m.ppm_channels = 256;
    m.decoder_widths = {256, 128, 64, 32};
    m.head_width = 32;
    c.datagen.augment.crop_sizes = {768, 640, 512, 448, 320};
    c.datagen.procedural_side = 1024;
    c.inference.inner_side = 1024;
    c.training.stage_epochs = {35, 10, 5};
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (expected tiny, small or paper)");
}

std::string to_json(const AppConfig& c) { return tree(c).dump(2); }

AppConfig resolve(const std::string& preset_name, const std::string& file_text,
                  const std::vector<std::string>& overrides) {
  json file = json::object();
  if (!file_text.empty()) {
    try {
      file = json::parse(file_text, nullptr, true, true);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
    }
    if (!file.is_object()) throw ConfigError("configuration root must be a table");
  }
  std::string name = preset_name;
  if (name.empty() && file.contains("preset")) {
    if (!file["preset"].is_string()) throw ConfigError("'preset' expects a string");
    name = file["preset"].get<std::string>();
  }
  if (name.empty()) name = "tiny";
  file.erase("preset");

  json t = tree(preset(name));
  merge(t, file, "");
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + o + "' must look like key=value");
    }
    const std::string key = o.substr(0, eq), text = o.substr(eq + 1);
    if (key == "preset") throw ConfigError("use --preset to choose a preset");
    json value;
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      value = text;
    }
    json patch = json::object();
    patch[pointer(key)] = value;
    merge(t, patch, "");
  }

  AppConfig c;
  Reader r{t};
  visit(r, c);
  if (const char* d = std::getenv("LFP_DETERMINISTIC"); d && *d && std::string(d) != "0") {
    c.core.deterministic = true;
  }
  c.training.seed = c.core.seed;
  c.training.loss = c.losses;
  c.validate();
  return c;
}

AppConfig load(const std::string& preset_name, const std::string& path,
               const std::vector<std::string>& overrides) {
  return resolve(preset_name, path.empty() ? std::string() : io::read_text(path), overrides);
}

}  // namespace lfp::config
