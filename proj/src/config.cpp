#include "srn/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "srn/errors.hpp"

namespace srn {

std::string to_string(DecoderKind kind) {
  switch (kind) {
    case DecoderKind::Srn: return "srn";
    case DecoderKind::SrnNoGsrm: return "srn_no_gsrm";
    case DecoderKind::Fsrm: return "fsrm";
    case DecoderKind::Bsrm: return "bsrm";
    case DecoderKind::Serial: return "serial";
  }
  return "?";
}

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::Gated: return "gated";
    case FusionMode::Add: return "add";
    case FusionMode::Concat: return "concat";
    case FusionMode::Dot: return "dot";
  }
  return "?";
}

DecoderKind parse_decoder(const std::string& text) {
  for (auto k : {DecoderKind::Srn, DecoderKind::SrnNoGsrm, DecoderKind::Fsrm, DecoderKind::Bsrm,
                 DecoderKind::Serial})
    if (to_string(k) == text) return k;
  throw ConfigError("unknown decoder '" + text + "' (srn, srn_no_gsrm, fsrm, bsrm, serial)");
}

FusionMode parse_fusion(const std::string& text) {
  for (auto m : {FusionMode::Gated, FusionMode::Add, FusionMode::Concat, FusionMode::Dot})
    if (to_string(m) == text) return m;
  throw ConfigError("unknown fusion mode '" + text + "' (gated, add, concat, dot)");
}

void ModelConfig::validate() const {
  if (image_height % 8 || image_width % 8 || image_height == 0 || image_width == 0)
    throw ConfigError("image size must be a positive multiple of 8");
  if (channels == 0) throw ConfigError("channels must be positive");
  for (auto w : conv_widths)
    if (w == 0) throw ConfigError("conv widths must be positive");
  if (convs_per_stage == 0) throw ConfigError("convs_per_stage must be at least 1");
  if (d_model % 4) throw ConfigError("d_model must be divisible by 4 for the 2D positional encoding");
  if (max_len == 0) throw ConfigError("max_len must be positive");
  if (num_classes < 2) throw ConfigError("num_classes must include at least one symbol and EOS");
  if (gsrm_units == 0) throw ConfigError("gsrm_units must be at least 1");
  backbone_transformer().validate();
  gsrm_transformer().validate();
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (weights.embedding < 0 || weights.reasoning < 0 || weights.fusion < 0)
    throw ConfigError("loss weights must be nonnegative");
}

void DataConfig::validate() const {
  if (count == 0 || lexicon_size == 0) throw ConfigError("data_count and lexicon_size must be positive");
  if (min_word_len == 0 || min_word_len > max_word_len)
    throw ConfigError("word lengths need 1 <= min_word_len <= max_word_len");
  if (noise < 0) throw ConfigError("noise must be nonnegative");
  if (confusability < 0 || confusability > 1) throw ConfigError("confusability must lie in [0, 1]");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("config key '" + key + "': expected unsigned integer, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("config key '" + key + "': expected u64, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto size_field = [&t](const char* name, auto member) {
      t[name] = [member](RunConfig& c, const std::string& k, const std::string& v) {
        member(c) = parse_size(k, v);
      };
    };
    size_field("image_height", [](RunConfig& c) -> std::size_t& { return c.model.image_height; });
    size_field("image_width", [](RunConfig& c) -> std::size_t& { return c.model.image_width; });
    size_field("channels", [](RunConfig& c) -> std::size_t& { return c.model.channels; });
    size_field("convs_per_stage",
               [](RunConfig& c) -> std::size_t& { return c.model.convs_per_stage; });
    size_field("d_model", [](RunConfig& c) -> std::size_t& { return c.model.d_model; });
    size_field("backbone_units", [](RunConfig& c) -> std::size_t& { return c.model.backbone_units; });
    size_field("backbone_heads", [](RunConfig& c) -> std::size_t& { return c.model.backbone_heads; });
    size_field("backbone_ff", [](RunConfig& c) -> std::size_t& { return c.model.backbone_ff; });
    size_field("max_len", [](RunConfig& c) -> std::size_t& { return c.model.max_len; });
    size_field("num_classes", [](RunConfig& c) -> std::size_t& { return c.model.num_classes; });
    size_field("gsrm_units", [](RunConfig& c) -> std::size_t& { return c.model.gsrm_units; });
    size_field("gsrm_heads", [](RunConfig& c) -> std::size_t& { return c.model.gsrm_heads; });
    size_field("gsrm_ff", [](RunConfig& c) -> std::size_t& { return c.model.gsrm_ff; });
    size_field("warmup_epochs", [](RunConfig& c) -> std::size_t& { return c.train.warmup_epochs; });
    size_field("joint_epochs", [](RunConfig& c) -> std::size_t& { return c.train.joint_epochs; });
    size_field("batch_size", [](RunConfig& c) -> std::size_t& { return c.train.batch_size; });
    size_field("data_count", [](RunConfig& c) -> std::size_t& { return c.data.count; });
    size_field("lexicon_size", [](RunConfig& c) -> std::size_t& { return c.data.lexicon_size; });
    size_field("min_word_len", [](RunConfig& c) -> std::size_t& { return c.data.min_word_len; });
    size_field("max_word_len", [](RunConfig& c) -> std::size_t& { return c.data.max_word_len; });

    t["conv_widths"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      std::stringstream ss(v);
      std::string part;
      std::size_t i = 0;
      while (std::getline(ss, part, ',')) {
        if (i == 3) throw ConfigError("conv_widths takes exactly three values");
        c.model.conv_widths[i++] = parse_size(k, trim(part));
      }
      if (i != 3) throw ConfigError("conv_widths takes exactly three values");
    };
    t["fpn_merge"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.fpn_merge = parse_bool(k, v);
    };
    t["gsrm_shared_streams"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.gsrm_shared_streams = parse_bool(k, v);
    };
    t["teacher_forcing"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.model.teacher_forcing = parse_bool(k, v);
    };
    t["norm_order"] = [](RunConfig& c, const std::string&, const std::string& v) {
      if (v == "post")
        c.model.norm_order = NormOrder::Post;
      else if (v == "pre")
        c.model.norm_order = NormOrder::Pre;
      else
        throw ConfigError("norm_order must be 'post' or 'pre', got '" + v + "'");
    };
    t["decoder"] = [](RunConfig& c, const std::string&, const std::string& v) {
      c.model.decoder = parse_decoder(v);
    };
    t["fusion"] = [](RunConfig& c, const std::string&, const std::string& v) {
      c.model.fusion = parse_fusion(v);
    };
    t["learning_rate"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.learning_rate = parse_double(k, v);
    };
    t["beta1"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.beta1 = parse_double(k, v);
    };
    t["beta2"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.beta2 = parse_double(k, v);
    };
    t["adam_eps"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.adam_eps = parse_double(k, v);
    };
    t["alpha_e"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.weights.embedding = parse_double(k, v);
    };
    t["alpha_r"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.weights.reasoning = parse_double(k, v);
    };
    t["alpha_f"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.weights.fusion = parse_double(k, v);
    };
    t["seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.train.seed = parse_u64(k, v);
    };
    t["noise"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.data.noise = parse_double(k, v);
    };
    t["confusability"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.data.confusability = parse_double(k, v);
    };
    t["data_seed"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.data.seed = parse_u64(k, v);
    };
    return t;
  }();
  return table;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(*this, key, value);
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.model.validate();
  cfg.train.validate();
  cfg.data.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  os.precision(17);
  const auto& m = model;
  const auto& t = train;
  os << "image_height=" << m.image_height << '\n'
     << "image_width=" << m.image_width << '\n'
     << "channels=" << m.channels << '\n'
     << "conv_widths=" << m.conv_widths[0] << ',' << m.conv_widths[1] << ',' << m.conv_widths[2]
     << '\n'
     << "convs_per_stage=" << m.convs_per_stage << '\n'
     << "fpn_merge=" << (m.fpn_merge ? "true" : "false") << '\n'
     << "d_model=" << m.d_model << '\n'
     << "backbone_units=" << m.backbone_units << '\n'
     << "backbone_heads=" << m.backbone_heads << '\n'
     << "backbone_ff=" << m.backbone_ff << '\n'
     << "max_len=" << m.max_len << '\n'
     << "num_classes=" << m.num_classes << '\n'
     << "gsrm_units=" << m.gsrm_units << '\n'
     << "gsrm_heads=" << m.gsrm_heads << '\n'
     << "gsrm_ff=" << m.gsrm_ff << '\n'
     << "gsrm_shared_streams=" << (m.gsrm_shared_streams ? "true" : "false") << '\n'
     << "norm_order=" << (m.norm_order == NormOrder::Post ? "post" : "pre") << '\n'
     << "decoder=" << to_string(m.decoder) << '\n'
     << "fusion=" << to_string(m.fusion) << '\n'
     << "teacher_forcing=" << (m.teacher_forcing ? "true" : "false") << '\n'
     << "warmup_epochs=" << t.warmup_epochs << '\n'
     << "joint_epochs=" << t.joint_epochs << '\n'
     << "learning_rate=" << t.learning_rate << '\n'
     << "batch_size=" << t.batch_size << '\n'
     << "beta1=" << t.beta1 << '\n'
     << "beta2=" << t.beta2 << '\n'
     << "adam_eps=" << t.adam_eps << '\n'
     << "alpha_e=" << t.weights.embedding << '\n'
     << "alpha_r=" << t.weights.reasoning << '\n'
     << "alpha_f=" << t.weights.fusion << '\n'
     << "seed=" << t.seed << '\n'
     << "data_count=" << data.count << '\n'
     << "lexicon_size=" << data.lexicon_size << '\n'
     << "min_word_len=" << data.min_word_len << '\n'
     << "max_word_len=" << data.max_word_len << '\n'
     << "noise=" << data.noise << '\n'
     << "confusability=" << data.confusability << '\n'
     << "data_seed=" << data.seed << '\n';
  return os.str();
}

}  // namespace srn
