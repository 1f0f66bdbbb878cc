#include "texanom/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "texanom/rng.hpp"

namespace texanom::config {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// Drops a trailing # comment that is not inside a string.
std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_str = !in_str;
    if (line[i] == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

class ValueParser {
 public:
  ValueParser(const std::string& text, std::string key) : s_(text), key_(std::move(key)) {}

  Value parse() {
    Value v;
    skip_ws();
    if (peek() == '[') {
      v.is_array = true;
      ++pos_;
      skip_ws();
      if (peek() == ']') {
        ++pos_;
      } else {
        for (;;) {
          v.items.push_back(scalar());
          skip_ws();
          if (peek() == ',') {
            ++pos_;
            skip_ws();
            if (peek() == ']') {
              ++pos_;
              break;
            }
            continue;
          }
          if (peek() == ']') {
            ++pos_;
            break;
          }
          fail("expected ',' or ']' in array");
        }
      }
    } else {
      v.items.push_back(scalar());
    }
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected trailing characters");
    return v;
  }

 private:
  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  [[noreturn]] void fail(const std::string& why) const { throw ConfigError(key_ + ": " + why); }

  Scalar scalar() {
    skip_ws();
    if (peek() == '"') {
      ++pos_;
      std::string out;
      while (pos_ < s_.size() && s_[pos_] != '"') {
        if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) {
          const char e = s_[++pos_];
          out.push_back(e == 'n' ? '\n' : e == 't' ? '\t' : e);
        } else {
          out.push_back(s_[pos_]);
        }
        ++pos_;
      }
      if (peek() != '"') fail("unterminated string");
      ++pos_;
      return out;
    }
    const auto start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && !std::isspace(static_cast<unsigned char>(s_[pos_])))
      ++pos_;
    const std::string tok = s_.substr(start, pos_ - start);
    if (tok == "true") return true;
    if (tok == "false") return false;
    std::string digits;
    for (char c : tok)
      if (c != '_') digits.push_back(c);
    try {
      std::size_t used = 0;
      const double d = std::stod(digits, &used);
      if (used != digits.size()) fail("malformed number '" + tok + "'");
      return d;
    } catch (const std::logic_error&) {
      fail("expected a string, number or boolean, got '" + tok + "'");
    }
  }

  const std::string& s_;
  std::string key_;
  std::size_t pos_ = 0;
};

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out + "\"";
}

std::string num(double v) {
  if (std::floor(v) == v && std::fabs(v) < 1e15) return std::to_string(static_cast<long long>(v));
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

Document Document::parse(const std::string& text) {
  Document doc;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[' && line.find('=') == std::string::npos) {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = (section.empty() ? "" : section + ".") + trim(line.substr(0, eq));
    std::string rhs = trim(line.substr(eq + 1));
    // Arrays may continue over several lines.
    auto open_brackets = [](const std::string& s) {
      int depth = 0;
      bool in_str = false;
      for (char c : s) {
        if (c == '"') in_str = !in_str;
        if (!in_str) depth += c == '[' ? 1 : c == ']' ? -1 : 0;
      }
      return depth;
    };
    while (open_brackets(rhs) > 0 && std::getline(in, line)) {
      ++lineno;
      rhs += " " + trim(strip_comment(line));
    }
    if (doc.values_.count(key)) throw ConfigError(key + ": duplicate key");
    doc.values_[key] = ValueParser(rhs, key).parse();
  }
  return doc;
}

namespace {

const Scalar& single(const std::map<std::string, Value>& values, const std::string& key) {
  const auto it = values.find(key);
  if (it == values.end()) throw ConfigError(key + ": missing");
  if (it->second.is_array || it->second.items.size() != 1) throw ConfigError(key + ": expected a single value");
  return it->second.items.front();
}

}  // namespace

std::string Document::get_string(const std::string& key) const {
  const auto& v = single(values_, key);
  if (!std::holds_alternative<std::string>(v)) throw ConfigError(key + ": expected a string");
  return std::get<std::string>(v);
}

double Document::get_number(const std::string& key) const {
  const auto& v = single(values_, key);
  if (!std::holds_alternative<double>(v)) throw ConfigError(key + ": expected a number");
  return std::get<double>(v);
}

std::int64_t Document::get_integer(const std::string& key) const {
  const double d = get_number(key);
  if (std::floor(d) != d) throw ConfigError(key + ": expected an integer");
  return static_cast<std::int64_t>(d);
}

bool Document::get_bool(const std::string& key) const {
  const auto& v = single(values_, key);
  if (!std::holds_alternative<bool>(v)) throw ConfigError(key + ": expected true or false");
  return std::get<bool>(v);
}

std::vector<std::int64_t> Document::get_integer_array(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key + ": missing");
  std::vector<std::int64_t> out;
  for (const auto& s : it->second.items) {
    if (!std::holds_alternative<double>(s) || std::floor(std::get<double>(s)) != std::get<double>(s))
      throw ConfigError(key + ": expected an array of integers");
    out.push_back(static_cast<std::int64_t>(std::get<double>(s)));
  }
  return out;
}

std::vector<std::string> Document::get_string_array(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key + ": missing");
  std::vector<std::string> out;
  for (const auto& s : it->second.items) {
    if (!std::holds_alternative<std::string>(s)) throw ConfigError(key + ": expected an array of strings");
    out.push_back(std::get<std::string>(s));
  }
  return out;
}

RunConfig RunConfig::parse(const std::string& text, const fs::path& base_dir) {
  const Document doc = Document::parse(text);
  static const std::set<std::string> known{
      "seed",
      "dataset.root",
      "dataset.validation",
      "architecture.widths",
      "train.loss",
      "train.epochs",
      "train.learning_rate",
      "train.lr_decay",
      "train.lr_decay_every",
      "train.batch_size",
      "train.patch_count",
      "train.patch_size",
      "pyramid.orientations",
      "pyramid.scales",
      "cwssim.window",
      "cwssim.k",
      "cwssim.stride",
      "inference.patch_size",
      "inference.stride",
      "inference.fusion_scales",
      "inference.window_stride",
      "inference.target_fpr",
      "inference.erode_radius",
      "inference.post_process",
      "output.dir",
      "runtime.threads",
      "runtime.deterministic",
  };
  for (const auto& [key, _] : doc.values())
    if (!known.count(key)) throw ConfigError(key + ": unknown configuration key");

  auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  auto positive_int = [&](const std::string& key) {
    const auto v = doc.get_integer(key);
    if (v < 1 || v > (1LL << 31)) throw ConfigError(key + ": must be a positive integer");
    return static_cast<int>(v);
  };

  RunConfig c;
  if (doc.has("seed")) {
    const auto s = doc.get_integer("seed");
    if (s < 0) throw ConfigError("seed: must be nonnegative");
    c.seed = static_cast<std::uint64_t>(s);
  }
  if (doc.has("dataset.root")) c.dataset_root = resolve(doc.get_string("dataset.root"));
  if (doc.has("dataset.validation")) c.validation = doc.get_string_array("dataset.validation");
  if (doc.has("architecture.widths")) {
    c.widths.clear();
    for (auto w : doc.get_integer_array("architecture.widths")) {
      if (w < 1) throw ConfigError("architecture.widths: entries must be positive");
      c.widths.push_back(static_cast<int>(w));
    }
    if (c.widths.empty()) throw ConfigError("architecture.widths: must not be empty");
  }
  auto& t = c.train;
  if (doc.has("train.loss")) t.loss = similarity::parse_loss_kind(doc.get_string("train.loss"));
  if (doc.has("train.epochs")) {
    const auto e = doc.get_integer("train.epochs");
    if (e < 0) throw ConfigError("train.epochs: must be >= 0");
    t.epochs = static_cast<int>(e);
  }
  if (doc.has("train.learning_rate")) t.learning_rate = doc.get_number("train.learning_rate");
  if (doc.has("train.lr_decay")) t.lr_decay = doc.get_number("train.lr_decay");
  if (doc.has("train.lr_decay_every")) t.lr_decay_every = positive_int("train.lr_decay_every");
  if (doc.has("train.batch_size")) t.batch_size = positive_int("train.batch_size");
  if (doc.has("train.patch_count")) t.patch_count = static_cast<std::size_t>(positive_int("train.patch_count"));
  if (doc.has("train.patch_size")) t.patch_size = positive_int("train.patch_size");
  if (doc.has("pyramid.orientations")) t.pyramid.orientations = positive_int("pyramid.orientations");
  if (doc.has("pyramid.scales")) t.pyramid.scales = positive_int("pyramid.scales");
  if (doc.has("cwssim.window")) t.cwssim.window = positive_int("cwssim.window");
  if (doc.has("cwssim.k")) t.cwssim.k = doc.get_number("cwssim.k");
  if (doc.has("cwssim.stride")) t.cwssim.stride = positive_int("cwssim.stride");

  auto& inf = c.inference;
  inf.patch_size = t.patch_size;
  if (doc.has("inference.patch_size")) inf.patch_size = positive_int("inference.patch_size");
  if (doc.has("inference.stride")) inf.stride = positive_int("inference.stride");
  if (doc.has("inference.fusion_scales")) {
    inf.fusion_scales.clear();
    for (auto s : doc.get_integer_array("inference.fusion_scales")) inf.fusion_scales.push_back(static_cast<int>(s));
  }
  if (doc.has("inference.window_stride")) inf.window_stride = positive_int("inference.window_stride");
  if (doc.has("inference.target_fpr")) inf.target_fpr = doc.get_number("inference.target_fpr");
  if (doc.has("inference.erode_radius")) {
    const auto r = doc.get_integer("inference.erode_radius");
    if (r < 0) throw ConfigError("inference.erode_radius: must be >= 0");
    inf.erode_radius = static_cast<int>(r);
  }
  if (doc.has("inference.post_process"))
    inf.post_process = pipeline::parse_post_process(doc.get_string("inference.post_process"));
  if (doc.has("output.dir")) c.output_dir = resolve(doc.get_string("output.dir"));
  if (doc.has("runtime.threads")) c.threads = positive_int("runtime.threads");
  if (doc.has("runtime.deterministic")) c.deterministic = doc.get_bool("runtime.deterministic");

  c.propagate();
  try {
    c.train.validate();
    c.inference.validate();
    c.architecture().validate();
    pyramid::subband_count(t.pyramid.orientations, t.pyramid.scales);
  } catch (const DomainError& e) {
    throw ConfigError(std::string("pyramid.scales: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.parent_path());
}

void RunConfig::propagate() {
  if (deterministic) threads = 1;
  train.seed = seed;
  train.threads = threads;
  train.pyramid.rows = train.pyramid.cols = train.patch_size;
  inference.orientations = train.pyramid.orientations;
  inference.window = train.cwssim.window;
  inference.k = train.cwssim.k;
  inference.threads = threads;
}

std::string RunConfig::to_toml() const {
  std::ostringstream os;
  auto int_list = [](const std::vector<int>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
    return s + "]";
  };
  os << "seed = " << seed << "\n\n[dataset]\nroot = " << quote(dataset_root.string()) << "\nvalidation = [";
  for (std::size_t i = 0; i < validation.size(); ++i) os << (i ? ", " : "") << quote(validation[i]);
  os << "]\n\n[architecture]\nwidths = " << int_list(widths) << "\n\n[train]\n"
     << "loss = " << quote(similarity::to_string(train.loss)) << "\n"
     << "epochs = " << train.epochs << "\n"
     << "learning_rate = " << num(train.learning_rate) << "\n"
     << "lr_decay = " << num(train.lr_decay) << "\n"
     << "lr_decay_every = " << train.lr_decay_every << "\n"
     << "batch_size = " << train.batch_size << "\n"
     << "patch_count = " << train.patch_count << "\n"
     << "patch_size = " << train.patch_size << "\n\n[pyramid]\n"
     << "orientations = " << train.pyramid.orientations << "\n"
     << "scales = " << train.pyramid.scales << "\n\n[cwssim]\n"
     << "window = " << train.cwssim.window << "\n"
     << "k = " << num(train.cwssim.k) << "\n"
     << "stride = " << train.cwssim.stride << "\n\n[inference]\n"
     << "patch_size = " << inference.patch_size << "\n"
     << "stride = " << inference.stride << "\n"
     << "fusion_scales = " << int_list(inference.fusion_scales) << "\n"
     << "window_stride = " << inference.window_stride << "\n"
     << "target_fpr = " << num(inference.target_fpr) << "\n"
     << "erode_radius = " << inference.erode_radius << "\n"
     << "post_process = " << quote(pipeline::to_string(inference.post_process)) << "\n\n[output]\n"
     << "dir = " << quote(output_dir.string()) << "\n\n[runtime]\n"
     << "threads = " << threads << "\n"
     << "deterministic = " << (deterministic ? "true" : "false") << "\n";
  return os.str();
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_toml())));
  return buf;
}

}  // namespace texanom::config
