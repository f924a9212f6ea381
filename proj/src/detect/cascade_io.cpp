#include <algorithm>
#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hcnf/core/error.hpp"
#include "hcnf/detect/cascade.hpp"
#include "json.hpp"

namespace hcnf::detect {

void Cascade::validate() const {
  HCNF_REQUIRE(window_w > 0 && window_h > 0, "cascade window must be positive");
  for (std::size_t s = 0; s < stages.size(); ++s)
    for (std::size_t k = 0; k < stages[s].stumps.size(); ++k) {
      const auto& st = stages[s].stumps[k];
      const std::string at = "stage " + std::to_string(s) + " stump " + std::to_string(k);
      HCNF_REQUIRE(st.feature.rects.size() >= 2 && st.feature.rects.size() <= 3, at + ": feature needs 2-3 rects");
      HCNF_REQUIRE(std::isfinite(st.threshold) && std::isfinite(st.left) && std::isfinite(st.right),
                   at + ": non-finite stump value");
      for (const auto& r : st.feature.rects) {
        HCNF_REQUIRE(r.w > 0 && r.h > 0, at + ": empty rect");
        HCNF_REQUIRE(r.x >= 0 && r.y >= 0 && r.x + r.w <= window_w && r.y + r.h <= window_h,
                     at + ": rect outside the " + std::to_string(window_w) + "x" + std::to_string(window_h) +
                         " window");
        HCNF_REQUIRE(std::isfinite(r.weight), at + ": non-finite rect weight");
      }
    }
  for (std::size_t s = 0; s < stages.size(); ++s)
    HCNF_REQUIRE(std::isfinite(stages[s].threshold), "stage " + std::to_string(s) + ": non-finite threshold");
}

std::size_t Cascade::stump_count() const {
  std::size_t n = 0;
  for (const auto& s : stages) n += s.stumps.size();
  return n;
}

namespace {

using boost::property_tree::ptree;

bool is_meta(const std::string& key) { return key == "<xmlcomment>" || key == "<xmlattr>"; }

std::vector<std::string> tokens(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

double to_double(const std::string& tok, const std::string& where) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (tok.empty() || end != tok.c_str() + tok.size() || errno == ERANGE || !std::isfinite(v))
    throw ParseError(where, "expected a finite number, got '" + tok + "'");
  return v;
}

int to_int(const std::string& tok, const std::string& where) {
  errno = 0;
  char* end = nullptr;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (tok.empty() || end != tok.c_str() + tok.size() || errno == ERANGE || v < -1000000 || v > 1000000)
    throw ParseError(where, "expected an integer, got '" + tok + "'");
  return static_cast<int>(v);
}

const ptree& child(const ptree& t, const std::string& key, const std::string& where) {
  auto it = t.find(key);
  if (it == t.not_found()) throw ParseError(where, "missing element <" + key + ">");
  return it->second;
}

std::string text(const ptree& t, const std::string& key, const std::string& where) {
  return child(t, key, where).get_value<std::string>();
}

double number(const ptree& t, const std::string& key, const std::string& where) {
  auto toks = tokens(text(t, key, where));
  if (toks.size() != 1) throw ParseError(where + "/" + key, "expected one number");
  return to_double(toks[0], where + "/" + key);
}

// Elements of a sequence node, skipping comments and attributes.
std::vector<const ptree*> items(const ptree& t) {
  std::vector<const ptree*> out;
  for (const auto& [k, v] : t)
    if (!is_meta(k)) out.push_back(&v);
  return out;
}

std::vector<HaarRect> parse_rects(const ptree& rects, const std::string& where) {
  std::vector<HaarRect> out;
  int i = 0;
  for (const ptree* r : items(rects)) {
    const std::string at = where + "/rects[" + std::to_string(i++) + "]";
    auto t = tokens(r->get_value<std::string>());
    if (t.size() != 5) throw ParseError(at, "rect needs 5 fields 'x y w h weight', got " + std::to_string(t.size()));
    out.push_back({to_int(t[0], at), to_int(t[1], at), to_int(t[2], at), to_int(t[3], at), to_double(t[4], at)});
  }
  return out;
}

void reject_tilted(const ptree& feature, const std::string& where) {
  auto it = feature.find("tilted");
  if (it != feature.not_found() && to_int(it->second.get_value<std::string>(), where + "/tilted") != 0)
    throw ParseError(where + "/tilted", "tilted features are not supported");
}

// <stages><_><maxWeakCount/><stageThreshold/><weakClassifiers><_><internalNodes/><leafValues/>
// with a trailing <features> table.
Cascade parse_new_layout(const ptree& root, const std::string& src) {
  const std::string base = src + ":cascade";
  if (auto st = root.find("stageType"); st != root.not_found() && st->second.get_value<std::string>() != "BOOST")
    throw ParseError(base + "/stageType", "only BOOST cascades are supported");
  if (auto ft = root.find("featureType"); ft != root.not_found() && ft->second.get_value<std::string>() != "HAAR")
    throw ParseError(base + "/featureType", "only HAAR features are supported");
  Cascade c;
  c.window_w = to_int(text(root, "width", base), base + "/width");
  c.window_h = to_int(text(root, "height", base), base + "/height");

  std::vector<HaarFeature> features;
  int fi = 0;
  for (const ptree* f : items(child(root, "features", base))) {
    const std::string at = base + "/features[" + std::to_string(fi++) + "]";
    reject_tilted(*f, at);
    features.push_back({parse_rects(child(*f, "rects", at), at)});
  }

  int si = 0;
  for (const ptree* s : items(child(root, "stages", base))) {
    const std::string at = base + "/stages[" + std::to_string(si++) + "]";
    Stage stage;
    stage.threshold = number(*s, "stageThreshold", at);
    int wi = 0;
    for (const ptree* w : items(child(*s, "weakClassifiers", at))) {
      const std::string wat = at + "/weakClassifiers[" + std::to_string(wi++) + "]";
      auto nodes = tokens(text(*w, "internalNodes", wat));
      auto leaves = tokens(text(*w, "leafValues", wat));
      if (nodes.size() != 4 || leaves.size() != 2)
        throw ParseError(wat, "only single-split stumps are supported (" + std::to_string(nodes.size() / 4) +
                                  " split nodes, " + std::to_string(leaves.size()) + " leaves)");
      if (to_int(nodes[0], wat) != 0 || to_int(nodes[1], wat) != -1)
        throw ParseError(wat + "/internalNodes", "stump children must be leaves 0 and -1");
      const int idx = to_int(nodes[2], wat + "/internalNodes");
      if (idx < 0 || idx >= static_cast<int>(features.size()))
        throw ParseError(wat + "/internalNodes", "feature index " + std::to_string(idx) + " out of range");
      stage.stumps.push_back({features[idx], to_double(nodes[3], wat + "/internalNodes"),
                              to_double(leaves[0], wat + "/leafValues"), to_double(leaves[1], wat + "/leafValues")});
    }
    if (auto mw = s->find("maxWeakCount"); mw != s->not_found()) {
      const int declared = to_int(mw->second.get_value<std::string>(), at + "/maxWeakCount");
      if (declared != static_cast<int>(stage.stumps.size()))
        throw ParseError(at, "maxWeakCount " + std::to_string(declared) + " but " +
                                 std::to_string(stage.stumps.size()) + " weak classifiers");
    }
    c.stages.push_back(std::move(stage));
  }
  if (auto sn = root.find("stageNum"); sn != root.not_found()) {
    const int declared = to_int(sn->second.get_value<std::string>(), base + "/stageNum");
    if (declared != static_cast<int>(c.stages.size()))
      throw ParseError(base, "stageNum " + std::to_string(declared) + " but " + std::to_string(c.stages.size()) +
                                 " stages");
  }
  return c;
}

// <size>w h</size><stages><_><trees><_><_><feature><rects/></feature><threshold/>
// <left_val/><right_val/></_></_></trees><stage_threshold/></_></stages>
Cascade parse_legacy_layout(const ptree& root, const std::string& base) {
  Cascade c;
  auto size = tokens(text(root, "size", base));
  if (size.size() != 2) throw ParseError(base + "/size", "expected 'width height'");
  c.window_w = to_int(size[0], base + "/size");
  c.window_h = to_int(size[1], base + "/size");
  int si = 0;
  for (const ptree* s : items(child(root, "stages", base))) {
    const std::string at = base + "/stages[" + std::to_string(si++) + "]";
    Stage stage;
    stage.threshold = number(*s, "stage_threshold", at);
    int ti = 0;
    for (const ptree* tree : items(child(*s, "trees", at))) {
      const std::string tat = at + "/trees[" + std::to_string(ti++) + "]";
      auto nodes = items(*tree);
      if (nodes.size() != 1) throw ParseError(tat, "only single-node stumps are supported");
      const ptree& n = *nodes[0];
      if (n.find("left_node") != n.not_found() || n.find("right_node") != n.not_found())
        throw ParseError(tat, "only single-node stumps are supported");
      const ptree& f = child(n, "feature", tat);
      reject_tilted(f, tat + "/feature");
      stage.stumps.push_back({{parse_rects(child(f, "rects", tat + "/feature"), tat + "/feature")},
                              number(n, "threshold", tat),
                              number(n, "left_val", tat),
                              number(n, "right_val", tat)});
    }
    c.stages.push_back(std::move(stage));
  }
  return c;
}

Cascade parse_xml(const std::string& text_in, const std::string& src) {
  ptree doc;
  try {
    std::istringstream in(text_in);
    boost::property_tree::read_xml(in, doc);
  } catch (const boost::property_tree::xml_parser_error& e) {
    throw ParseError(src + ":" + std::to_string(e.line()), e.message());
  }
  auto storage = doc.find("opencv_storage");
  if (storage == doc.not_found()) throw ParseError(src, "missing <opencv_storage> root element");
  for (const auto& [key, node] : storage->second) {
    if (is_meta(key)) continue;
    if (node.find("weakClassifiers") != node.not_found() || node.find("features") != node.not_found())
      return parse_new_layout(node, src);
    if (node.find("size") != node.not_found()) return parse_legacy_layout(node, src + ":" + key);
    if (key == "cascade") return parse_new_layout(node, src);
    throw ParseError(src + ":" + key, "unrecognized cascade layout");
  }
  throw ParseError(src, "<opencv_storage> holds no cascade");
}

using nlohmann::json;

const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object()) throw ParseError(where, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(where, std::string("missing field \"") + key + "\"");
  return *it;
}

double jnum(const json& j, const char* key, const std::string& where) {
  const json& v = field(j, key, where);
  if (!v.is_number()) throw ParseError(where + "." + key, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ParseError(where + "." + key, "expected a finite number");
  return d;
}

int jint(const json& j, const char* key, const std::string& where) {
  const json& v = field(j, key, where);
  if (!v.is_number_integer()) throw ParseError(where + "." + key, "expected an integer");
  const auto i = v.get<std::int64_t>();
  if (i < -1000000 || i > 1000000) throw ParseError(where + "." + key, "integer out of range");
  return static_cast<int>(i);
}

const json& jarray(const json& j, const char* key, const std::string& where) {
  const json& v = field(j, key, where);
  if (!v.is_array()) throw ParseError(where + "." + key, "expected an array");
  return v;
}

Cascade parse_json(const std::string& text_in, const std::string& src) {
  json doc;
  try {
    doc = json::parse(text_in);
  } catch (const json::parse_error& e) {
    throw ParseError(src + ":byte " + std::to_string(e.byte), e.what());
  }
  Cascade c;
  const json& win = jarray(doc, "window", src);
  if (win.size() != 2 || !win[0].is_number_integer() || !win[1].is_number_integer())
    throw ParseError(src + ".window", "expected [width, height]");
  c.window_w = static_cast<int>(std::clamp<std::int64_t>(win[0].get<std::int64_t>(), -1, 1000000));
  c.window_h = static_cast<int>(std::clamp<std::int64_t>(win[1].get<std::int64_t>(), -1, 1000000));
  const json& stages = jarray(doc, "stages", src);
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const std::string at = src + ".stages[" + std::to_string(s) + "]";
    Stage stage;
    stage.threshold = jnum(stages[s], "threshold", at);
    const json& stumps = jarray(stages[s], "stumps", at);
    for (std::size_t k = 0; k < stumps.size(); ++k) {
      const std::string kat = at + ".stumps[" + std::to_string(k) + "]";
      WeakClassifier w;
      const json& rects = jarray(stumps[k], "rects", kat);
      for (std::size_t r = 0; r < rects.size(); ++r) {
        const std::string rat = kat + ".rects[" + std::to_string(r) + "]";
        w.feature.rects.push_back(
            {jint(rects[r], "x", rat), jint(rects[r], "y", rat), jint(rects[r], "w", rat), jint(rects[r], "h", rat),
             jnum(rects[r], "weight", rat)});
      }
      w.threshold = jnum(stumps[k], "threshold", kat);
      w.left = jnum(stumps[k], "left", kat);
      w.right = jnum(stumps[k], "right", kat);
      stage.stumps.push_back(std::move(w));
    }
    c.stages.push_back(std::move(stage));
  }
  return c;
}

}  // namespace

Cascade parse_cascade(const std::string& text_in, CascadeFormat format, const std::string& source) {
  if (format == CascadeFormat::automatic) {
    const auto p = text_in.find_first_not_of(" \t\r\n\xEF\xBB\xBF");
    if (p == std::string::npos) throw ParseError(source, "empty cascade file");
    format = text_in[p] == '{' ? CascadeFormat::native_json : CascadeFormat::opencv_xml;
  }
  Cascade c;
  try {
    c = format == CascadeFormat::native_json ? parse_json(text_in, source) : parse_xml(text_in, source);
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(source, e.what());
  }
  try {
    c.validate();
  } catch (const ContractError& e) {
    throw ParseError(source, e.what());
  }
  return c;
}

Cascade load_cascade(const std::filesystem::path& path, CascadeFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open cascade file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_cascade(buf.str(), format, path.string());
}

std::string to_native_json(const Cascade& c) {
  nlohmann::ordered_json doc;
  doc["window"] = {c.window_w, c.window_h};
  doc["stages"] = nlohmann::ordered_json::array();
  for (const auto& s : c.stages) {
    nlohmann::ordered_json stage;
    stage["threshold"] = s.threshold;
    stage["stumps"] = nlohmann::ordered_json::array();
    for (const auto& w : s.stumps) {
      nlohmann::ordered_json stump;
      stump["rects"] = nlohmann::ordered_json::array();
      for (const auto& r : w.feature.rects)
        stump["rects"].push_back({{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}, {"weight", r.weight}});
      stump["threshold"] = w.threshold;
      stump["left"] = w.left;
      stump["right"] = w.right;
      stage["stumps"].push_back(std::move(stump));
    }
    doc["stages"].push_back(std::move(stage));
  }
  return doc.dump(1) + "\n";
}

void save_cascade(const Cascade& cascade, const std::filesystem::path& path) {
  cascade.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write cascade file " + path.string());
  out << to_native_json(cascade);
  if (!out.flush()) throw IoError("failed writing cascade file " + path.string());
}

}  // namespace hcnf::detect
