#include "pathomil/model_io.hpp"

#include <cstring>

#include <nlohmann/json.hpp>

#include "pathomil/errors.hpp"
#include "pathomil/io_util.hpp"

namespace pathomil {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'P', 'M', 'D', '1'};

json param_table(std::vector<ParamView> views) {
  json table = json::array();
  for (const ParamView& v : views) {
    table.push_back({{"name", v.name}, {"rows", v.rows}, {"cols", v.cols}});
  }
  return table;
}

void append_blobs(std::vector<uint8_t>& out, std::vector<ParamView> views) {
  for (const ParamView& v : views) {
    for (size_t i = 0; i < v.size(); ++i) {
      put_f32le(out, static_cast<float>(v.data[i]));
    }
  }
}

void read_blobs(ByteReader& r, std::vector<ParamView> views, const json& table) {
  if (table.size() != views.size()) {
    throw FormatError("model header declares " + std::to_string(table.size()) +
                      " tensors, model kind requires " +
                      std::to_string(views.size()));
  }
  for (size_t i = 0; i < views.size(); ++i) {
    const ParamView& v = views[i];
    const json& t = table[i];
    if (t.at("name").get<std::string>() != v.name ||
        t.at("rows").get<size_t>() != v.rows ||
        t.at("cols").get<size_t>() != v.cols) {
      throw FormatError("model header tensor " + std::to_string(i) +
                        " does not match expected " + v.name);
    }
    for (size_t j = 0; j < v.size(); ++j) {
      v.data[j] = static_cast<double>(r.f32le(v.name.c_str()));
    }
  }
}

}  // namespace

std::vector<uint8_t> serialize_model(const MilModel& model, uint64_t seed) {
  json header;
  header["seed"] = seed;
  std::vector<uint8_t> blobs;
  if (const auto* clam = std::get_if<ClamSBParams>(&model)) {
    header["kind"] = model_kind_name(ModelKind::kClamSB);
    header["dims"] = {{"feat_dim", clam->dims.feat_dim},
                      {"encoder_dim", clam->dims.encoder_dim},
                      {"attention_hidden", clam->dims.attention_hidden},
                      {"classifier_hidden", clam->dims.classifier_hidden},
                      {"n_classes", clam->dims.n_classes},
                      {"instance_out", clam->dims.instance_out}};
    header["dropout_rate"] = clam->dropout_rate;
    auto views = const_cast<ClamSBParams*>(clam)->views();
    header["params"] = param_table(views);
    append_blobs(blobs, views);
  } else {
    const auto& abmil = std::get<AbmilParams>(model);
    header["kind"] = model_kind_name(ModelKind::kAbmil);
    header["dims"] = {{"feat_dim", abmil.dims.feat_dim},
                      {"n_heads", abmil.dims.n_heads},
                      {"head_hidden", abmil.dims.head_hidden},
                      {"bottleneck_dim", abmil.dims.bottleneck_dim},
                      {"n_classes", abmil.dims.n_classes}};
    header["dropout_rate"] = abmil.dropout_rate;
    auto views = const_cast<AbmilParams&>(abmil).views();
    header["params"] = param_table(views);
    append_blobs(blobs, views);
  }

  std::string header_text = header.dump();
  std::vector<uint8_t> out;
  out.reserve(8 + header_text.size() + blobs.size());
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32le(out, static_cast<uint32_t>(header_text.size()));
  out.insert(out.end(), header_text.begin(), header_text.end());
  out.insert(out.end(), blobs.begin(), blobs.end());
  return out;
}

MilModel deserialize_model(const std::vector<uint8_t>& bytes,
                           uint64_t* seed_out) {
  ByteReader r{bytes.data(), bytes.size()};
  std::string magic = r.bytes(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw FormatError("bad model magic (expected PMD1)");
  }
  uint32_t header_len = r.u32le("header length");
  std::string header_text = r.bytes(header_len, "JSON header");
  json header = json::parse(header_text, nullptr, false);
  if (header.is_discarded()) {
    throw FormatError("model JSON header does not parse");
  }
  if (seed_out != nullptr) {
    *seed_out = header.value("seed", uint64_t{0});
  }
  std::string kind = header.at("kind").get<std::string>();
  const json& dims = header.at("dims");
  const json& table = header.at("params");

  auto finish = [&bytes](ByteReader& rd) {
    if (rd.pos != bytes.size()) {
      throw FormatError("model: " + std::to_string(bytes.size() - rd.pos) +
                        " trailing bytes after tensor payload");
    }
  };

  if (kind == model_kind_name(ModelKind::kClamSB)) {
    ClamDims d;
    d.feat_dim = dims.at("feat_dim").get<size_t>();
    d.encoder_dim = dims.at("encoder_dim").get<size_t>();
    d.attention_hidden = dims.at("attention_hidden").get<size_t>();
    d.classifier_hidden = dims.at("classifier_hidden").get<size_t>();
    d.n_classes = dims.at("n_classes").get<size_t>();
    d.instance_out = dims.at("instance_out").get<size_t>();
    RngStream unused(0);
    ClamSBParams p = ClamSBParams::init(d, header.value("dropout_rate", 0.0),
                                        unused);
    read_blobs(r, p.views(), table);
    finish(r);
    return p;
  }
  if (kind == model_kind_name(ModelKind::kAbmil)) {
    AbmilDims d;
    d.feat_dim = dims.at("feat_dim").get<size_t>();
    d.n_heads = dims.at("n_heads").get<size_t>();
    d.head_hidden = dims.at("head_hidden").get<size_t>();
    d.bottleneck_dim = dims.at("bottleneck_dim").get<size_t>();
    d.n_classes = dims.at("n_classes").get<size_t>();
    RngStream unused(0);
    AbmilParams p = AbmilParams::init(d, header.value("dropout_rate", 0.0),
                                      unused);
    read_blobs(r, p.views(), table);
    finish(r);
    return p;
  }
  throw FormatError("unknown model kind: " + kind);
}

void save_model(const MilModel& model, uint64_t seed, const std::string& path) {
  write_file_atomic(path, serialize_model(model, seed));
}

MilModel load_model(const std::string& path, uint64_t* seed_out) {
  return deserialize_model(read_file(path), seed_out);
}

}  // namespace pathomil
