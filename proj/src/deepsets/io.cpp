#include <fstream>
#include <sstream>

#include "sfr/deepsets.hpp"

namespace sfr {

using nlohmann::json;

json dense_to_json(const Dense& layer) {
    json w = json::array(), b = json::array();
    for (Eigen::Index i = 0; i < layer.w.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < layer.w.cols(); ++j) row.push_back(layer.w(i, j));
        w.push_back(std::move(row));
    }
    for (Eigen::Index j = 0; j < layer.b.cols(); ++j) b.push_back(layer.b(0, j));
    return {{"in", layer.in()}, {"out", layer.out()}, {"w", w}, {"b", b}};
}

Dense dense_from_json(const json& doc) {
    try {
        const int in = doc.at("in").get<int>(), out = doc.at("out").get<int>();
        const auto& w = doc.at("w");
        const auto& b = doc.at("b");
        if (in <= 0 || out <= 0 || static_cast<int>(w.size()) != in || static_cast<int>(b.size()) != out)
            throw FormatError("layer shape does not match its data");
        Dense layer;
        layer.w.resize(in, out);
        layer.b.resize(1, out);
        for (int i = 0; i < in; ++i) {
            if (static_cast<int>(w[i].size()) != out) throw FormatError("layer shape does not match its data");
            for (int j = 0; j < out; ++j) layer.w(i, j) = w[i][j].get<double>();
        }
        for (int j = 0; j < out; ++j) layer.b(0, j) = b[j].get<double>();
        return layer;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed layer: ") + e.what());
    }
}

namespace {

json layers_to_json(const std::vector<Dense>& layers) {
    json a = json::array();
    for (const auto& l : layers) a.push_back(dense_to_json(l));
    return a;
}

std::vector<Dense> layers_from_json(const json& a) {
    std::vector<Dense> out;
    for (const auto& l : a) out.push_back(dense_from_json(l));
    return out;
}

}  // namespace

json model_to_json(const EquivariantModel& model) {
    json body = {
        {"encoder", layers_to_json(model.encoder)},
        {"h", dense_to_json(model.h)},
        {"rho", dense_to_json(model.rho)},
        {"decoder", layers_to_json(model.decoder)},
    };
    json header = {
        {"version", kModelFormatVersion},
        {"d", model.d},
        {"m", model.m},
        {"n_g", model.n_g},
        {"padded", model.padded},
        {"activation", to_string(model.activation)},
        {"dropout", model.dropout},
        {"flat_dim", model.flat_dim()},
        {"stats",
         {{"mag_mean", model.stats.mag_mean},
          {"mag_std", model.stats.mag_std},
          {"dp_mean", model.stats.dp_mean},
          {"dp_std", model.stats.dp_std}}},
    };
    return {{"header", header}, {"body", body}, {"checksum", fnv1a_hex(body.dump())}};
}

EquivariantModel model_from_json(const json& doc) {
    try {
        const auto& header = doc.at("header");
        const int version = header.at("version").get<int>();
        if (version != kModelFormatVersion)
            throw FormatError("unsupported model format version " + std::to_string(version) + " (expected " +
                              std::to_string(kModelFormatVersion) + ")");
        const auto& body = doc.at("body");
        if (doc.at("checksum").get<std::string>() != fnv1a_hex(body.dump()))
            throw FormatError("model checksum mismatch");

        EquivariantModel m;
        m.d = header.at("d").get<int>();
        m.m = header.at("m").get<int>();
        m.n_g = header.at("n_g").get<int>();
        m.padded = header.at("padded").get<bool>();
        m.activation = activation_from_string(header.at("activation").get<std::string>());
        m.dropout = header.at("dropout").get<double>();
        const auto& s = header.at("stats");
        m.stats.mag_mean = s.at("mag_mean").get<double>();
        m.stats.mag_std = s.at("mag_std").get<double>();
        m.stats.dp_mean = s.at("dp_mean").get<double>();
        m.stats.dp_std = s.at("dp_std").get<double>();
        if (header.at("flat_dim").get<int>() != m.flat_dim()) throw FormatError("flat feature width mismatch");
        m.encoder = layers_from_json(body.at("encoder"));
        m.h = dense_from_json(body.at("h"));
        m.rho = dense_from_json(body.at("rho"));
        m.decoder = layers_from_json(body.at("decoder"));

        // Shape chain.
        if (m.encoder.empty() || m.decoder.empty()) throw FormatError("model has no encoder or decoder layers");
        int width = 2;
        for (const auto& l : m.encoder) {
            if (l.in() != width) throw FormatError("encoder layer shapes do not chain");
            width = l.out();
        }
        if (width != m.d || m.h.in() != m.flat_dim() || m.h.out() != m.d || m.rho.in() != 2 * m.d ||
            m.rho.out() != m.d)
            throw FormatError("context layer shapes do not match the header");
        width = 2 * m.d;
        for (const auto& l : m.decoder) {
            if (l.in() != width) throw FormatError("decoder layer shapes do not chain");
            width = l.out();
        }
        if (width != 3) throw FormatError("decoder must end in three outputs");
        return m;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed model file: ") + e.what());
    } catch (const ValidationError& e) {
        throw FormatError(std::string("malformed model file: ") + e.what());
    }
}

void save_model(const EquivariantModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << model_to_json(model).dump(1) << '\n';
    if (!out) throw Error("write failed for " + path.string());
}

EquivariantModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    json doc;
    try {
        doc = json::parse(ss.str());
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return model_from_json(doc);
}

}  // namespace sfr
