#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mibci/config.hpp"
#include "mibci/core.hpp"
#include "mibci/pipeline.hpp"

// Layout: "MIMODEL1", u32 LE header length, JSON header, then float64 LE
// row-major blocks in the order listed under "blocks" in the header.
// Filter cascades are redesigned from the band edges on load.

namespace mibci::model_io {

inline constexpr std::string_view kModelMagic{"MIMODEL1", 8};
inline constexpr int kFormatVersion = 1;

namespace detail {

inline std::uint64_t to_little(std::uint64_t v) noexcept {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

inline std::uint32_t to_little32(std::uint32_t v) noexcept {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
  return v;
}

struct BlockWriter {
  nlohmann::json index = nlohmann::json::array();
  std::vector<std::uint64_t> payload;

  void add(const std::string& name, const Matrix& m) {
    index.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double v = m(r, c);
        payload.push_back(to_little(std::bit_cast<std::uint64_t>(v)));
      }
  }
  void add(const std::string& name, const Vector& v) { add(name, Matrix(v.transpose())); }
};

class BlockReader {
 public:
  BlockReader(const nlohmann::json& index, std::vector<std::uint64_t> payload)
      : index_(index), payload_(std::move(payload)) {}

  Matrix next(const std::string& expected) {
    if (pos_ >= index_.size()) throw DataError("model is missing block '" + expected + "'");
    const auto& entry = index_.at(pos_++);
    if (entry.at("name").get<std::string>() != expected)
      throw DataError("model block order: expected '" + expected + "', found '" +
                      entry.at("name").get<std::string>() + "'");
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    if (rows < 0 || cols < 0 || offset_ + static_cast<std::size_t>(rows * cols) > payload_.size())
      throw DataError("model block '" + expected + "' exceeds the payload");
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        m(r, c) = std::bit_cast<double>(to_little(payload_[offset_++]));
    return m;
  }

  Vector next_vector(const std::string& expected) {
    const Matrix m = next(expected);
    if (m.rows() != 1 && m.size() != 0) throw DataError("model block '" + expected + "' is not a vector");
    return m.size() == 0 ? Vector() : Vector(m.row(0).transpose());
  }

  void finish() const {
    if (pos_ != index_.size() || offset_ != payload_.size())
      throw DataError("model has trailing blocks or bytes");
  }

 private:
  const nlohmann::json& index_;
  std::vector<std::uint64_t> payload_;
  std::size_t pos_ = 0;
  std::size_t offset_ = 0;
};

inline std::string leaf_name(const char* prefix, std::size_t i) {
  return std::string(prefix) + "/" + std::to_string(i);
}

}  // namespace detail

inline void save_model(const pipeline::TrainedModel& model, const std::filesystem::path& path) {
  const auto& ex = model.extractor;
  const auto& svm = model.svm;
  detail::BlockWriter blocks;

  nlohmann::json header;
  header["format_version"] = kFormatVersion;
  header["config"] = to_json(model.config);
  header["geometry"] = {{"fs", ex.fs}, {"n_channels", ex.n_channels}, {"n_samples", ex.n_samples}};
  header["feature_dim"] = model.feature_dim();
  header["train_time_s"] = model.train_time_s;

  nlohmann::json pairs = nlohmann::json::array();
  if (ex.kind == FeatureKind::csp) {
    for (std::size_t i = 0; i < ex.banks.size(); ++i) {
      blocks.add(detail::leaf_name("csp", i), ex.banks[i].filters);
      pairs.push_back(ex.banks[i].pair_of);
    }
  } else {
    for (std::size_t b = 0; b < ex.refs.size(); ++b)
      blocks.add(detail::leaf_name("ref", b), ex.refs[b].reference().matrix());
  }
  header["csp_pairs"] = pairs;

  header["svm"] = {{"kernel", std::string(svm::to_string(svm.kernel))},
                   {"gamma", svm.gamma},
                   {"degree", svm.degree},
                   {"coef0", svm.coef0},
                   {"c", svm.c},
                   {"classes", svm.classes},
                   {"max_gap", svm.max_gap},
                   {"converged", svm.converged}};
  blocks.add("svm/mean", svm.standardizer.mean);
  blocks.add("svm/scale", svm.standardizer.scale);
  if (svm.kernel == svm::KernelKind::linear) {
    blocks.add("svm/weights", svm.weights);
  } else {
    blocks.add("svm/support_vectors", svm.support_vectors);
    blocks.add("svm/dual_coef", svm.dual_coef);
  }
  blocks.add("svm/bias", svm.bias);

  header["cv"] = {{"grid", model.cv.grid},
                  {"k_folds", model.cv.k_folds},
                  {"selected_index", model.cv.selected_index},
                  {"selected_c", model.cv.selected_c},
                  {"mean_accuracy", std::vector<double>(model.cv.mean_accuracy.data(),
                                                        model.cv.mean_accuracy.data() +
                                                            model.cv.mean_accuracy.size())}};
  header["blocks"] = blocks.index;

  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(kModelMagic.data(), static_cast<std::streamsize>(kModelMagic.size()));
  const std::uint32_t len = detail::to_little32(static_cast<std::uint32_t>(text.size()));
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(blocks.payload.data()),
            static_cast<std::streamsize>(blocks.payload.size() * sizeof(std::uint64_t)));
  if (!out) throw DataError("write failed for " + path.string());
}

inline pipeline::TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file " + path.string());
  std::string magic(kModelMagic.size(), '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (!in || magic != kModelMagic) throw DataError("not a model file (bad magic): " + path.string());
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in) throw DataError("truncated model header");
  len = detail::to_little32(len);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated model header");
  const std::vector<char> rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (rest.size() % sizeof(std::uint64_t) != 0) throw DataError("model payload is not whole float64 values");
  std::vector<std::uint64_t> payload(rest.size() / sizeof(std::uint64_t));
  std::memcpy(payload.data(), rest.data(), rest.size());

  pipeline::TrainedModel model;
  try {
    const auto header = nlohmann::json::parse(text);
    if (header.at("format_version").get<int>() != kFormatVersion)
      throw DataError("unsupported model format version");
    model.config = config_from_json(header.at("config"));
    model.train_time_s = header.at("train_time_s").get<double>();
    detail::BlockReader blocks(header.at("blocks"), std::move(payload));

    auto& ex = model.extractor;
    const auto& geometry = header.at("geometry");
    ex.kind = model.config.feature;
    ex.fs = geometry.at("fs").get<double>();
    ex.n_channels = geometry.at("n_channels").get<int>();
    ex.n_samples = geometry.at("n_samples").get<int>();
    ex.cov_epsilon = model.config.cov_epsilon;
    ex.windows = model.config.window_list();
    ex.bands = model.config.band_list();
    for (const auto& b : ex.bands) ex.cascades.push_back(dsp::design_butter_bandpass(b, ex.fs));

    if (ex.kind == FeatureKind::csp) {
      const auto& pairs = header.at("csp_pairs");
      for (std::size_t i = 0; i < ex.n_leaves(); ++i) {
        csp::CspBank bank;
        const auto leaf = ex.leaf(i);
        bank.window = leaf.window;
        bank.band = leaf.band;
        bank.filters = blocks.next(detail::leaf_name("csp", i));
        bank.pair_of = pairs.at(i).get<std::vector<std::pair<int, int>>>();
        ex.banks.push_back(std::move(bank));
      }
    } else {
      for (std::size_t b = 0; b < ex.bands.size(); ++b)
        ex.refs.emplace_back(static_cast<int>(b), *model.config.mean,
                             spd::SpdMatrix(blocks.next(detail::leaf_name("ref", b))));
    }

    auto& svm = model.svm;
    const auto& meta = header.at("svm");
    svm.kernel = svm::parse_kernel(meta.at("kernel").get<std::string>());
    svm.gamma = meta.at("gamma").get<double>();
    svm.degree = meta.at("degree").get<int>();
    svm.coef0 = meta.at("coef0").get<double>();
    svm.c = meta.at("c").get<double>();
    svm.classes = meta.at("classes").get<std::vector<int>>();
    svm.max_gap = meta.at("max_gap").get<double>();
    svm.converged = meta.at("converged").get<bool>();
    svm.standardizer.mean = blocks.next_vector("svm/mean");
    svm.standardizer.scale = blocks.next_vector("svm/scale");
    if (svm.kernel == svm::KernelKind::linear) {
      svm.weights = blocks.next("svm/weights");
    } else {
      svm.support_vectors = blocks.next("svm/support_vectors");
      svm.dual_coef = blocks.next("svm/dual_coef");
    }
    svm.bias = blocks.next_vector("svm/bias");
    blocks.finish();

    const auto& cv = header.at("cv");
    model.cv.grid = cv.at("grid").get<std::vector<double>>();
    model.cv.k_folds = cv.at("k_folds").get<int>();
    model.cv.selected_index = cv.at("selected_index").get<std::size_t>();
    model.cv.selected_c = cv.at("selected_c").get<double>();
    const auto means = cv.at("mean_accuracy").get<std::vector<double>>();
    model.cv.mean_accuracy = Eigen::Map<const Vector>(means.data(), static_cast<Eigen::Index>(means.size()));

    if (header.at("feature_dim").get<Eigen::Index>() != model.feature_dim() ||
        svm.n_features() != model.feature_dim())
      throw DataError("model feature dimension is inconsistent");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model header: ") + e.what());
  }
  return model;
}

}  // namespace mibci::model_io
