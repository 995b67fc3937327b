#include "headkd/importance.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "headkd/datagen.hpp"
#include "headkd/error.hpp"
#include "headkd/ops.hpp"
#include "headkd/random.hpp"

namespace headkd {

nlohmann::json CalibrationConfig::to_json() const {
  return {{"num_batches", num_batches},
          {"batch_size", batch_size},
          {"split", split == CalibrationSplit::Train ? "train" : "validation"},
          {"seed", seed},
          {"normalize_per_site", normalize_per_site}};
}

CalibrationConfig CalibrationConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"num_batches", "batch_size", "split", "seed", "normalize_per_site"};
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ConfigError("unknown calibration key '" + k + "'");
  }
  CalibrationConfig c;
  try {
    c.num_batches = j.value("num_batches", c.num_batches);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.normalize_per_site = j.value("normalize_per_site", c.normalize_per_site);
    const auto split = j.value("split", std::string("train"));
    if (split == "train") {
      c.split = CalibrationSplit::Train;
    } else if (split == "validation") {
      c.split = CalibrationSplit::Validation;
    } else {
      throw ConfigError("calibration split must be 'train' or 'validation', got '" + split + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("calibration config: ") + e.what());
  }
  if (c.num_batches == 0 || c.batch_size == 0) throw ConfigError("calibration needs at least one batch of one example");
  return c;
}

double weight_norm(const Model& model, const AttentionSite& site, int head) {
  const auto& w = model.attention(site);
  auto it = std::find(w.heads.begin(), w.heads.end(), head);
  if (it == w.heads.end()) throw IndexError("head " + std::to_string(head) + " not present at " + site.str());
  const auto i = static_cast<std::size_t>(it - w.heads.begin());
  double total = 0.0;
  for (const Var* m : {&w.query[i], &w.key[i], &w.value[i]}) {
    for (double v : m->value().data()) total += std::abs(v);
  }
  return total / static_cast<double>(model.config().head_dim());
}

double row_entropy(std::span<const double> row) {
  double h = 0.0;
  for (double a : row) {
    if (a > 0.0) h -= a * std::log(std::max(a, kProbEpsilon));
  }
  return h;
}

void EntropyAccumulator::add(std::span<const double> maps, std::size_t batch, std::size_t q_len, std::size_t kv_len,
                             std::span<const std::uint8_t> query_valid, std::span<const std::uint8_t> key_valid) {
  if (maps.size() != batch * q_len * kv_len || query_valid.size() != batch * q_len ||
      key_valid.size() != batch * kv_len) {
    throw DimensionError("attention capture does not match its masks");
  }
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t q = 0; q < q_len; ++q) {
      if (!query_valid[b * q_len + q]) continue;
      const double* row = maps.data() + (b * q_len + q) * kv_len;
      double h = 0.0;
      for (std::size_t k = 0; k < kv_len; ++k) {
        if (key_valid[b * kv_len + k] && row[k] > 0.0) h -= row[k] * std::log(std::max(row[k], kProbEpsilon));
      }
      sum_ += h;
      ++rows_;
    }
  }
}

double EntropyAccumulator::mean() const {
  if (rows_ == 0) throw CalibrationError("no unmasked query rows in the calibration captures");
  return sum_ / static_cast<double>(rows_);
}

double attention_entropy(std::span<const double> maps, std::size_t batch, std::size_t q_len, std::size_t kv_len,
                         std::span<const std::uint8_t> query_valid, std::span<const std::uint8_t> key_valid) {
  EntropyAccumulator acc;
  acc.add(maps, batch, q_len, kv_len, query_valid, key_valid);
  return acc.mean();
}

std::size_t ImportanceMatrix::total_heads() const {
  std::size_t n = 0;
  for (const auto& s : sites) n += s.heads.size();
  return n;
}

nlohmann::json ImportanceMatrix::to_json() const {
  nlohmann::json out{{"layers", layers}, {"alpha", alpha}, {"normalized", normalized}, {"sites", nlohmann::json::array()}};
  for (const auto& s : sites) {
    nlohmann::json heads = nlohmann::json::array();
    for (const auto& h : s.heads) heads.push_back({{"head", h.head}, {"w", h.w}, {"H", h.H}, {"S", h.S}});
    out["sites"].push_back({{"kind", site_kind_name(s.site.kind)}, {"layer", s.site.layer}, {"heads", heads}});
  }
  return out;
}

ImportanceMatrix ImportanceMatrix::from_json(const nlohmann::json& j) {
  ImportanceMatrix m;
  try {
    m.layers = j.at("layers").get<std::size_t>();
    m.alpha = j.at("alpha").get<double>();
    m.normalized = j.value("normalized", false);
    m.sites.resize(kSiteKinds * m.layers);
    std::vector<bool> seen(m.sites.size(), false);
    for (const auto& rec : j.at("sites")) {
      AttentionSite site{parse_site_kind(rec.at("kind").get<std::string>()), rec.at("layer").get<std::size_t>()};
      if (site.layer >= m.layers || seen[site.index(m.layers)]) throw FormatError("bad site record " + site.str());
      seen[site.index(m.layers)] = true;
      auto& s = m.sites[site.index(m.layers)];
      s.site = site;
      for (const auto& h : rec.at("heads")) {
        s.heads.push_back({h.at("head").get<int>(), h.at("w").get<double>(), h.at("H").get<double>(), h.at("S").get<double>()});
      }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) throw FormatError("importance matrix is missing sites");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed importance matrix: ") + e.what());
  }
  return m;
}

namespace {

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(alpha));
}

void combine(ImportanceMatrix& m) {
  for (auto& s : m.sites) {
    if (!m.normalized) {
      for (auto& h : s.heads) h.S = m.alpha * h.w + (1.0 - m.alpha) * h.H;
      continue;
    }
    auto [wmin, wmax] = std::minmax_element(s.heads.begin(), s.heads.end(),
                                            [](const HeadScore& a, const HeadScore& b) { return a.w < b.w; });
    auto [hmin, hmax] = std::minmax_element(s.heads.begin(), s.heads.end(),
                                            [](const HeadScore& a, const HeadScore& b) { return a.H < b.H; });
    const double w0 = wmin->w, wr = wmax->w - wmin->w, h0 = hmin->H, hr = hmax->H - hmin->H;
    for (auto& h : s.heads) {
      const double wn = wr > 0.0 ? (h.w - w0) / wr : 0.0;
      const double hn = hr > 0.0 ? (h.H - h0) / hr : 0.0;
      h.S = m.alpha * wn + (1.0 - m.alpha) * hn;
    }
  }
}

}  // namespace

ImportanceMatrix with_alpha(const ImportanceMatrix& scores, double alpha) {
  check_alpha(alpha);
  ImportanceMatrix m = scores;
  m.alpha = alpha;
  combine(m);
  return m;
}

ImportanceMatrix importance_scores(const Model& model, std::span<const EncodedExample> examples,
                                   const CalibrationConfig& calib, double alpha) {
  check_alpha(alpha);
  const std::size_t needed = calib.num_batches * calib.batch_size;
  if (needed == 0) throw ConfigError("calibration needs at least one batch of one example");
  if (needed > examples.size()) {
    throw ConfigError("calibration wants " + std::to_string(needed) + " examples but the split has " +
                      std::to_string(examples.size()));
  }
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(calib.seed);
  shuffle(order, rng);

  const std::size_t layers = model.config().layers;
  const auto sites = all_sites(layers);
  const auto layout = model.layout();
  std::vector<std::vector<EntropyAccumulator>> acc(sites.size());
  for (std::size_t s = 0; s < sites.size(); ++s) acc[s].resize(layout.heads[s].size());

  NoGradGuard no_grad;
  for (std::size_t b = 0; b < calib.num_batches; ++b) {
    std::span<const std::size_t> idx(order.data() + b * calib.batch_size, calib.batch_size);
    const Batch batch = make_batch(examples, idx);
    const auto out = forward(model, batch, true);
    for (const auto& cap : out.attention) {
      const bool enc_queries = cap.site.kind == SiteKind::EncoderSelf;
      const bool enc_keys = cap.site.kind != SiteKind::DecoderSelf;
      const auto& qv = enc_queries ? batch.source_valid : batch.target_valid;
      const auto& kv = enc_keys ? batch.source_valid : batch.target_valid;
      const auto& shape = cap.probs.shape();  // [B, H, Tq, Tk]
      const std::size_t H = shape[1], Tq = shape[2], Tk = shape[3];
      const auto probs = cap.probs.value().data();
      std::vector<double> head_maps(batch.size * Tq * Tk);
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t r = 0; r < batch.size; ++r) {
          std::copy_n(probs.begin() + static_cast<std::ptrdiff_t>(((r * H + h) * Tq) * Tk), Tq * Tk,
                      head_maps.begin() + static_cast<std::ptrdiff_t>(r * Tq * Tk));
        }
        acc[cap.site.index(layers)][h].add(head_maps, batch.size, Tq, Tk, qv, kv);
      }
    }
  }

  ImportanceMatrix m;
  m.layers = layers;
  m.alpha = alpha;
  m.normalized = calib.normalize_per_site;
  for (std::size_t s = 0; s < sites.size(); ++s) {
    SiteScores site_scores{sites[s], {}};
    for (std::size_t h = 0; h < layout.heads[s].size(); ++h) {
      const int head = layout.heads[s][h];
      site_scores.heads.push_back({head, weight_norm(model, sites[s], head), acc[s][h].mean(), 0.0});
    }
    m.sites.push_back(std::move(site_scores));
  }
  combine(m);
  return m;
}

}  // namespace headkd
