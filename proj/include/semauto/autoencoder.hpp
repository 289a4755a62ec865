#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <memory>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "semauto/data.hpp"
#include "semauto/error.hpp"

namespace semauto {

// Hyperparameters of the per-user masked autoencoder. The activation is
// always the logistic sigmoid and there is no regularization term.
struct TrainConfig {
  std::size_t epochs = 1000;
  double learning_rate = 0.03;
  std::uint64_t seed = 0;
  // Off by default: the reconstruction loss covers every item, unrated ones with target 0.
  // When set, only rated items contribute.
  bool rated_only_loss = false;

  void validate() const {
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
  }
};

inline constexpr std::string_view kActivation = "sigmoid";
inline constexpr std::string_view kInitializer = "xavier_uniform";

// One-line echo of the effective hyperparameters, e.g. for logs.
inline std::string describe(const TrainConfig& c) {
  std::ostringstream out;
  out << "epochs=" << c.epochs << " lr=" << c.learning_rate << " activation=" << kActivation << " init=" << kInitializer
      << " regularization=none bias=none loss=" << (c.rated_only_loss ? "rated_items" : "all_items");
  return out.str();
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// User ratings over the catalog scaled to [0,1] (stars / 5). Unrated rows are 0.
class RatingVector {
 public:
  RatingVector() = default;
  explicit RatingVector(std::size_t items) : values_(items, 0.0), rated_mask_(items, false) {}

  // `stars` on the 0.5..5 scale.
  void set_stars(std::size_t row, double stars) {
    if (row >= values_.size()) throw ContractError("rating row out of range");
    if (!(stars > 0.0 && stars <= kMaxStars)) throw ContractError("rating outside (0, 5]");
    values_[row] = stars / kMaxStars;
    if (!rated_mask_[row]) {
      rated_mask_[row] = true;
      rated_.insert(std::upper_bound(rated_.begin(), rated_.end(), row), row);
    }
  }

  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t row) const { return values_[row]; }
  const std::vector<std::size_t>& rated() const { return rated_; }
  bool is_rated(std::size_t row) const { return rated_mask_.at(row); }

 private:
  std::vector<double> values_;
  std::vector<bool> rated_mask_;
  std::vector<std::size_t> rated_;
};

// Builds the rating vector of one user over a catalog; ratings of items outside
// the catalog are ignored.
inline RatingVector rating_vector(const Catalog& catalog, std::span<const RatingRecord> ratings) {
  RatingVector x(catalog.size());
  for (const auto& r : ratings)
    if (auto row = catalog.row_of(r.item)) x.set_stars(*row, r.rating);
  return x;
}

struct Activations {
  std::vector<double> hidden;  // length n
  std::vector<double> output;  // length m
};

// Gradients aligned with the mask entries: d_w1[e] = dE/dW1[i,j] and
// d_w2[e] = dE/dW2[j,i] for entry e = (i,j). Off-mask gradients are zero and
// are not materialized.
struct Gradients {
  std::vector<double> d_w1;
  std::vector<double> d_w2;
};

// Single-hidden-layer autoencoder whose connections are the mask entries.
// W1 is m x n (items -> features), W2 is n x m (features -> items); only the
// positions where the mask (resp. its transpose) is 1 are stored.
class UserAutoencoder {
 public:
  UserAutoencoder(std::shared_ptr<const MaskMatrix> mask, TrainConfig config)
      : mask_(std::move(mask)), config_(config), w1_(mask_->nnz(), 0.0), w2_(mask_->nnz(), 0.0) {}

  const MaskMatrix& mask() const { return *mask_; }
  std::shared_ptr<const MaskMatrix> mask_ptr() const { return mask_; }
  const TrainConfig& config() const { return config_; }
  std::size_t items() const { return mask_->rows(); }
  std::size_t features() const { return mask_->cols(); }

  std::span<double> w1() { return w1_; }
  std::span<double> w2() { return w2_; }
  std::span<const double> w1() const { return w1_; }
  std::span<const double> w2() const { return w2_; }

  bool trained() const { return trained_; }
  double final_loss() const { return final_loss_; }
  const std::vector<double>& loss_history() const { return loss_history_; }

  // Full m x n matrix W1 with zeros off the mask.
  std::vector<std::vector<double>> dense_w1() const {
    std::vector<std::vector<double>> d(items(), std::vector<double>(features(), 0.0));
    const auto& entries = mask_->entries();
    for (std::size_t e = 0; e < entries.size(); ++e) d[entries[e].first][entries[e].second] = w1_[e];
    return d;
  }

  // Full n x m matrix W2 with zeros off the transposed mask.
  std::vector<std::vector<double>> dense_w2() const {
    std::vector<std::vector<double>> d(features(), std::vector<double>(items(), 0.0));
    const auto& entries = mask_->entries();
    for (std::size_t e = 0; e < entries.size(); ++e) d[entries[e].second][entries[e].first] = w2_[e];
    return d;
  }

  void mark_trained(double final_loss, std::vector<double> history) {
    trained_ = true;
    final_loss_ = final_loss;
    loss_history_ = std::move(history);
  }

 private:
  std::shared_ptr<const MaskMatrix> mask_;
  TrainConfig config_;
  std::vector<double> w1_;
  std::vector<double> w2_;
  bool trained_ = false;
  double final_loss_ = 0.0;
  std::vector<double> loss_history_;
};

// Uniform double in [0,1) from the top 53 bits; identical across standard libraries.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double xavier_bound(std::size_t m, std::size_t n) { return std::sqrt(6.0 / static_cast<double>(m + n)); }

// Glorot-uniform initialization on the masked positions. W1 entries are drawn
// first, in mask-entry order, then W2.
inline UserAutoencoder init(std::shared_ptr<const MaskMatrix> mask, const TrainConfig& config) {
  if (!mask || mask->nnz() == 0) throw ContractError("cannot initialize an autoencoder on an empty mask");
  config.validate();
  UserAutoencoder ae(std::move(mask), config);
  const double bound = xavier_bound(ae.items(), ae.features());
  std::mt19937_64 rng(config.seed);
  for (auto& w : ae.w1()) w = -bound + 2.0 * bound * unit_uniform(rng);
  for (auto& w : ae.w2()) w = -bound + 2.0 * bound * unit_uniform(rng);
  return ae;
}

inline UserAutoencoder init(const MaskMatrix& mask, const TrainConfig& config) {
  return init(std::make_shared<const MaskMatrix>(mask), config);
}

inline Activations forward(const UserAutoencoder& ae, std::span<const double> x) {
  if (x.size() != ae.items())
    throw ContractError("forward: input length " + std::to_string(x.size()) + " != item count " + std::to_string(ae.items()));
  const auto& entries = ae.mask().entries();
  const auto w1 = ae.w1();
  const auto w2 = ae.w2();

  Activations act{std::vector<double>(ae.features(), 0.0), std::vector<double>(ae.items(), 0.0)};
  for (std::size_t e = 0; e < entries.size(); ++e) act.hidden[entries[e].second] += x[entries[e].first] * w1[e];
  for (auto& h : act.hidden) h = sigmoid(h);
  for (std::size_t e = 0; e < entries.size(); ++e) act.output[entries[e].first] += act.hidden[entries[e].second] * w2[e];
  for (auto& o : act.output) o = sigmoid(o);
  return act;
}

inline Activations forward(const UserAutoencoder& ae, const RatingVector& x) { return forward(ae, x.values()); }

// E = 1/2 * sum_i (x_i - o_i)^2
inline double loss(std::span<const double> x, std::span<const double> o) {
  if (x.size() != o.size()) throw ContractError("loss: length mismatch");
  double e = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) e += (x[i] - o[i]) * (x[i] - o[i]);
  return 0.5 * e;
}

// Loss restricted to the rated rows.
inline double rated_loss(const RatingVector& x, std::span<const double> o) {
  if (x.size() != o.size()) throw ContractError("loss: length mismatch");
  double e = 0.0;
  for (auto i : x.rated()) e += (x[i] - o[i]) * (x[i] - o[i]);
  return 0.5 * e;
}

inline double training_loss(const UserAutoencoder& ae, const RatingVector& x, std::span<const double> o) {
  return ae.config().rated_only_loss ? rated_loss(x, o) : loss(x.values(), o);
}

inline Gradients backward(const UserAutoencoder& ae, const RatingVector& x, const Activations& act) {
  if (x.size() != ae.items()) throw ContractError("backward: input length mismatch");
  const auto& entries = ae.mask().entries();
  const auto w2 = ae.w2();
  const auto& h = act.hidden;
  const auto& o = act.output;

  std::vector<double> delta_out(ae.items(), 0.0);
  for (std::size_t i = 0; i < ae.items(); ++i) {
    if (ae.config().rated_only_loss && !x.is_rated(i)) continue;
    delta_out[i] = (o[i] - x[i]) * o[i] * (1.0 - o[i]);
  }

  Gradients g{std::vector<double>(entries.size()), std::vector<double>(entries.size())};
  std::vector<double> delta_hidden(ae.features(), 0.0);
  for (std::size_t e = 0; e < entries.size(); ++e) {
    const auto [i, j] = entries[e];
    g.d_w2[e] = h[j] * delta_out[i];
    delta_hidden[j] += w2[e] * delta_out[i];
  }
  for (std::size_t j = 0; j < delta_hidden.size(); ++j) delta_hidden[j] *= h[j] * (1.0 - h[j]);
  for (std::size_t e = 0; e < entries.size(); ++e) g.d_w1[e] = x[entries[e].first] * delta_hidden[entries[e].second];
  return g;
}

inline Gradients backward(const UserAutoencoder& ae, const RatingVector& x) { return backward(ae, x, forward(ae, x)); }

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(std::size_t epoch, double max_abs_weight)
      : Error("training diverged at epoch " + std::to_string(epoch) + " (max |weight| = " + std::to_string(max_abs_weight) + ")"),
        epoch_(epoch),
        max_abs_weight_(max_abs_weight) {}
  std::size_t epoch() const { return epoch_; }
  double max_abs_weight() const { return max_abs_weight_; }

 private:
  std::size_t epoch_;
  double max_abs_weight_;
};

// Runs `epochs` full-gradient steps on the single rating vector x. Weights
// live only on the mask, so the masked update W <- (W o M) - r dE/dW is the
// plain update on the stored entries. loss_history()[t] is the loss after t
// steps (size epochs + 1).
inline void train(UserAutoencoder& ae, const RatingVector& x) {
  if (ae.trained()) throw ContractError("train: autoencoder already trained");
  if (x.size() != ae.items()) throw ContractError("train: input length mismatch");
  const auto& cfg = ae.config();
  std::vector<double> history;
  history.reserve(cfg.epochs + 1);

  auto max_abs_weight = [&] {
    double m = 0.0;
    for (double w : ae.w1()) m = std::max(m, std::abs(w));
    for (double w : ae.w2()) m = std::max(m, std::abs(w));
    return m;
  };

  auto act = forward(ae, x);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double e = training_loss(ae, x, act.output);
    if (!std::isfinite(e)) throw TrainingDiverged(epoch, max_abs_weight());
    history.push_back(e);
    const auto g = backward(ae, x, act);
    auto w1 = ae.w1();
    auto w2 = ae.w2();
    for (std::size_t k = 0; k < w1.size(); ++k) w1[k] -= cfg.learning_rate * g.d_w1[k];
    for (std::size_t k = 0; k < w2.size(); ++k) w2[k] -= cfg.learning_rate * g.d_w2[k];
    act = forward(ae, x);
  }
  const double final_loss = training_loss(ae, x, act.output);
  if (!std::isfinite(final_loss)) throw TrainingDiverged(cfg.epochs, max_abs_weight());
  history.push_back(final_loss);
  ae.mark_trained(final_loss, std::move(history));
}

// ---------------------------------------------------------------------------
// Dense reference path: materializes W1, W2 and M and applies the Hadamard
// products literally. Used to cross-check the sparse implementation.
// ---------------------------------------------------------------------------

class DenseAutoencoder {
 public:
  using Matrix = std::vector<std::vector<double>>;

  DenseAutoencoder(const MaskMatrix& mask, Matrix w1, Matrix w2, TrainConfig config)
      : m_(mask.rows()), n_(mask.cols()), mask_(mask.to_dense()), w1_(std::move(w1)), w2_(std::move(w2)), config_(config) {
    if (w1_.size() != m_ || w2_.size() != n_) throw ContractError("dense autoencoder: weight shape mismatch");
    for (auto& r : w1_)
      if (r.size() != n_) throw ContractError("dense autoencoder: W1 shape mismatch");
    for (auto& r : w2_)
      if (r.size() != m_) throw ContractError("dense autoencoder: W2 shape mismatch");
  }

  static DenseAutoencoder from(const UserAutoencoder& ae) {
    return DenseAutoencoder(ae.mask(), ae.dense_w1(), ae.dense_w2(), ae.config());
  }

  const Matrix& w1() const { return w1_; }
  const Matrix& w2() const { return w2_; }

  Activations forward(std::span<const double> x) const {
    Activations act{std::vector<double>(n_, 0.0), std::vector<double>(m_, 0.0)};
    for (std::size_t j = 0; j < n_; ++j) {
      double z = 0.0;
      for (std::size_t i = 0; i < m_; ++i) z += x[i] * (w1_[i][j] * mask_[i][j]);
      act.hidden[j] = sigmoid(z);
    }
    for (std::size_t i = 0; i < m_; ++i) {
      double z = 0.0;
      for (std::size_t j = 0; j < n_; ++j) z += act.hidden[j] * (w2_[j][i] * mask_[i][j]);
      act.output[i] = sigmoid(z);
    }
    return act;
  }

  // Dense gradients; off-mask entries come out zero through the chain rule.
  std::pair<Matrix, Matrix> backward(const RatingVector& x) const {
    const auto act = forward(x.values());
    std::vector<double> delta_out(m_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
      if (config_.rated_only_loss && !x.is_rated(i)) continue;
      delta_out[i] = (act.output[i] - x[i]) * act.output[i] * (1.0 - act.output[i]);
    }
    Matrix d_w2(n_, std::vector<double>(m_, 0.0));
    std::vector<double> delta_hidden(n_, 0.0);
    for (std::size_t j = 0; j < n_; ++j) {
      for (std::size_t i = 0; i < m_; ++i) {
        d_w2[j][i] = act.hidden[j] * delta_out[i] * mask_[i][j];
        delta_hidden[j] += (w2_[j][i] * mask_[i][j]) * delta_out[i];
      }
      delta_hidden[j] *= act.hidden[j] * (1.0 - act.hidden[j]);
    }
    Matrix d_w1(m_, std::vector<double>(n_, 0.0));
    for (std::size_t i = 0; i < m_; ++i)
      for (std::size_t j = 0; j < n_; ++j) d_w1[i][j] = x[i] * delta_hidden[j] * mask_[i][j];
    return {std::move(d_w1), std::move(d_w2)};
  }

  // W1 <- (W1 o M) - r dE/dW1 ; W2 <- (W2 o M^T) - r dE/dW2
  void step(const RatingVector& x) {
    auto [d_w1, d_w2] = backward(x);
    for (std::size_t i = 0; i < m_; ++i)
      for (std::size_t j = 0; j < n_; ++j) {
        w1_[i][j] = w1_[i][j] * mask_[i][j] - config_.learning_rate * d_w1[i][j];
        w2_[j][i] = w2_[j][i] * mask_[i][j] - config_.learning_rate * d_w2[j][i];
      }
  }

  void train(const RatingVector& x) {
    for (std::size_t t = 0; t < config_.epochs; ++t) step(x);
  }

  // Largest |weight| outside the mask in either matrix.
  double max_off_mask() const {
    double out = 0.0;
    for (std::size_t i = 0; i < m_; ++i)
      for (std::size_t j = 0; j < n_; ++j)
        if (!mask_[i][j]) out = std::max({out, std::abs(w1_[i][j]), std::abs(w2_[j][i])});
    return out;
  }

 private:
  std::size_t m_, n_;
  std::vector<std::vector<int>> mask_;
  Matrix w1_, w2_;
  TrainConfig config_;
};

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

// Text format:
//   semauto-model 1
//   m n seed epochs lr final_loss
//   W1 nnz        then `i j value` per entry
//   W2 nnz        then `j i value` per entry
// Values carry 17 significant digits so a save/load round trip is exact.
inline void save_model(std::ostream& out, const UserAutoencoder& ae) {
  const auto& cfg = ae.config();
  const auto& entries = ae.mask().entries();
  out << "semauto-model 1\n";
  out << std::setprecision(17);
  out << ae.items() << ' ' << ae.features() << ' ' << cfg.seed << ' ' << cfg.epochs << ' ' << cfg.learning_rate << ' '
      << ae.final_loss() << '\n';
  out << "W1 " << entries.size() << '\n';
  for (std::size_t e = 0; e < entries.size(); ++e) out << entries[e].first << ' ' << entries[e].second << ' ' << ae.w1()[e] << '\n';
  out << "W2 " << entries.size() << '\n';
  for (std::size_t e = 0; e < entries.size(); ++e) out << entries[e].second << ' ' << entries[e].first << ' ' << ae.w2()[e] << '\n';
}

// Loads a model saved against `mask`; the stored coordinates must match it.
// The result is marked trained (loss history is not persisted).
inline UserAutoencoder load_model(std::istream& in, std::shared_ptr<const MaskMatrix> mask) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "semauto-model" || version != 1) throw ParseError("model: bad magic", 1);
  std::size_t m = 0, n = 0, epochs = 0;
  std::uint64_t seed = 0;
  double lr = 0, final_loss = 0;
  if (!(in >> m >> n >> seed >> epochs >> lr >> final_loss)) throw ParseError("model: bad header", 2);
  if (m != mask->rows() || n != mask->cols()) throw ContractError("model: shape does not match mask");
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.learning_rate = lr;
  cfg.seed = seed;
  UserAutoencoder ae(mask, cfg);
  const auto& entries = mask->entries();

  auto section = [&](std::string_view name, std::span<double> weights, bool transposed) {
    std::string tag;
    std::size_t count = 0;
    if (!(in >> tag >> count) || tag != name || count != entries.size())
      throw ParseError("model: bad " + std::string(name) + " section header");
    for (std::size_t e = 0; e < count; ++e) {
      std::size_t a = 0, b = 0;
      double v = 0;
      if (!(in >> a >> b >> v)) throw ParseError("model: truncated " + std::string(name) + " section");
      auto [i, j] = transposed ? std::pair{b, a} : std::pair{a, b};
      if (i != entries[e].first || j != entries[e].second) throw ParseError("model: coordinates do not match mask");
      weights[e] = v;
    }
  };
  section("W1", ae.w1(), false);
  section("W2", ae.w2(), true);
  ae.mark_trained(final_loss, {});
  return ae;
}

}  // namespace semauto
