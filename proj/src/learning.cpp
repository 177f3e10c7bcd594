#include "tray/learning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "tray/errors.hpp"

namespace tray {

using nlohmann::json;

namespace {

constexpr const char* kFormatName = "tray-alpha-mlp";

struct Activations {
  std::vector<Eigen::VectorXd> pre;   // per layer, before activation
  std::vector<Eigen::VectorXd> post;  // per layer input, post[0] = x
  std::vector<Eigen::VectorXd> mask;  // dropout multipliers for hidden layers
};

Eigen::VectorXd leaky(const Eigen::VectorXd& z, double slope) {
  return z.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
}

Eigen::VectorXd leaky_grad(const Eigen::VectorXd& z, double slope) {
  return z.unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; });
}

// Forward pass on one standardized input. `rng` enables dropout.
double forward(const std::vector<DenseLayer>& layers, double slope, double x, Activations* act,
               double dropout, std::mt19937_64* rng) {
  Eigen::VectorXd h(1);
  h[0] = x;
  if (act) {
    act->pre.clear();
    act->post.assign(1, h);
    act->mask.clear();
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::VectorXd z = layers[l].weights * h + layers[l].bias;
    const bool hidden = l + 1 < layers.size();
    if (act) act->pre.push_back(z);
    if (!hidden) return z[0];
    h = leaky(z, slope);
    if (rng && dropout > 0.0) {
      std::bernoulli_distribution keep(1.0 - dropout);
      Eigen::VectorXd m(h.size());
      for (Eigen::Index i = 0; i < m.size(); ++i) m[i] = keep(*rng) ? 1.0 / (1.0 - dropout) : 0.0;
      h = h.cwiseProduct(m);
      if (act) act->mask.push_back(m);
    } else if (act) {
      act->mask.push_back(Eigen::VectorXd::Ones(h.size()));
    }
    if (act) act->post.push_back(h);
  }
  return h[0];
}

struct Adam {
  double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;
  std::vector<DenseLayer> m, v;

  explicit Adam(const std::vector<DenseLayer>& shape, double learning_rate) : lr(learning_rate) {
    for (const auto& l : shape) {
      m.push_back({Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()), Eigen::VectorXd::Zero(l.bias.size())});
    }
    v = m;
  }

  void apply(std::vector<DenseLayer>& layers, const std::vector<DenseLayer>& grad) {
    ++step;
    const double c1 = 1.0 - std::pow(beta1, step);
    const double c2 = 1.0 - std::pow(beta2, step);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      m[l].weights = beta1 * m[l].weights + (1 - beta1) * grad[l].weights;
      v[l].weights = beta2 * v[l].weights + (1 - beta2) * grad[l].weights.cwiseAbs2();
      m[l].bias = beta1 * m[l].bias + (1 - beta1) * grad[l].bias;
      v[l].bias = beta2 * v[l].bias + (1 - beta2) * grad[l].bias.cwiseAbs2();
      layers[l].weights.array() -=
          lr * (m[l].weights.array() / c1) / ((v[l].weights.array() / c2).sqrt() + eps);
      layers[l].bias.array() -= lr * (m[l].bias.array() / c1) / ((v[l].bias.array() / c2).sqrt() + eps);
    }
  }
};

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

double AlphaModel::value(double speed) const {
  const double v = std::clamp(speed, v_min, v_max);
  const double x = (v - input_mean) / input_std;
  return forward(layers, negative_slope, x, nullptr, 0.0, nullptr) * output_std + output_mean;
}

double AlphaModel::slope(double speed) const {
  if (speed < v_min || speed > v_max) return 0.0;
  Activations act;
  forward(layers, negative_slope, (speed - input_mean) / input_std, &act, 0.0, nullptr);
  // Row vector d out / d h, propagated back to the input.
  Eigen::RowVectorXd g = layers.back().weights;
  for (int l = static_cast<int>(layers.size()) - 2; l >= 0; --l) {
    g = g.cwiseProduct(leaky_grad(act.pre[l], negative_slope).transpose()) * layers[l].weights;
  }
  return g[0] * output_std / input_std;
}

void AlphaModel::validate() const {
  if (layers.empty()) throw MalformedModel("model has no layers");
  Eigen::Index width = 1;
  for (const auto& l : layers) {
    if (l.weights.cols() != width || l.bias.size() != l.weights.rows()) {
      throw MalformedModel("layer shapes do not chain");
    }
    if (!l.weights.allFinite() || !l.bias.allFinite()) throw MalformedModel("non-finite parameters");
    width = l.weights.rows();
  }
  if (width != 1) throw MalformedModel("output layer must have one unit");
  if (!(input_std > 0.0) || !(output_std > 0.0) || !(v_max >= v_min)) {
    throw MalformedModel("invalid scaler or domain");
  }
}

std::vector<AlphaSample> events_to_samples(const std::vector<SlidingEvent>& events, double mu_s,
                                           double g_mag) {
  if (!(mu_s > 0.0) || !(g_mag > 0.0)) throw InvalidArgument("mu_s and g_mag must be positive");
  std::vector<AlphaSample> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back({e.v_sliding_mag, e.a_sliding_mag / (mu_s * g_mag)});
  return out;
}

std::vector<AlphaSample> augment_dataset(const std::vector<AlphaSample>& samples, double mu_s,
                                         double dv) {
  if (samples.empty()) throw InvalidArgument("cannot augment an empty dataset");
  if (!(mu_s > 0.0) || !(dv > 0.0)) throw InvalidArgument("mu_s and dv must be positive");
  const auto lowest = std::min_element(samples.begin(), samples.end(),
                                       [](const AlphaSample& a, const AlphaSample& b) { return a.v < b.v; });
  std::vector<AlphaSample> out;
  if (lowest->v > 0.0) {
    const AlphaSample end = *lowest;
    out.push_back({0.0, 1.0});
    for (double v = dv; v < end.v - 1e-12; v += dv) {
      out.push_back({v, 1.0 + (end.alpha - 1.0) * v / end.v});
    }
  }
  out.insert(out.end(), samples.begin(), samples.end());
  return out;
}

AlphaModel train_alpha(const std::vector<AlphaSample>& samples, const TrainSettings& settings) {
  if (samples.size() < 10) throw InvalidArgument("train_alpha needs at least 10 samples");
  if (settings.hidden < 1 || settings.epochs < 1 || settings.batch_size < 1 ||
      !(settings.learning_rate > 0.0) || !(settings.dropout >= 0.0 && settings.dropout < 1.0)) {
    throw InvalidArgument("invalid training settings");
  }
  const int n = static_cast<int>(samples.size());
  Eigen::VectorXd v(n), y(n);
  for (int i = 0; i < n; ++i) {
    if (!(samples[i].v >= 0.0) || !(samples[i].alpha > 0.0)) throw InvalidArgument("invalid alpha sample");
    v[i] = samples[i].v;
    y[i] = samples[i].alpha;
  }
  if (!(v.maxCoeff() > v.minCoeff())) throw InvalidArgument("samples must span a nonzero velocity range");

  AlphaModel model;
  model.negative_slope = settings.negative_slope;
  model.v_min = v.minCoeff();
  model.v_max = v.maxCoeff();
  model.input_mean = v.mean();
  model.input_std = std::sqrt((v.array() - model.input_mean).square().mean());
  model.output_mean = y.mean();
  const double y_std = std::sqrt((y.array() - model.output_mean).square().mean());
  model.output_std = y_std > 1e-12 ? y_std : 1.0;
  const Eigen::VectorXd xs = (v.array() - model.input_mean) / model.input_std;
  const Eigen::VectorXd ys = (y.array() - model.output_mean) / model.output_std;

  std::mt19937_64 rng(settings.seed);
  const int sizes[4] = {1, settings.hidden, settings.hidden, 1};
  for (int l = 0; l < 3; ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer layer{Eigen::MatrixXd(sizes[l + 1], sizes[l]), Eigen::VectorXd(sizes[l + 1])};
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = u(rng);
    model.layers.push_back(std::move(layer));
  }

  Adam adam(model.layers, settings.learning_rate);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Activations act;
  for (int epoch = 0; epoch < settings.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < n; start += settings.batch_size) {
      const int stop = std::min(n, start + settings.batch_size);
      std::vector<DenseLayer> grad = adam.m;
      for (auto& g : grad) {
        g.weights.setZero();
        g.bias.setZero();
      }
      for (int b = start; b < stop; ++b) {
        const int i = order[b];
        const double out = forward(model.layers, model.negative_slope, xs[i], &act, settings.dropout, &rng);
        Eigen::VectorXd delta(1);
        delta[0] = 2.0 * (out - ys[i]) / (stop - start);
        for (int l = 2; l >= 0; --l) {
          grad[l].weights += delta * act.post[l].transpose();
          grad[l].bias += delta;
          if (l > 0) {
            delta = (model.layers[l].weights.transpose() * delta)
                        .cwiseProduct(act.mask[l - 1])
                        .cwiseProduct(leaky_grad(act.pre[l - 1], model.negative_slope));
          }
        }
      }
      adam.apply(model.layers, grad);
    }
  }

  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = model.value(v[i]) - y[i];
    loss += r * r;
  }
  model.training = {settings.epochs, loss / n, n, settings.seed};
  if (!(model.training.final_loss <= settings.loss_ceiling)) {
    throw NonConvergence("final training loss " + std::to_string(model.training.final_loss) +
                         " exceeds ceiling " + std::to_string(settings.loss_ceiling));
  }
  return model;
}

FitReport fit_report(const AlphaModel& model, const std::vector<AlphaSample>& samples) {
  FitReport r;
  r.v_min = model.v_min;
  r.v_max = model.v_max;
  for (const auto& s : samples) r.mae += std::abs(model.value(s.v) - s.alpha);
  if (!samples.empty()) r.mae /= samples.size();
  r.monotone_nonincreasing = true;
  constexpr int kGrid = 200;
  double prev = model.value(model.v_min);
  for (int i = 1; i <= kGrid; ++i) {
    const double cur = model.value(model.v_min + (model.v_max - model.v_min) * i / kGrid);
    if (cur > prev + 1e-9) r.monotone_nonincreasing = false;
    prev = cur;
  }
  return r;
}

std::string alpha_model_to_json_text(const AlphaModel& model) {
  model.validate();
  json j;
  j["format"] = kFormatName;
  j["version"] = AlphaModel::kFormatVersion;
  j["activation"] = {{"type", "leaky_relu"}, {"negative_slope", model.negative_slope}};
  j["layers"] = json::array();
  for (const auto& l : model.layers) {
    std::vector<double> w;
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.push_back(l.weights(r, c));
    }
    j["layers"].push_back({{"in", l.weights.cols()}, {"out", l.weights.rows()}, {"weights", w},
                           {"bias", vector_json(l.bias)}});
  }
  j["input_scaler"] = {{"mean", model.input_mean}, {"std", model.input_std}};
  j["output_scaler"] = {{"mean", model.output_mean}, {"std", model.output_std}};
  j["domain"] = {model.v_min, model.v_max};
  j["training"] = {{"epochs", model.training.epochs},
                   {"final_loss", model.training.final_loss},
                   {"samples", model.training.samples},
                   {"seed", model.training.seed}};
  return j.dump(2);
}

AlphaModel alpha_model_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw MalformedModel(std::string("model file is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kFormatName) throw MalformedModel("unknown model format");
    const int version = j.at("version").get<int>();
    if (version != AlphaModel::kFormatVersion) {
      throw VersionError("model version " + std::to_string(version) + " is not supported (expected " +
                         std::to_string(AlphaModel::kFormatVersion) + ")");
    }
    AlphaModel m;
    m.negative_slope = j.at("activation").at("negative_slope").get<double>();
    for (const auto& l : j.at("layers")) {
      const int in = l.at("in").get<int>();
      const int out = l.at("out").get<int>();
      const auto w = l.at("weights").get<std::vector<double>>();
      const auto b = l.at("bias").get<std::vector<double>>();
      if (in < 1 || out < 1 || w.size() != static_cast<std::size_t>(in) * out ||
          b.size() != static_cast<std::size_t>(out)) {
        throw MalformedModel("layer array sizes do not match its shape");
      }
      DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
      for (int r = 0; r < out; ++r) {
        for (int c = 0; c < in; ++c) layer.weights(r, c) = w[r * in + c];
      }
      for (int r = 0; r < out; ++r) layer.bias[r] = b[r];
      m.layers.push_back(std::move(layer));
    }
    m.input_mean = j.at("input_scaler").at("mean").get<double>();
    m.input_std = j.at("input_scaler").at("std").get<double>();
    m.output_mean = j.at("output_scaler").at("mean").get<double>();
    m.output_std = j.at("output_scaler").at("std").get<double>();
    m.v_min = j.at("domain").at(0).get<double>();
    m.v_max = j.at("domain").at(1).get<double>();
    if (j.contains("training")) {
      const auto& t = j["training"];
      m.training = {t.value("epochs", 0), t.value("final_loss", 0.0), t.value("samples", 0),
                    t.value("seed", std::uint64_t{0})};
    }
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw MalformedModel(std::string("model file is missing fields: ") + e.what());
  }
}

void save_model(const AlphaModel& model, const std::string& path) {
  const std::string text = alpha_model_to_json_text(model);
  std::ofstream f(path);
  if (!f) throw InvalidArgument("cannot open " + path + " for writing");
  f << text << '\n';
  if (!f) throw InvalidArgument("failed writing " + path);
}

AlphaModel load_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InvalidArgument("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return alpha_model_from_json_text(ss.str());
}

}  // namespace tray
