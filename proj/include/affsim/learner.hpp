// Copyright 2026 The affsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Small bounded-output affordance regressor.
//
// conv (valid, strided) + ReLU, repeated, then dense + ReLU layers, then an
// 8-unit dense layer squashed by tanh. Gradients use hand-written reverse mode
// in double precision. Training uses Adam on mean squared error against the
// encoded labels, inactive targets (1.1) included as they are.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "affsim/affordance.hpp"
#include "affsim/common.hpp"
#include "affsim/dataset.hpp"
#include "affsim/raster.hpp"

namespace affsim {

struct ConvSpec {
  int channels = 8;
  int kernel = 5;
  int stride = 2;
  bool operator==(const ConvSpec&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ConvSpec, channels, kernel, stride)

struct RegressorSpec {
  int in_h = 52;
  int in_w = 70;
  int in_c = 3;
  int pool = 4;  // frame downsampling factor
  std::vector<ConvSpec> convs{{8, 5, 2}, {16, 3, 2}};
  std::vector<int> dense{32};
  bool operator==(const RegressorSpec&) const = default;

  int input_size() const { return in_h * in_w * in_c; }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RegressorSpec, in_h, in_w, in_c, pool, convs, dense)

// Frame -> network input: average-pool by `pool`, crop to in_h x in_w, remove
// the channel means, scale to roughly unit range.
inline std::vector<float> preprocess(const Frame& f, const std::array<double, 3>& means, const RegressorSpec& s) {
  if (s.in_h * s.pool > f.height || s.in_w * s.pool > f.width || s.in_c != 3) {
    throw ConfigError("regressor input does not fit the frame");
  }
  std::vector<float> out(static_cast<std::size_t>(s.input_size()));
  const double inv = 1.0 / (s.pool * s.pool);
  for (int y = 0; y < s.in_h; ++y) {
    for (int x = 0; x < s.in_w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int dy = 0; dy < s.pool; ++dy) {
          for (int dx = 0; dx < s.pool; ++dx) acc += f.at(x * s.pool + dx, y * s.pool + dy)[c];
        }
        out[(static_cast<std::size_t>(y) * s.in_w + x) * 3 + c] =
            static_cast<float>((acc * inv - means[c]) / 255.0);
      }
    }
  }
  return out;
}

class Regressor {
 public:
  struct Layer {
    enum Kind { Conv, Dense } kind;
    int in_h, in_w, in_c;  // dense layers use in_c only
    int out_h, out_w, out_c;
    int kernel = 1, stride = 1;
    std::size_t w_off = 0, b_off = 0;
    std::size_t in_size() const { return std::size_t(in_h) * in_w * in_c; }
    std::size_t out_size() const { return std::size_t(out_h) * out_w * out_c; }
  };

  Regressor() : Regressor(RegressorSpec{}) {}
  explicit Regressor(RegressorSpec spec) : spec_(std::move(spec)) {
    int h = spec_.in_h, w = spec_.in_w, c = spec_.in_c;
    if (h < 1 || w < 1 || c < 1) throw ConfigError("regressor input must be non-empty");
    std::size_t off = 0;
    for (const ConvSpec& cs : spec_.convs) {
      if (cs.kernel < 1 || cs.stride < 1 || cs.channels < 1) throw ConfigError("invalid conv layer");
      if (cs.kernel > h || cs.kernel > w) throw ConfigError("conv kernel larger than its input");
      Layer l{Layer::Conv, h, w, c, (h - cs.kernel) / cs.stride + 1, (w - cs.kernel) / cs.stride + 1,
              cs.channels, cs.kernel, cs.stride};
      l.w_off = off;
      off += std::size_t(cs.kernel) * cs.kernel * c * cs.channels;
      l.b_off = off;
      off += cs.channels;
      layers_.push_back(l);
      h = l.out_h;
      w = l.out_w;
      c = l.out_c;
    }
    int n = h * w * c;
    std::vector<int> widths = spec_.dense;
    widths.push_back(static_cast<int>(kNumAffordances));
    for (int width : widths) {
      if (width < 1) throw ConfigError("invalid dense layer");
      Layer l{Layer::Dense, 1, 1, n, 1, 1, width};
      l.w_off = off;
      off += std::size_t(n) * width;
      l.b_off = off;
      off += width;
      layers_.push_back(l);
      n = width;
    }
    params_.assign(off, 0.0);
  }

  const RegressorSpec& spec() const { return spec_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t num_params() const { return params_.size(); }

  // He-normal weights, zero biases. The output layer uses unit-gain scaling.
  void initialize(std::uint64_t seed) {
    Rng rng(seed);
    std::fill(params_.begin(), params_.end(), 0.0);
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const Layer& l = layers_[li];
      const double fan_in = l.kind == Layer::Conv ? double(l.kernel) * l.kernel * l.in_c : double(l.in_c);
      const double gain = li + 1 == layers_.size() ? 1.0 : 2.0;
      const double sd = std::sqrt(gain / fan_in);
      for (std::size_t i = l.w_off; i < l.b_off; ++i) params_[i] = sd * standard_normal(rng);
    }
  }

  // Activations of every layer for one sample; the last entry is the tanh
  // output.
  struct Tape {
    std::vector<std::vector<double>> act;  // act[0] = input
  };

  std::array<double, kNumAffordances> forward(std::span<const float> x, Tape* tape = nullptr) const {
    if (x.size() != std::size_t(spec_.input_size())) throw RangeError("input has the wrong size");
    Tape local;
    Tape& t = tape ? *tape : local;
    t.act.resize(layers_.size() + 1);
    t.act[0].assign(x.begin(), x.end());
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const Layer& l = layers_[li];
      const auto& in = t.act[li];
      auto& out = t.act[li + 1];
      out.assign(l.out_size(), 0.0);
      if (l.kind == Layer::Conv) {
        conv_forward(l, in, out);
      } else {
        dense_forward(l, in, out);
      }
      const bool last = li + 1 == layers_.size();
      for (double& v : out) v = last ? std::tanh(v) : std::max(v, 0.0);
    }
    std::array<double, kNumAffordances> y{};
    std::copy(t.act.back().begin(), t.act.back().end(), y.begin());
    return y;
  }

  // Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
  void backward(const Tape& t, const std::array<double, kNumAffordances>& dy, std::vector<double>& grad) const {
    std::vector<double> g(dy.begin(), dy.end()), gin;
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const Layer& l = layers_[li];
      const auto& out = t.act[li + 1];
      const bool last = li + 1 == layers_.size();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] *= last ? 1.0 - out[i] * out[i] : (out[i] > 0.0 ? 1.0 : 0.0);
      }
      const bool need_in = li > 0;
      gin.assign(need_in ? l.in_size() : 0, 0.0);
      if (l.kind == Layer::Conv) {
        conv_backward(l, t.act[li], g, grad, need_in ? &gin : nullptr);
      } else {
        dense_backward(l, t.act[li], g, grad, need_in ? &gin : nullptr);
      }
      g.swap(gin);
    }
  }

 private:
  void conv_forward(const Layer& l, const std::vector<double>& in, std::vector<double>& out) const {
    const double* w = params_.data() + l.w_off;
    const double* b = params_.data() + l.b_off;
    const int oc = l.out_c, ic = l.in_c, k = l.kernel;
    for (int oy = 0; oy < l.out_h; ++oy) {
      for (int ox = 0; ox < l.out_w; ++ox) {
        double* o = out.data() + (std::size_t(oy) * l.out_w + ox) * oc;
        for (int c = 0; c < oc; ++c) o[c] = b[c];
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const double* ip = in.data() + ((std::size_t(oy) * l.stride + ky) * l.in_w + ox * l.stride + kx) * ic;
            const double* wp = w + (std::size_t(ky) * k + kx) * ic * oc;
            for (int i = 0; i < ic; ++i) {
              const double v = ip[i];
              const double* wr = wp + std::size_t(i) * oc;
              for (int c = 0; c < oc; ++c) o[c] += v * wr[c];
            }
          }
        }
      }
    }
  }

  void conv_backward(const Layer& l, const std::vector<double>& in, const std::vector<double>& g,
                     std::vector<double>& grad, std::vector<double>* gin) const {
    const double* w = params_.data() + l.w_off;
    double* gw = grad.data() + l.w_off;
    double* gb = grad.data() + l.b_off;
    const int oc = l.out_c, ic = l.in_c, k = l.kernel;
    for (int oy = 0; oy < l.out_h; ++oy) {
      for (int ox = 0; ox < l.out_w; ++ox) {
        const double* go = g.data() + (std::size_t(oy) * l.out_w + ox) * oc;
        bool any = false;
        for (int c = 0; c < oc; ++c) {
          gb[c] += go[c];
          any = any || go[c] != 0.0;
        }
        if (!any) continue;
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const std::size_t ipos = ((std::size_t(oy) * l.stride + ky) * l.in_w + ox * l.stride + kx) * ic;
            const double* ip = in.data() + ipos;
            const std::size_t wpos = (std::size_t(ky) * k + kx) * ic * oc;
            for (int i = 0; i < ic; ++i) {
              const double v = ip[i];
              double* gwr = gw + wpos + std::size_t(i) * oc;
              const double* wr = w + wpos + std::size_t(i) * oc;
              double acc = 0.0;
              for (int c = 0; c < oc; ++c) {
                gwr[c] += v * go[c];
                acc += wr[c] * go[c];
              }
              if (gin) (*gin)[ipos + i] += acc;
            }
          }
        }
      }
    }
  }

  void dense_forward(const Layer& l, const std::vector<double>& in, std::vector<double>& out) const {
    const double* w = params_.data() + l.w_off;
    const double* b = params_.data() + l.b_off;
    const std::size_t n = in.size();
    for (int o = 0; o < l.out_c; ++o) {
      const double* wr = w + std::size_t(o) * n;
      double acc = b[o];
      for (std::size_t i = 0; i < n; ++i) acc += wr[i] * in[i];
      out[o] = acc;
    }
  }

  void dense_backward(const Layer& l, const std::vector<double>& in, const std::vector<double>& g,
                      std::vector<double>& grad, std::vector<double>* gin) const {
    const double* w = params_.data() + l.w_off;
    double* gw = grad.data() + l.w_off;
    double* gb = grad.data() + l.b_off;
    const std::size_t n = in.size();
    for (int o = 0; o < l.out_c; ++o) {
      const double go = g[o];
      gb[o] += go;
      if (go == 0.0) continue;
      double* gwr = gw + std::size_t(o) * n;
      const double* wr = w + std::size_t(o) * n;
      for (std::size_t i = 0; i < n; ++i) gwr[i] += go * in[i];
      if (gin) {
        for (std::size_t i = 0; i < n; ++i) (*gin)[i] += go * wr[i];
      }
    }
  }

  RegressorSpec spec_;
  std::vector<Layer> layers_;
  std::vector<double> params_;
};

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

using Output = std::array<double, kNumAffordances>;

// Mean over batch x 8 of squared error.
inline double mse_loss(std::span<const Output> pred, std::span<const Output> target) {
  if (pred.size() != target.size() || pred.empty()) throw RangeError("loss needs equal, non-empty batches");
  double sum = 0.0;
  for (std::size_t b = 0; b < pred.size(); ++b) {
    for (std::size_t i = 0; i < kNumAffordances; ++i) {
      if (!std::isfinite(pred[b][i])) throw RangeError("non-finite prediction");
      const double d = pred[b][i] - target[b][i];
      sum += d * d;
    }
  }
  return sum / (static_cast<double>(pred.size()) * kNumAffordances);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct Sample {
  std::vector<float> x;
  Output y{};                  // encoded target
  AffordanceVector raw;        // ground truth, for evaluation
};

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch = 32;
  int epochs = 10;
  std::uint64_t seed = 1;
  double divergence_factor = 10.0;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (batch < 1) throw ConfigError("batch size must be at least 1");
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, lr, beta1, beta2, eps, batch, epochs, seed,
                                                divergence_factor)

class DivergenceError : public Error {
 public:
  using Error::Error;
};

class Adam {
 public:
  Adam(std::size_t n, const TrainConfig& c) : m_(n, 0.0), v_(n, 0.0), cfg_(c) {}

  void step(std::vector<double>& params, const std::vector<double>& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      params[i] -= cfg_.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.eps);
    }
  }

 private:
  std::vector<double> m_, v_;
  TrainConfig cfg_;
  long t_ = 0;
};

// Loss and its gradient over one batch of samples given by index.
inline double batch_gradient(const Regressor& net, std::span<const Sample> data, std::span<const std::size_t> batch,
                             std::vector<double>& grad) {
  grad.assign(net.num_params(), 0.0);
  Regressor::Tape tape;
  const double scale = 2.0 / (static_cast<double>(batch.size()) * kNumAffordances);
  double sum = 0.0;
  for (std::size_t b : batch) {
    const Sample& s = data[b];
    const Output y = net.forward(s.x, &tape);
    Output dy{};
    for (std::size_t i = 0; i < kNumAffordances; ++i) {
      const double d = y[i] - s.y[i];
      sum += d * d;
      dy[i] = scale * d;
    }
    net.backward(tape, dy, grad);
  }
  return sum / (static_cast<double>(batch.size()) * kNumAffordances);
}

inline double dataset_loss(const Regressor& net, std::span<const Sample> data) {
  if (data.empty()) throw RangeError("empty dataset");
  double sum = 0.0;
  for (const Sample& s : data) {
    const Output y = net.forward(s.x);
    for (std::size_t i = 0; i < kNumAffordances; ++i) sum += (y[i] - s.y[i]) * (y[i] - s.y[i]);
  }
  return sum / (static_cast<double>(data.size()) * kNumAffordances);
}

struct TrainResult {
  std::vector<double> loss_curve;  // [0] before training, then mean batch loss per epoch
};

// Called after every epoch (1-based) with the current model.
using EpochHook = std::function<void(int, const Regressor&)>;

inline TrainResult train(Regressor& net, std::span<const Sample> data, const TrainConfig& cfg,
                         const EpochHook& hook = {}) {
  cfg.validate();
  if (data.empty()) throw ConfigError("training set is empty");
  TrainResult r;
  const double initial = dataset_loss(net, data);
  r.loss_curve.push_back(initial);
  Adam opt(net.num_params(), cfg);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::vector<double> grad;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order, rng);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      sum += batch_gradient(net, data, batch, grad);
      ++batches;
      opt.step(net.params(), grad);
    }
    const double loss = sum / static_cast<double>(batches);
    r.loss_curve.push_back(loss);
    if (!std::isfinite(loss) || loss > cfg.divergence_factor * initial) {
      std::ostringstream msg;
      msg << "training diverged at epoch " << epoch << ": loss " << loss << " vs initial " << initial;
      throw DivergenceError(msg.str());
    }
    if (hook) hook(epoch, net);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'A', 'F', 'F', 'N', 'E', 'T', '0', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Regressor model;
  std::array<double, 3> channel_means{};
  NormalizationRanges ranges = NormalizationRanges::defaults();
  int epoch = 0;
};

namespace detail {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(std::string_view in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw ParseError("truncated checkpoint", pos);
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace detail

// Layout: magic, u32 version, u64 header length, JSON header (spec echo,
// means, ranges, epoch), u64 parameter count, little-endian f64 parameters.
inline std::string encode_checkpoint(const Checkpoint& c) {
  const nlohmann::json header = {{"spec", c.model.spec()},
                                 {"channel_means", c.channel_means},
                                 {"ranges", c.ranges},
                                 {"epoch", c.epoch},
                                 {"params", c.model.num_params()}};
  const std::string h = header.dump();
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  detail::put<std::uint64_t>(out, h.size());
  out += h;
  detail::put<std::uint64_t>(out, c.model.num_params());
  for (double p : c.model.params()) detail::put<double>(out, p);
  return out;
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw ParseError("not an affnet checkpoint", 0);
  }
  std::size_t pos = 8;
  if (detail::take<std::uint32_t>(bytes, pos) != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version", 8);
  }
  const auto hlen = detail::take<std::uint64_t>(bytes, pos);
  if (pos + hlen > bytes.size()) throw ParseError("truncated checkpoint header", pos);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad checkpoint header: ") + e.what(), pos);
  }
  pos += hlen;
  Checkpoint c{Regressor(header.at("spec").get<RegressorSpec>()),
               header.at("channel_means").get<std::array<double, 3>>(),
               header.at("ranges").get<NormalizationRanges>(), header.at("epoch").get<int>()};
  const auto n = detail::take<std::uint64_t>(bytes, pos);
  if (n != c.model.num_params()) throw ParseError("parameter count does not match the spec", pos);
  for (double& p : c.model.params()) p = detail::take<double>(bytes, pos);
  if (pos != bytes.size()) throw ParseError("trailing bytes in checkpoint", pos);
  return c;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalReport {
  std::size_t samples = 0;
  std::array<double, kNumAffordances> mse{};           // normalized units, active targets only
  std::array<double, kNumAffordances> mse_physical{};  // degrees^2 or metres^2
  std::array<std::size_t, kNumAffordances> active_count{};
  // Inactive detection at the 0.99 threshold, pooled over all variables.
  std::size_t true_inactive = 0, false_inactive = 0, missed_inactive = 0, true_active = 0;

  double inactive_precision() const {
    const auto d = true_inactive + false_inactive;
    return d ? double(true_inactive) / double(d) : 1.0;
  }
  double inactive_recall() const {
    const auto d = true_inactive + missed_inactive;
    return d ? double(true_inactive) / double(d) : 1.0;
  }
  double inactive_accuracy() const {
    const auto n = true_inactive + false_inactive + missed_inactive + true_active;
    return n ? double(true_inactive + true_active) / double(n) : 1.0;
  }
};

// Scores raw outputs (one per sample, same order) against samples.
inline EvalReport evaluate_outputs(std::span<const Output> outputs, std::span<const Sample> data,
                                   const NormalizationRanges& ranges) {
  if (outputs.size() != data.size()) throw RangeError("one output per sample required");
  EvalReport r;
  r.samples = data.size();
  std::array<double, kNumAffordances> sum{};
  for (std::size_t k = 0; k < data.size(); ++k) {
    for (std::size_t i = 0; i < kNumAffordances; ++i) {
      const bool truly_inactive = data[k].y[i] > kInactiveThreshold;
      const bool says_inactive = outputs[k][i] > kInactiveThreshold;
      if (truly_inactive && says_inactive) ++r.true_inactive;
      if (!truly_inactive && says_inactive) ++r.false_inactive;
      if (truly_inactive && !says_inactive) ++r.missed_inactive;
      if (!truly_inactive && !says_inactive) ++r.true_active;
      if (truly_inactive) continue;
      const double d = outputs[k][i] - data[k].y[i];
      sum[i] += d * d;
      ++r.active_count[i];
    }
  }
  for (std::size_t i = 0; i < kNumAffordances; ++i) {
    r.mse[i] = r.active_count[i] ? sum[i] / double(r.active_count[i]) : 0.0;
    const double scale = ranges.span(i) / (2.0 * kEncodedBound);
    r.mse_physical[i] = r.mse[i] * scale * scale;
  }
  return r;
}

inline EvalReport evaluate(const Regressor& net, std::span<const Sample> data, const NormalizationRanges& ranges) {
  if (data.empty()) throw RangeError("evaluation split is empty");
  std::vector<Output> out;
  out.reserve(data.size());
  for (const Sample& s : data) out.push_back(net.forward(s.x));
  return evaluate_outputs(out, data, ranges);
}

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json mse, phys, count;
  for (std::size_t i = 0; i < kNumAffordances; ++i) {
    mse[kAffordanceNames[i]] = r.mse[i];
    phys[kAffordanceNames[i]] = r.mse_physical[i];
    count[kAffordanceNames[i]] = r.active_count[i];
  }
  return {{"samples", r.samples},
          {"mse", mse},
          {"mse_physical", phys},
          {"active_count", count},
          {"inactive", {{"precision", r.inactive_precision()},
                        {"recall", r.inactive_recall()},
                        {"accuracy", r.inactive_accuracy()},
                        {"true_inactive", r.true_inactive},
                        {"false_inactive", r.false_inactive},
                        {"missed_inactive", r.missed_inactive},
                        {"true_active", r.true_active}}}};
}

// Per-epoch MSE table: one row per epoch, one column per variable.
inline std::string format_mse_table(const std::vector<std::pair<int, EvalReport>>& rows, bool physical = false) {
  std::ostringstream out;
  out << std::left << std::setw(7) << "epoch";
  for (const char* n : kAffordanceNames) out << std::right << std::setw(10) << n;
  out << '\n';
  out << std::fixed << std::setprecision(3);
  for (const auto& [epoch, r] : rows) {
    out << std::left << std::setw(7) << epoch;
    for (std::size_t i = 0; i < kNumAffordances; ++i) {
      out << std::right << std::setw(10) << (physical ? r.mse_physical[i] : r.mse[i]);
    }
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Loading samples
// ---------------------------------------------------------------------------

inline Sample make_sample(const LabeledFrame& r, const Frame& f, const std::array<double, 3>& means,
                          const RegressorSpec& spec) {
  Sample s;
  s.x = preprocess(f, means, spec);
  s.y = r.encoded.value;
  if (r.raw) s.raw = *r.raw;
  return s;
}

// Removes channel means from a sample preprocessed with zero means.
inline void subtract_means(Sample& s, const std::array<double, 3>& means) {
  for (std::size_t i = 0; i < s.x.size(); ++i) s.x[i] = static_cast<float>(s.x[i] - means[i % 3] / 255.0);
}

// Reads a split's frames from a dataset directory, using the training means.
inline std::vector<Sample> load_samples(const DatasetManifest& m, const std::string& split_name,
                                        const std::filesystem::path& dir, const RegressorSpec& spec) {
  std::vector<Sample> out;
  for (const LabeledFrame& r : m.split(split_name)) {
    const Frame f = decode_ppm(read_file((dir / r.frame_path).string()));
    out.push_back(make_sample(r, f, m.channel_means, spec));
  }
  return out;
}

}  // namespace affsim
