#include "spoofguard/lstm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

#include "spoofguard/error.hpp"
#include "spoofguard/geo.hpp"
#include "spoofguard/util.hpp"

namespace spoofguard::lstm {
namespace {

using Eigen::MatrixXd;

struct LayerOffsets {
  std::size_t w_input, w_recurrent, bias;
};

struct Layout {
  std::vector<LayerOffsets> layers;
  std::size_t head = 0;
  std::size_t total = 0;
};

Layout layout_of(const NetworkDims& dims) {
  if (dims.input_size == 0 || dims.hidden.empty()) throw DimensionError("network needs input and layers");
  Layout out;
  std::size_t offset = 0;
  std::size_t in = dims.input_size;
  for (std::size_t h : dims.hidden) {
    if (h == 0) throw DimensionError("hidden size must be positive");
    LayerOffsets lo{};
    lo.w_input = offset;
    offset += 4 * h * in;
    lo.w_recurrent = offset;
    offset += 4 * h * h;
    lo.bias = offset;
    offset += 4 * h;
    out.layers.push_back(lo);
    in = h;
  }
  out.head = offset;
  offset += in + 1;
  out.total = offset;
  return out;
}

// Views of a flat vector (parameters or gradient) laid out like the network.
struct ParamViews {
  const NetworkDims& dims;
  const Layout& layout;
  double* data;

  std::size_t in(std::size_t l) const { return l == 0 ? dims.input_size : dims.hidden[l - 1]; }
  MatrixMap w_input(std::size_t l) const {
    const auto h = static_cast<Eigen::Index>(dims.hidden[l]);
    return {data + layout.layers[l].w_input, 4 * h, static_cast<Eigen::Index>(in(l))};
  }
  MatrixMap w_recurrent(std::size_t l) const {
    const auto h = static_cast<Eigen::Index>(dims.hidden[l]);
    return {data + layout.layers[l].w_recurrent, 4 * h, h};
  }
  VectorMap bias(std::size_t l) const {
    return {data + layout.layers[l].bias, 4 * static_cast<Eigen::Index>(dims.hidden[l])};
  }
  MatrixMap head() const {
    return {data + layout.head, 1, static_cast<Eigen::Index>(dims.hidden.back())};
  }
};

template <typename Derived>
MatrixXd sigmoid(const Eigen::MatrixBase<Derived>& z) {
  return (1.0 / (1.0 + (-z.array()).exp())).matrix();
}

struct LayerTrace {
  std::vector<MatrixXd> gates;  // 4H x B, activated
  std::vector<MatrixXd> cell;
  std::vector<MatrixXd> tanh_cell;
  std::vector<MatrixXd> hidden;
};

struct ForwardTrace {
  std::vector<MatrixXd> inputs;  // F x B per step
  std::vector<LayerTrace> layers;
  Eigen::RowVectorXd output;
};

using WindowRefs = std::span<const SupervisedWindow* const>;

void check_window(const LstmNetwork& net, const RowMatrix& w) {
  if (w.cols() != static_cast<Eigen::Index>(net.dims().input_size) || w.rows() == 0) {
    throw DimensionError("window shape " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                         " does not match network input size " +
                         std::to_string(net.dims().input_size));
  }
}

ForwardTrace run_forward(const LstmNetwork& net, WindowRefs batch) {
  const auto b = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index steps = batch.front()->inputs.rows();
  for (const auto* w : batch) {
    check_window(net, w->inputs);
    if (w->inputs.rows() != steps) throw DimensionError("windows in a batch must share length");
  }
  ForwardTrace tr;
  const auto f = static_cast<Eigen::Index>(net.dims().input_size);
  tr.inputs.assign(static_cast<std::size_t>(steps), MatrixXd(f, b));
  for (Eigen::Index col = 0; col < b; ++col) {
    const RowMatrix& in = batch[static_cast<std::size_t>(col)]->inputs;
    for (Eigen::Index t = 0; t < steps; ++t) tr.inputs[static_cast<std::size_t>(t)].col(col) = in.row(t).transpose();
  }

  const std::vector<MatrixXd>* layer_in = &tr.inputs;
  tr.layers.resize(net.layer_count());
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const auto h = static_cast<Eigen::Index>(net.dims().hidden[l]);
    const auto wx = net.w_input(l);
    const auto wh = net.w_recurrent(l);
    const auto bias = net.bias(l);
    LayerTrace& lt = tr.layers[l];
    MatrixXd h_prev = MatrixXd::Zero(h, b);
    MatrixXd c_prev = MatrixXd::Zero(h, b);
    for (Eigen::Index t = 0; t < steps; ++t) {
      MatrixXd z = wx * (*layer_in)[static_cast<std::size_t>(t)];
      z.noalias() += wh * h_prev;
      z.colwise() += bias;
      MatrixXd gates(4 * h, b);
      gates.topRows(h) = sigmoid(z.topRows(h));
      gates.middleRows(h, h) = sigmoid(z.middleRows(h, h));
      gates.middleRows(2 * h, h) = z.middleRows(2 * h, h).array().tanh().matrix();
      gates.bottomRows(h) = sigmoid(z.bottomRows(h));
      MatrixXd c = gates.middleRows(h, h).cwiseProduct(c_prev) +
                   gates.topRows(h).cwiseProduct(gates.middleRows(2 * h, h));
      MatrixXd tc = c.array().tanh().matrix();
      MatrixXd hn = gates.bottomRows(h).cwiseProduct(tc);
      lt.gates.push_back(std::move(gates));
      lt.cell.push_back(c);
      lt.tanh_cell.push_back(std::move(tc));
      lt.hidden.push_back(hn);
      h_prev = std::move(hn);
      c_prev = std::move(c);
    }
    layer_in = &lt.hidden;
  }
  tr.output = (net.head_weights() * tr.layers.back().hidden.back()).row(0);
  tr.output.array() += net.head_bias();
  return tr;
}

std::vector<const SupervisedWindow*> refs_of(std::span<const SupervisedWindow> windows) {
  std::vector<const SupervisedWindow*> refs;
  refs.reserve(windows.size());
  for (const auto& w : windows) refs.push_back(&w);
  return refs;
}

double scaled_target(const LstmNetwork& net, double meters) {
  return net.scaler.size() > kShiftFeature ? net.scaler.apply(kShiftFeature, meters) : meters;
}

double to_meters(const LstmNetwork& net, double scaled) {
  return net.scaler.size() > kShiftFeature ? net.scaler.invert(kShiftFeature, scaled) : scaled;
}

double shift_range(const LstmNetwork& net) {
  return net.scaler.size() > kShiftFeature
             ? net.scaler.max(kShiftFeature) - net.scaler.min(kShiftFeature)
             : 1.0;
}

Eigen::VectorXd gradient_of(const LstmNetwork& net, WindowRefs batch, double* loss) {
  if (batch.empty()) throw InsufficientDataError("empty batch");
  const ForwardTrace tr = run_forward(net, batch);
  const auto b = static_cast<Eigen::Index>(batch.size());
  const Layout layout = layout_of(net.dims());
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.total));
  ParamViews g{net.dims(), layout, grad.data()};

  Eigen::RowVectorXd dy(b);
  double sum_abs = 0.0;
  for (Eigen::Index k = 0; k < b; ++k) {
    const double r = tr.output[k] - scaled_target(net, batch[static_cast<std::size_t>(k)]->target);
    sum_abs += std::abs(r);
    // Subgradient 0 at r == 0.
    dy[k] = (r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0)) / static_cast<double>(b);
  }
  if (loss != nullptr) *loss = sum_abs / static_cast<double>(b);

  const MatrixXd& top_last = tr.layers.back().hidden.back();
  g.head().noalias() += dy * top_last.transpose();
  grad[static_cast<Eigen::Index>(layout.total) - 1] = dy.sum();

  const std::size_t steps = tr.inputs.size();
  // Gradient flowing into each step's hidden state from the layer above (or the head).
  std::vector<MatrixXd> dh_above(steps);
  const auto h_top = static_cast<Eigen::Index>(net.dims().hidden.back());
  for (auto& m : dh_above) m = MatrixXd::Zero(h_top, b);
  dh_above.back() = net.head_weights().transpose() * dy;

  for (std::size_t l = net.layer_count(); l-- > 0;) {
    const auto h = static_cast<Eigen::Index>(net.dims().hidden[l]);
    const LayerTrace& lt = tr.layers[l];
    const std::vector<MatrixXd>& xs = l == 0 ? tr.inputs : tr.layers[l - 1].hidden;
    const auto wx = net.w_input(l);
    const auto wh = net.w_recurrent(l);
    auto gwx = g.w_input(l);
    auto gwh = g.w_recurrent(l);
    auto gb = g.bias(l);
    MatrixXd dh_next = MatrixXd::Zero(h, b);
    MatrixXd dc_next = MatrixXd::Zero(h, b);
    const MatrixXd zeros = MatrixXd::Zero(h, b);
    std::vector<MatrixXd> dx(l > 0 ? steps : 0);
    for (std::size_t t = steps; t-- > 0;) {
      const MatrixXd& gates = lt.gates[t];
      const auto i = gates.topRows(h).array();
      const auto f = gates.middleRows(h, h).array();
      const auto gg = gates.middleRows(2 * h, h).array();
      const auto o = gates.bottomRows(h).array();
      const auto tc = lt.tanh_cell[t].array();
      const MatrixXd& c_prev = t > 0 ? lt.cell[t - 1] : zeros;
      const MatrixXd& h_prev = t > 0 ? lt.hidden[t - 1] : zeros;

      const Eigen::ArrayXXd dh = (dh_above[t] + dh_next).array();
      const Eigen::ArrayXXd dc = dc_next.array() + dh * o * (1.0 - tc * tc);
      MatrixXd dz(4 * h, b);
      dz.topRows(h) = (dc * gg * i * (1.0 - i)).matrix();
      dz.middleRows(h, h) = (dc * c_prev.array() * f * (1.0 - f)).matrix();
      dz.middleRows(2 * h, h) = (dc * i * (1.0 - gg * gg)).matrix();
      dz.bottomRows(h) = (dh * tc * o * (1.0 - o)).matrix();

      gwx.noalias() += dz * xs[t].transpose();
      gwh.noalias() += dz * h_prev.transpose();
      gb += dz.rowwise().sum();
      if (l > 0) dx[t] = wx.transpose() * dz;
      dh_next = wh.transpose() * dz;
      dc_next = (dc * f).matrix();
    }
    if (l > 0) dh_above = std::move(dx);
  }
  return grad;
}

double loss_of(const LstmNetwork& net, WindowRefs batch) {
  const ForwardTrace tr = run_forward(net, batch);
  double sum = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    sum += std::abs(tr.output[static_cast<Eigen::Index>(k)] - scaled_target(net, batch[k]->target));
  }
  return sum / static_cast<double>(batch.size());
}

// Little-endian primitives for the model file.
void put_u32(std::ostream& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.put(static_cast<char>((v >> (8 * k)) & 0xFF));
}
void put_u64(std::ostream& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.put(static_cast<char>((v >> (8 * k)) & 0xFF));
}
void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
void put_str(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint64_t get_uint(std::istream& in, int bytes) {
  std::uint64_t v = 0;
  for (int k = 0; k < bytes; ++k) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw FormatError("model file truncated");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * k);
  }
  return v;
}
std::uint32_t get_u32(std::istream& in) { return static_cast<std::uint32_t>(get_uint(in, 4)); }
std::uint64_t get_u64(std::istream& in) { return get_uint(in, 8); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }
std::string get_str(std::istream& in) {
  const std::uint32_t n = get_u32(in);
  if (n > (1u << 20)) throw FormatError("model file string too long");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw FormatError("model file truncated");
  return s;
}

constexpr char kMagic[8] = {'S', 'G', 'L', 'S', 'T', 'M', '\0', '\0'};

}  // namespace

LstmNetwork::LstmNetwork(NetworkDims dims) : dims_(std::move(dims)) {
  const Layout layout = layout_of(dims_);
  for (const auto& lo : layout.layers) offsets_.push_back({lo.w_input, lo.w_recurrent, lo.bias});
  head_offset_ = layout.head;
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.total));
}

std::size_t LstmNetwork::layer_input_size(std::size_t layer) const {
  return layer == 0 ? dims_.input_size : dims_.hidden.at(layer - 1);
}

MatrixMap LstmNetwork::w_input(std::size_t l) {
  const auto h = static_cast<Eigen::Index>(dims_.hidden.at(l));
  return {params_.data() + offsets_[l].w_input, 4 * h, static_cast<Eigen::Index>(layer_input_size(l))};
}
ConstMatrixMap LstmNetwork::w_input(std::size_t l) const {
  const auto h = static_cast<Eigen::Index>(dims_.hidden.at(l));
  return {params_.data() + offsets_[l].w_input, 4 * h, static_cast<Eigen::Index>(layer_input_size(l))};
}
MatrixMap LstmNetwork::w_recurrent(std::size_t l) {
  const auto h = static_cast<Eigen::Index>(dims_.hidden.at(l));
  return {params_.data() + offsets_[l].w_recurrent, 4 * h, h};
}
ConstMatrixMap LstmNetwork::w_recurrent(std::size_t l) const {
  const auto h = static_cast<Eigen::Index>(dims_.hidden.at(l));
  return {params_.data() + offsets_[l].w_recurrent, 4 * h, h};
}
VectorMap LstmNetwork::bias(std::size_t l) {
  return {params_.data() + offsets_[l].bias, 4 * static_cast<Eigen::Index>(dims_.hidden.at(l))};
}
ConstVectorMap LstmNetwork::bias(std::size_t l) const {
  return {params_.data() + offsets_[l].bias, 4 * static_cast<Eigen::Index>(dims_.hidden.at(l))};
}
MatrixMap LstmNetwork::head_weights() {
  return {params_.data() + head_offset_, 1, static_cast<Eigen::Index>(dims_.hidden.back())};
}
ConstMatrixMap LstmNetwork::head_weights() const {
  return {params_.data() + head_offset_, 1, static_cast<Eigen::Index>(dims_.hidden.back())};
}

LstmNetwork init_network(const NetworkDims& dims, std::uint64_t seed) {
  LstmNetwork net(dims);
  Rng rng(seed);
  auto fill = [&](auto&& m, std::size_t fan_in) {
    const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-a, a);
    }
  };
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const auto h = static_cast<Eigen::Index>(dims.hidden[l]);
    fill(net.w_input(l), net.layer_input_size(l));
    fill(net.w_recurrent(l), dims.hidden[l]);
    net.bias(l).setZero();
    net.bias(l).segment(h, h).setOnes();
  }
  fill(net.head_weights(), dims.hidden.back());
  net.head_bias() = 0.0;
  net.metadata.seed = seed;
  return net;
}

double forward_scaled(const LstmNetwork& network, const RowMatrix& window) {
  SupervisedWindow w{window, 0.0};
  const SupervisedWindow* ref = &w;
  return run_forward(network, WindowRefs(&ref, 1)).output[0];
}

double forward(const LstmNetwork& network, const RowMatrix& window) {
  return to_meters(network, forward_scaled(network, window));
}

std::vector<double> predict(const LstmNetwork& network, std::span<const SupervisedWindow> windows) {
  std::vector<double> out;
  out.reserve(windows.size());
  const auto refs = refs_of(windows);
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < refs.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, refs.size() - start);
    const ForwardTrace tr = run_forward(network, WindowRefs(refs.data() + start, n));
    for (Eigen::Index k = 0; k < tr.output.size(); ++k) out.push_back(to_meters(network, tr.output[k]));
  }
  return out;
}

FeatureTable make_feature_table(std::span<const ingest::AlignedFrame> frames) {
  if (frames.size() < 2) throw InsufficientDataError("feature table needs at least two frames");
  FeatureTable table;
  std::vector<geo::GeoPoint> pts;
  pts.reserve(frames.size());
  for (const auto& f : frames) pts.push_back(geo::GeoPoint::from_degrees(f.lat_deg, f.lon_deg));
  for (std::size_t k = 1; k < frames.size(); ++k) {
    if (!(frames[k].t > frames[k - 1].t)) throw OrderingError("frames not strictly increasing in time");
    const double prev_shift = geo::haversine_distance(pts[k - 1], pts[k]);
    table.t.push_back(frames[k].t);
    table.rows.push_back({prev_shift, frames[k].accel_pct, frames[k].steering_deg, frames[k].speed_mps});
    table.next_shift.push_back(k + 1 < frames.size() ? geo::haversine_distance(pts[k], pts[k + 1])
                                                      : std::numeric_limits<double>::quiet_NaN());
  }
  return table;
}

ingest::FeatureScaler fit_feature_scaler(std::span<const FeatureTable> tables) {
  std::vector<std::vector<double>> columns(kFeatureCount);
  for (const auto& table : tables) {
    for (const auto& row : table.rows) {
      for (std::size_t f = 0; f < kFeatureCount; ++f) columns[f].push_back(row[f]);
    }
  }
  return ingest::FeatureScaler::fit(columns);
}

void scale_row(const ingest::FeatureScaler& scaler, const std::array<double, kFeatureCount>& row,
               RowMatrix& out, Eigen::Index out_row) {
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    out(out_row, static_cast<Eigen::Index>(f)) = scaler.apply(f, row[f]);
  }
}

std::vector<SupervisedWindow> build_windows(const FeatureTable& table,
                                            const ingest::FeatureScaler& scaler, std::size_t window) {
  if (window == 0) throw InvalidInputError("window length must be at least 1");
  if (scaler.size() != kFeatureCount) throw DimensionError("scaler does not cover the feature set");
  std::vector<SupervisedWindow> out;
  const std::size_t n = table.rows.size();
  // The last row has no next shift.
  for (std::size_t end = window; end < n; ++end) {
    SupervisedWindow w{RowMatrix(static_cast<Eigen::Index>(window), kFeatureCount),
                       table.next_shift[end - 1]};
    for (std::size_t r = 0; r < window; ++r) {
      scale_row(scaler, table.rows[end - window + r], w.inputs, static_cast<Eigen::Index>(r));
    }
    out.push_back(std::move(w));
  }
  return out;
}

void validate(const TrainingConfig& c) {
  if (c.epochs == 0 || c.batch_size == 0 || c.window == 0) {
    throw InvalidInputError("epochs, batch size and window must be positive");
  }
  if (!(c.learning_rate > 0.0) || !(c.epsilon > 0.0)) throw InvalidInputError("learning rate and epsilon must be positive");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) {
    throw InvalidInputError("Adam betas must lie in [0, 1)");
  }
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) {
    throw InvalidInputError("train fraction must lie in (0, 1)");
  }
}

AdamOptimizer::AdamOptimizer(std::size_t size, double learning_rate, double beta1, double beta2,
                             double epsilon)
    : lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(epsilon),
      m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size))) {}

void AdamOptimizer::step(Eigen::VectorXd& params, const Eigen::VectorXd& gradient) {
  if (gradient.size() != params.size() || params.size() != m_.size()) {
    throw DimensionError("optimizer size mismatch");
  }
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * gradient;
  v_ = beta2_ * v_ + (1.0 - beta2_) * gradient.cwiseProduct(gradient);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

TrainingResult train(std::span<const SupervisedWindow> dataset, const ingest::FeatureScaler& scaler,
                     const TrainingConfig& config, const EpochCallback& on_epoch) {
  validate(config);
  const auto n_train = static_cast<std::size_t>(std::floor(config.train_fraction * dataset.size()));
  if (n_train == 0 || n_train >= dataset.size()) {
    throw InsufficientDataError("training needs non-empty train and validation splits");
  }
  for (const auto& w : dataset) {
    if (w.inputs.rows() != static_cast<Eigen::Index>(config.window)) {
      throw DimensionError("dataset window length differs from the configured window");
    }
  }
  const auto train_set = dataset.first(n_train);
  const auto val_set = dataset.subspan(n_train);

  TrainingResult result{init_network(config.dims, config.seed), {}};
  LstmNetwork& net = result.network;
  net.scaler = scaler;
  net.metadata.window = config.window;
  net.metadata.config_hash = config.config_hash;
  const double range = shift_range(net);

  AdamOptimizer adam(net.parameter_count(), config.learning_rate, config.beta1, config.beta2,
                     config.epsilon);
  Rng rng(config.seed ^ 0x5851f42d4c957f2dULL);
  std::vector<const SupervisedWindow*> order = refs_of(train_set);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    }
    double weighted = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      double loss = 0.0;
      const Eigen::VectorXd grad = gradient_of(net, WindowRefs(order.data() + start, n), &loss);
      if (!std::isfinite(loss) || !grad.allFinite()) throw TrainingDivergedError(epoch);
      adam.step(net.parameters(), grad);
      weighted += loss * static_cast<double>(n);
    }
    const Metrics val = evaluate(net, val_set);
    const EpochLoss entry{epoch, range * weighted / static_cast<double>(order.size()), val.mae};
    if (!std::isfinite(entry.train_mae) || !std::isfinite(entry.val_mae)) throw TrainingDivergedError(epoch);
    result.history.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }

  const Metrics final_val = evaluate(net, val_set);
  net.metadata.validation_rmse = final_val.rmse;
  net.metadata.validation_max_abs_error = final_val.max_abs_error;
  net.metadata.validation_mae = final_val.mae;
  return result;
}

Metrics compute_metrics(std::span<const double> predicted, std::span<const double> targets) {
  if (predicted.empty()) throw InsufficientDataError("metrics need at least one sample");
  if (predicted.size() != targets.size()) throw DimensionError("prediction/target size mismatch");
  Metrics m;
  double sq = 0.0, ab = 0.0;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    const double e = std::abs(predicted[k] - targets[k]);
    sq += e * e;
    ab += e;
    m.max_abs_error = std::max(m.max_abs_error, e);
  }
  const auto n = static_cast<double>(predicted.size());
  m.rmse = std::sqrt(sq / n);
  m.mae = ab / n;
  return m;
}

Metrics evaluate(const LstmNetwork& network, std::span<const SupervisedWindow> dataset) {
  if (dataset.empty()) throw InsufficientDataError("evaluation needs a non-empty dataset");
  const auto pred = predict(network, dataset);
  std::vector<double> targets;
  targets.reserve(dataset.size());
  for (const auto& w : dataset) targets.push_back(w.target);
  return compute_metrics(pred, targets);
}

Eigen::VectorXd mae_gradient(const LstmNetwork& network, std::span<const SupervisedWindow> batch,
                             double* loss) {
  const auto refs = refs_of(batch);
  return gradient_of(network, refs, loss);
}

double mae_loss(const LstmNetwork& network, std::span<const SupervisedWindow> batch) {
  if (batch.empty()) throw InsufficientDataError("empty batch");
  return loss_of(network, refs_of(batch));
}

Eigen::VectorXd numeric_gradient(const LstmNetwork& network, std::span<const SupervisedWindow> batch,
                                 double step) {
  LstmNetwork probe = network;
  const auto refs = refs_of(batch);
  Eigen::VectorXd grad(probe.parameters().size());
  for (Eigen::Index p = 0; p < grad.size(); ++p) {
    const double saved = probe.parameters()[p];
    probe.parameters()[p] = saved + step;
    const double up = loss_of(probe, refs);
    probe.parameters()[p] = saved - step;
    const double down = loss_of(probe, refs);
    probe.parameters()[p] = saved;
    grad[p] = (up - down) / (2.0 * step);
  }
  return grad;
}

GradientComparison compare_gradients(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric,
                                     double zero_floor) {
  if (analytic.size() != numeric.size()) throw DimensionError("gradient size mismatch");
  GradientComparison out;
  for (Eigen::Index p = 0; p < analytic.size(); ++p) {
    const double a = analytic[p];
    const double n = numeric[p];
    const double scale = std::max(std::abs(a), std::abs(n));
    if (scale < zero_floor) {
      ++out.skipped;
      continue;
    }
    ++out.compared;
    out.max_relative_deviation = std::max(out.max_relative_deviation, std::abs(a - n) / scale);
  }
  return out;
}

GradientComparison gradient_check(const LstmNetwork& network, const SupervisedWindow& window,
                                  double step) {
  const std::span<const SupervisedWindow> one(&window, 1);
  return compare_gradients(mae_gradient(network, one), numeric_gradient(network, one, step));
}

void save_model(std::ostream& out, const LstmNetwork& net) {
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kModelVersion);
  put_u32(out, static_cast<std::uint32_t>(net.dims().input_size));
  put_u32(out, static_cast<std::uint32_t>(net.layer_count()));
  for (std::size_t h : net.dims().hidden) put_u32(out, static_cast<std::uint32_t>(h));
  const ModelMetadata& md = net.metadata;
  put_u32(out, static_cast<std::uint32_t>(md.window));
  put_u32(out, static_cast<std::uint32_t>(md.feature_order.size()));
  for (const auto& name : md.feature_order) put_str(out, name);
  put_u32(out, static_cast<std::uint32_t>(net.scaler.size()));
  for (std::size_t f = 0; f < net.scaler.size(); ++f) {
    put_f64(out, net.scaler.min(f));
    put_f64(out, net.scaler.max(f));
  }
  put_f64(out, md.validation_rmse);
  put_f64(out, md.validation_max_abs_error);
  put_f64(out, md.validation_mae);
  put_u64(out, md.seed);
  put_str(out, md.config_hash);
  put_u64(out, net.parameter_count());
  for (Eigen::Index p = 0; p < net.parameters().size(); ++p) put_f64(out, net.parameters()[p]);
}

LstmNetwork load_model(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw FormatError("not a spoofguard model file");
  const std::uint32_t version = get_u32(in);
  if (version != kModelVersion) {
    throw FormatError("model file version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kModelVersion) + ")");
  }
  NetworkDims dims;
  dims.input_size = get_u32(in);
  const std::uint32_t layers = get_u32(in);
  if (layers == 0 || layers > 64) throw FormatError("implausible layer count");
  dims.hidden.clear();
  for (std::uint32_t l = 0; l < layers; ++l) dims.hidden.push_back(get_u32(in));
  LstmNetwork net(dims);
  ModelMetadata& md = net.metadata;
  md.version = version;
  md.window = get_u32(in);
  const std::uint32_t names = get_u32(in);
  md.feature_order.clear();
  for (std::uint32_t k = 0; k < names; ++k) md.feature_order.push_back(get_str(in));
  const std::uint32_t scaled = get_u32(in);
  std::vector<double> mins, maxs;
  for (std::uint32_t f = 0; f < scaled; ++f) {
    mins.push_back(get_f64(in));
    maxs.push_back(get_f64(in));
  }
  net.scaler = ingest::FeatureScaler(std::move(mins), std::move(maxs));
  md.validation_rmse = get_f64(in);
  md.validation_max_abs_error = get_f64(in);
  md.validation_mae = get_f64(in);
  md.seed = get_u64(in);
  md.config_hash = get_str(in);
  const std::uint64_t count = get_u64(in);
  if (count != net.parameter_count()) throw FormatError("parameter count does not match dimensions");
  for (Eigen::Index p = 0; p < net.parameters().size(); ++p) net.parameters()[p] = get_f64(in);
  if (!net.parameters().allFinite()) throw FormatError("model file holds non-finite parameters");
  return net;
}

void save_model(const std::filesystem::path& path, const LstmNetwork& network) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInputError("cannot write model file " + path.string());
  save_model(out, network);
}

LstmNetwork load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInputError("cannot open model file " + path.string());
  return load_model(in);
}

}  // namespace spoofguard::lstm
