#include "mvad/backbone.hpp"

#include <algorithm>
#include <cmath>

#include "mvad/errors.hpp"
#include "mvad/rng.hpp"

namespace mvad {
namespace {

constexpr std::size_t kEvalChunk = 1024;

DenseLayer make_layer(std::size_t in, std::size_t out, bool batch_norm, Activation act,
                      SeededRng& rng) {
  DenseLayer layer;
  layer.weight = Matrix(out, in);
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& w : layer.weight.values()) w = rng.uniform(-limit, limit);
  layer.bias.assign(out, 0.0);
  layer.batch_norm = batch_norm;
  if (batch_norm) {
    layer.bn_gamma.assign(out, 1.0);
    layer.bn_beta.assign(out, 0.0);
    layer.bn_running_mean.assign(out, 0.0);
    layer.bn_running_var.assign(out, 1.0);
  }
  layer.activation = act;
  return layer;
}

void apply_activation(Activation act, Matrix& x) {
  switch (act) {
    case Activation::kRelu:
      for (double& v : x.values()) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::kSigmoid:
      for (double& v : x.values()) v = sigmoid(v);
      break;
    case Activation::kIdentity:
      break;
  }
}

// dLoss/dpre from dLoss/doutput, in place.
void activation_backward(Activation act, const Matrix& output, Matrix& grad) {
  switch (act) {
    case Activation::kRelu: {
      const double* y = output.data();
      double* g = grad.data();
      for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!(y[i] > 0.0)) g[i] = 0.0;
      }
      break;
    }
    case Activation::kSigmoid: {
      const double* y = output.data();
      double* g = grad.data();
      for (std::size_t i = 0; i < grad.size(); ++i) g[i] *= y[i] * (1.0 - y[i]);
      break;
    }
    case Activation::kIdentity:
      break;
  }
}

LayerTrace layer_forward(const DenseLayer& layer, const Matrix& x, Mode mode) {
  LayerTrace t;
  Matrix pre(x.rows(), layer.out_dim());
  gemm(simd::Trans::kNo, simd::Trans::kYes, 1.0, x, layer.weight, 0.0, pre);
  const std::size_t rows = pre.rows();
  const std::size_t cols = pre.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = pre.row(r);
    for (std::size_t c = 0; c < cols; ++c) row[c] += layer.bias[c];
  }

  if (layer.batch_norm) {
    t.xhat = Matrix(rows, cols);
    if (mode == Mode::kTrain) {
      t.mean.assign(cols, 0.0);
      t.var.assign(cols, 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        const auto row = pre.row(r);
        for (std::size_t c = 0; c < cols; ++c) t.mean[c] += row[c];
      }
      for (double& m : t.mean) m /= static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        const auto row = pre.row(r);
        for (std::size_t c = 0; c < cols; ++c) {
          const double d = row[c] - t.mean[c];
          t.var[c] += d * d;
        }
      }
      for (double& v : t.var) v /= static_cast<double>(rows);
      t.inv_std.resize(cols);
      for (std::size_t c = 0; c < cols; ++c) t.inv_std[c] = 1.0 / std::sqrt(t.var[c] + kBatchNormEps);
      for (std::size_t r = 0; r < rows; ++r) {
        const auto src = pre.row(r);
        auto dst = t.xhat.row(r);
        for (std::size_t c = 0; c < cols; ++c) dst[c] = (src[c] - t.mean[c]) * t.inv_std[c];
      }
    } else {
      t.inv_std.resize(cols);
      for (std::size_t c = 0; c < cols; ++c) {
        t.inv_std[c] = 1.0 / std::sqrt(layer.bn_running_var[c] + kBatchNormEps);
      }
      for (std::size_t r = 0; r < rows; ++r) {
        const auto src = pre.row(r);
        auto dst = t.xhat.row(r);
        for (std::size_t c = 0; c < cols; ++c) {
          dst[c] = (src[c] - layer.bn_running_mean[c]) * t.inv_std[c];
        }
      }
    }
    for (std::size_t r = 0; r < rows; ++r) {
      const auto src = t.xhat.row(r);
      auto dst = pre.row(r);
      for (std::size_t c = 0; c < cols; ++c) dst[c] = layer.bn_gamma[c] * src[c] + layer.bn_beta[c];
    }
  }
  apply_activation(layer.activation, pre);
  t.output = std::move(pre);
  return t;
}

// Given dLoss/doutput of one layer, fills its gradients and returns
// dLoss/dinput (skipped when `need_input_grad` is false).
Matrix layer_backward(const DenseLayer& layer, const LayerTrace& t, const Matrix& input,
                      Matrix grad, LayerGrads& out, bool need_input_grad) {
  activation_backward(layer.activation, t.output, grad);
  const std::size_t rows = grad.rows();
  const std::size_t cols = grad.cols();

  if (layer.batch_norm) {
    std::vector<double> sum_g(cols, 0.0), sum_gx(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto g = grad.row(r);
      const auto xh = t.xhat.row(r);
      for (std::size_t c = 0; c < cols; ++c) {
        sum_g[c] += g[c];
        sum_gx[c] += g[c] * xh[c];
      }
    }
    out.bn_beta = sum_g;
    out.bn_gamma = sum_gx;
    // dxhat = g * gamma; dpre = inv_std / B * (B dxhat - sum dxhat - xhat sum(dxhat xhat))
    const double b = static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      auto g = grad.row(r);
      const auto xh = t.xhat.row(r);
      for (std::size_t c = 0; c < cols; ++c) {
        const double gamma = layer.bn_gamma[c];
        g[c] = t.inv_std[c] / b *
               (b * g[c] * gamma - sum_g[c] * gamma - xh[c] * sum_gx[c] * gamma);
      }
    }
  }

  out.bias.assign(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto g = grad.row(r);
    for (std::size_t c = 0; c < cols; ++c) out.bias[c] += g[c];
  }
  out.weight = Matrix(layer.out_dim(), layer.in_dim());
  gemm(simd::Trans::kYes, simd::Trans::kNo, 1.0, grad, input, 0.0, out.weight);

  if (!need_input_grad) return {};
  Matrix dx(rows, layer.in_dim());
  gemm(simd::Trans::kNo, simd::Trans::kNo, 1.0, grad, layer.weight, 0.0, dx);
  return dx;
}

void check_trace(const ViewAutoencoder& ae, const ForwardTrace& trace) {
  require(trace.mode == Mode::kTrain, ErrorKind::kStaleTrace,
          "backward needs a train-mode trace");
  require(trace.encoder.size() == ae.encoder.size() && trace.decoder.size() == ae.decoder.size(),
          ErrorKind::kStaleTrace, "trace layer count differs from the model");
  require(trace.input.cols() == ae.input_dim(), ErrorKind::kStaleTrace,
          "trace input width differs from the model");
  auto check = [&](const std::vector<DenseLayer>& layers, const std::vector<LayerTrace>& traces) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      require(traces[i].output.cols() == layers[i].out_dim() &&
                  traces[i].output.rows() == trace.batch_size(),
              ErrorKind::kStaleTrace, "trace shapes drifted from the model");
      require(!layers[i].batch_norm || traces[i].xhat.cols() == layers[i].out_dim(),
              ErrorKind::kStaleTrace, "trace batch-norm state drifted from the model");
    }
  };
  check(ae.encoder, trace.encoder);
  check(ae.decoder, trace.decoder);
}

void push_layer_params(std::vector<TensorRef>& out, const std::string& name, DenseLayer& l) {
  out.push_back({name, "weight", l.weight.values()});
  out.push_back({name, "bias", l.bias});
  if (l.batch_norm) {
    out.push_back({name, "bn_gamma", l.bn_gamma});
    out.push_back({name, "bn_beta", l.bn_beta});
  }
}

void push_layer_grads(std::vector<TensorRef>& out, const std::string& name, LayerGrads& g) {
  out.push_back({name, "weight", g.weight.values()});
  out.push_back({name, "bias", g.bias});
  if (!g.bn_gamma.empty()) {
    out.push_back({name, "bn_gamma", g.bn_gamma});
    out.push_back({name, "bn_beta", g.bn_beta});
  }
}

}  // namespace

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::kRelu:
      return "relu";
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kIdentity:
      return "identity";
  }
  return "identity";
}

Activation parse_activation(std::string_view text) {
  if (text == "relu") return Activation::kRelu;
  if (text == "sigmoid") return Activation::kSigmoid;
  if (text == "identity") return Activation::kIdentity;
  fail(ErrorKind::kFormatError, "unknown activation '" + std::string(text) + "'");
}

AutoencoderShape ViewAutoencoder::shape() const {
  AutoencoderShape s;
  s.input_dim = input_dim();
  s.latent_dim = latent_dim();
  s.hidden_dims.clear();
  for (std::size_t i = 0; i + 1 < encoder.size(); ++i) s.hidden_dims.push_back(encoder[i].out_dim());
  return s;
}

ViewAutoencoder make_autoencoder(std::string view_name, const AutoencoderShape& shape,
                                 std::uint64_t seed) {
  require(shape.input_dim >= 1 && shape.latent_dim >= 1, ErrorKind::kConfigError,
          "autoencoder dimensions must be positive");
  SeededRng rng(seed);
  ViewAutoencoder ae;
  ae.view_name = std::move(view_name);

  std::vector<std::size_t> widths{shape.input_dim};
  widths.insert(widths.end(), shape.hidden_dims.begin(), shape.hidden_dims.end());
  widths.push_back(shape.latent_dim);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = i + 2 == widths.size();
    ae.encoder.push_back(make_layer(widths[i], widths[i + 1], true,
                                    last ? Activation::kIdentity : Activation::kRelu, rng));
  }
  std::reverse(widths.begin(), widths.end());
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = i + 2 == widths.size();
    ae.decoder.push_back(make_layer(widths[i], widths[i + 1], !last,
                                    last ? Activation::kSigmoid : Activation::kRelu, rng));
  }
  return ae;
}

ForwardTrace forward(const ViewAutoencoder& ae, const Matrix& v, Mode mode) {
  require(v.cols() == ae.input_dim(), ErrorKind::kDimensionError,
          "view '" + ae.view_name + "' expects " + std::to_string(ae.input_dim()) +
              " columns, got " + std::to_string(v.cols()));
  require(mode == Mode::kEval || v.rows() >= 2, ErrorKind::kBatchTooSmall,
          "train-mode batch norm needs at least 2 samples");
  ForwardTrace trace;
  trace.mode = mode;
  trace.input = v;
  const Matrix* x = &trace.input;
  trace.encoder.reserve(ae.encoder.size());
  for (const DenseLayer& layer : ae.encoder) {
    trace.encoder.push_back(layer_forward(layer, *x, mode));
    x = &trace.encoder.back().output;
  }
  trace.decoder.reserve(ae.decoder.size());
  for (const DenseLayer& layer : ae.decoder) {
    trace.decoder.push_back(layer_forward(layer, *x, mode));
    x = &trace.decoder.back().output;
  }
  return trace;
}

void update_running_stats(ViewAutoencoder& ae, const ForwardTrace& trace, double momentum) {
  require(trace.mode == Mode::kTrain, ErrorKind::kStaleTrace,
          "running statistics update needs a train-mode trace");
  const double b = static_cast<double>(trace.batch_size());
  auto update = [&](std::vector<DenseLayer>& layers, const std::vector<LayerTrace>& traces) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      DenseLayer& l = layers[i];
      if (!l.batch_norm) continue;
      for (std::size_t c = 0; c < l.out_dim(); ++c) {
        const double unbiased = traces[i].var[c] * b / (b - 1.0);
        l.bn_running_mean[c] = (1.0 - momentum) * l.bn_running_mean[c] + momentum * traces[i].mean[c];
        l.bn_running_var[c] = (1.0 - momentum) * l.bn_running_var[c] + momentum * unbiased;
      }
    }
  };
  update(ae.encoder, trace.encoder);
  update(ae.decoder, trace.decoder);
}

AutoencoderGrads zero_grads(const ViewAutoencoder& ae) {
  auto zeros = [](const std::vector<DenseLayer>& layers) {
    std::vector<LayerGrads> out;
    for (const DenseLayer& l : layers) {
      LayerGrads g;
      g.weight = Matrix(l.out_dim(), l.in_dim());
      g.bias.assign(l.out_dim(), 0.0);
      if (l.batch_norm) {
        g.bn_gamma.assign(l.out_dim(), 0.0);
        g.bn_beta.assign(l.out_dim(), 0.0);
      }
      out.push_back(std::move(g));
    }
    return out;
  };
  return {zeros(ae.encoder), zeros(ae.decoder)};
}

AutoencoderGrads backward(const ViewAutoencoder& ae, const ForwardTrace& trace,
                          const Matrix* grad_reconstruction, const Matrix* grad_latent) {
  check_trace(ae, trace);
  const std::size_t b = trace.batch_size();
  // layer_backward assigns every field, so only an untouched decoder needs zeros.
  AutoencoderGrads grads;
  grads.encoder.resize(ae.encoder.size());
  grads.decoder.resize(ae.decoder.size());
  if (grad_reconstruction == nullptr) grads.decoder = zero_grads(ae).decoder;

  Matrix g;
  if (grad_reconstruction != nullptr) {
    require(grad_reconstruction->rows() == b && grad_reconstruction->cols() == ae.input_dim(),
            ErrorKind::kStaleTrace, "reconstruction gradient shape mismatch");
    g = *grad_reconstruction;
    for (std::size_t i = ae.decoder.size(); i-- > 0;) {
      const Matrix& input = i == 0 ? trace.latent() : trace.decoder[i - 1].output;
      g = layer_backward(ae.decoder[i], trace.decoder[i], input, std::move(g), grads.decoder[i],
                         true);
    }
  } else {
    g = Matrix(b, ae.latent_dim());
  }

  if (grad_latent != nullptr) {
    require(grad_latent->rows() == b && grad_latent->cols() == ae.latent_dim(),
            ErrorKind::kStaleTrace, "latent gradient shape mismatch");
    simd::active().axpy(g.size(), 1.0, grad_latent->data(), g.data());
  }

  for (std::size_t i = ae.encoder.size(); i-- > 0;) {
    const Matrix& input = i == 0 ? trace.input : trace.encoder[i - 1].output;
    g = layer_backward(ae.encoder[i], trace.encoder[i], input, std::move(g), grads.encoder[i],
                       i > 0);
  }
  return grads;
}

std::vector<double> recon_loss(const Matrix& v, const Matrix& v_hat) {
  require(v.rows() == v_hat.rows() && v.cols() == v_hat.cols(), ErrorKind::kDimensionError,
          "reconstruction shape mismatch");
  std::vector<double> out(v.rows());
  const auto& k = simd::active();
  for (std::size_t r = 0; r < v.rows(); ++r) {
    out[r] = k.squared_distance(v.row(r).data(), v_hat.row(r).data(), v.cols());
  }
  return out;
}

Matrix recon_loss_grad(const Matrix& v, const Matrix& v_hat, std::span<const double> coeff) {
  require(v.rows() == v_hat.rows() && v.cols() == v_hat.cols() && coeff.size() == v.rows(),
          ErrorKind::kDimensionError, "reconstruction gradient shape mismatch");
  Matrix g(v.rows(), v.cols());
  for (std::size_t r = 0; r < v.rows(); ++r) {
    const auto a = v.row(r);
    const auto b = v_hat.row(r);
    auto out = g.row(r);
    const double s = -2.0 * coeff[r];
    for (std::size_t c = 0; c < v.cols(); ++c) out[c] = s * (a[c] - b[c]);
  }
  return g;
}

std::vector<double> recon_score(const ViewAutoencoder& ae, const Matrix& v) {
  std::vector<double> out;
  out.reserve(v.rows());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < v.rows(); start += kEvalChunk) {
    const std::size_t end = std::min(v.rows(), start + kEvalChunk);
    idx.resize(end - start);
    for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
    const Matrix chunk = v.select_rows(idx);
    const ForwardTrace t = forward(ae, chunk, Mode::kEval);
    const std::vector<double> s = recon_loss(chunk, t.reconstruction());
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

Matrix encode_eval(const ViewAutoencoder& ae, const Matrix& v) {
  Matrix z(v.rows(), ae.latent_dim());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < v.rows(); start += kEvalChunk) {
    const std::size_t end = std::min(v.rows(), start + kEvalChunk);
    idx.resize(end - start);
    for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
    Matrix x = v.select_rows(idx);
    for (const DenseLayer& layer : ae.encoder) x = layer_forward(layer, x, Mode::kEval).output;
    for (std::size_t i = start; i < end; ++i) {
      const auto src = x.row(i - start);
      std::copy(src.begin(), src.end(), z.row(i).begin());
    }
  }
  return z;
}

std::vector<TensorRef> parameter_views(ViewAutoencoder& ae) {
  std::vector<TensorRef> out;
  for (std::size_t i = 0; i < ae.encoder.size(); ++i) {
    push_layer_params(out, "enc" + std::to_string(i), ae.encoder[i]);
  }
  for (std::size_t i = 0; i < ae.decoder.size(); ++i) {
    push_layer_params(out, "dec" + std::to_string(i), ae.decoder[i]);
  }
  return out;
}

std::vector<TensorRef> gradient_views(AutoencoderGrads& grads) {
  std::vector<TensorRef> out;
  for (std::size_t i = 0; i < grads.encoder.size(); ++i) {
    push_layer_grads(out, "enc" + std::to_string(i), grads.encoder[i]);
  }
  for (std::size_t i = 0; i < grads.decoder.size(); ++i) {
    push_layer_grads(out, "dec" + std::to_string(i), grads.decoder[i]);
  }
  return out;
}

std::vector<TensorRef> buffer_views(ViewAutoencoder& ae) {
  std::vector<TensorRef> out;
  auto push = [&](const std::string& name, DenseLayer& l) {
    if (!l.batch_norm) return;
    out.push_back({name, "bn_running_mean", l.bn_running_mean});
    out.push_back({name, "bn_running_var", l.bn_running_var});
  };
  for (std::size_t i = 0; i < ae.encoder.size(); ++i) push("enc" + std::to_string(i), ae.encoder[i]);
  for (std::size_t i = 0; i < ae.decoder.size(); ++i) push("dec" + std::to_string(i), ae.decoder[i]);
  return out;
}

}  // namespace mvad
