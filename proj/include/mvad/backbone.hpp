#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mvad/linalg.hpp"

namespace mvad {

enum class Activation { kRelu, kSigmoid, kIdentity };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view text);

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Affine map (weight out x in, bias), optional batch norm, then activation.
struct DenseLayer {
  Matrix weight;
  std::vector<double> bias;
  bool batch_norm = false;
  std::vector<double> bn_gamma;
  std::vector<double> bn_beta;
  std::vector<double> bn_running_mean;
  std::vector<double> bn_running_var;
  Activation activation = Activation::kIdentity;

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }
};

struct AutoencoderShape {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims{512, 256};
  std::size_t latent_dim = 128;
};

// Encoder input -> hidden... -> latent; decoder mirrors the hidden widths and
// ends in a sigmoid. Every layer except the decoder output carries batch
// norm; the latent layer has no nonlinearity.
struct ViewAutoencoder {
  std::string view_name;
  std::vector<DenseLayer> encoder;
  std::vector<DenseLayer> decoder;

  std::size_t input_dim() const { return encoder.front().in_dim(); }
  std::size_t latent_dim() const { return encoder.back().out_dim(); }
  AutoencoderShape shape() const;
};

// Glorot-uniform weights from `seed`, zero biases, gamma 1, beta 0, running
// statistics (0, 1).
ViewAutoencoder make_autoencoder(std::string view_name, const AutoencoderShape& shape,
                                 std::uint64_t seed);

enum class Mode { kTrain, kEval };

struct LayerTrace {
  Matrix xhat;                   // normalised pre-activation (batch norm only)
  std::vector<double> mean;      // batch statistics (train mode)
  std::vector<double> var;       // biased
  std::vector<double> inv_std;
  Matrix output;                 // post-activation
};

struct ForwardTrace {
  Mode mode = Mode::kEval;
  Matrix input;
  std::vector<LayerTrace> encoder;
  std::vector<LayerTrace> decoder;

  std::size_t batch_size() const { return input.rows(); }
  const Matrix& latent() const { return encoder.back().output; }
  const Matrix& reconstruction() const { return decoder.back().output; }
};

// Pure: train mode normalises with batch statistics but leaves the running
// statistics untouched (see update_running_stats). BatchTooSmall for B < 2 in
// train mode.
ForwardTrace forward(const ViewAutoencoder& ae, const Matrix& v, Mode mode);

void update_running_stats(ViewAutoencoder& ae, const ForwardTrace& trace,
                          double momentum = kBatchNormMomentum);

struct LayerGrads {
  Matrix weight;
  std::vector<double> bias;
  std::vector<double> bn_gamma;
  std::vector<double> bn_beta;
};

struct AutoencoderGrads {
  std::vector<LayerGrads> encoder;
  std::vector<LayerGrads> decoder;
};

AutoencoderGrads zero_grads(const ViewAutoencoder& ae);

// Backpropagates dLoss/dReconstruction and dLoss/dLatent (either may be null)
// through a train-mode trace, batch-norm statistics included. StaleTrace if
// the trace does not match the model or was not produced in train mode.
AutoencoderGrads backward(const ViewAutoencoder& ae, const ForwardTrace& trace,
                          const Matrix* grad_reconstruction, const Matrix* grad_latent);

// ||v_i - v_hat_i||^2 per row, no averaging over dimensions.
std::vector<double> recon_loss(const Matrix& v, const Matrix& v_hat);

// Gradient of sum_i c_i ||v_i - v_hat_i||^2 with respect to v_hat.
Matrix recon_loss_grad(const Matrix& v, const Matrix& v_hat, std::span<const double> coeff);

// Eval-mode forward in row chunks, then recon_loss. Rows never interact in
// eval mode, so chunking does not affect the values.
std::vector<double> recon_score(const ViewAutoencoder& ae, const Matrix& v);
Matrix encode_eval(const ViewAutoencoder& ae, const Matrix& v);

// Named views over every trainable tensor, in a fixed order shared with
// gradient_views(). Used by the optimizer, serialization and gradient checks.
struct TensorRef {
  std::string layer;
  std::string name;
  std::span<double> data;
};

std::vector<TensorRef> parameter_views(ViewAutoencoder& ae);
std::vector<TensorRef> gradient_views(AutoencoderGrads& grads);
// Running statistics (not trainable).
std::vector<TensorRef> buffer_views(ViewAutoencoder& ae);

}  // namespace mvad
