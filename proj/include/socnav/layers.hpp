#pragma once

// Layer kernels with explicit backward passes. Parameters are views into a
// flat parameter vector; gradients accumulate into the matching views.
//
// Convolution activations use an (images * pixels) x channels layout: row
// n * P + p holds pixel p (row-major) of image n.

#include <Eigen/Dense>
#include <vector>

namespace socnav::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using MatrixView = Eigen::Map<Matrix>;
using ConstMatrixView = Eigen::Map<const Matrix>;
using VectorView = Eigen::Map<Vector>;
using ConstVectorView = Eigen::Map<const Vector>;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct ConvShape {
  int in_channels = 1;
  int in_height = 1;
  int in_width = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;

  int out_height() const { return (in_height - kernel) / stride + 1; }
  int out_width() const { return (in_width - kernel) / stride + 1; }
  int in_pixels() const { return in_height * in_width; }
  int out_pixels() const { return out_height() * out_width(); }
  int patch_size() const { return in_channels * kernel * kernel; }
};

// Valid convolution, no activation. weight: out_channels x patch_size.
// `cols` receives the (images * out_pixels) x patch_size patch matrix reused
// by the backward pass.
void conv_forward(const ConvShape& s, int images, const ConstMatrixView& weight,
                  const ConstVectorView& bias, const Matrix& input, Matrix& cols, Matrix& output);
// d_input may be null (first layer).
void conv_backward(const ConvShape& s, int images, const ConstMatrixView& weight,
                   const Matrix& cols, const Matrix& d_output, MatrixView d_weight,
                   VectorView d_bias, Matrix* d_input);

// Y = W X + b (columns are samples).
void dense_forward(const ConstMatrixView& weight, const ConstVectorView& bias, const Matrix& input,
                   Matrix& output);
void dense_backward(const ConstMatrixView& weight, const Matrix& input, const Matrix& d_output,
                    MatrixView d_weight, VectorView d_bias, Matrix* d_input);

void relu_inplace(Matrix& m);
// Zeroes d where the activation output was not positive.
void relu_backward_inplace(const Matrix& activated, Matrix& d);

// Single LSTM layer unrolled over `steps` time steps for `batch` sequences.
// Input columns are time-major: column t * batch + b. Gate order i, f, g, o.
struct LstmCache {
  int steps = 0;
  int batch = 0;
  int hidden = 0;
  Matrix input;  // in x (steps * batch)
  Matrix gates;  // 4H x (steps * batch), post-nonlinearity
  Matrix cell;   // H x (steps * batch)
  Matrix cell_tanh;
  Matrix hidden_out;  // H x (steps * batch)
};

void lstm_forward(const ConstMatrixView& wx, const ConstMatrixView& wh, const ConstVectorView& bias,
                  const Matrix& input, int steps, int batch, LstmCache& cache);
// d_hidden: H x (steps * batch) gradient w.r.t. every hidden output.
void lstm_backward(const ConstMatrixView& wx, const ConstMatrixView& wh, const LstmCache& cache,
                   const Matrix& d_hidden, MatrixView d_wx, MatrixView d_wh, VectorView d_bias,
                   Matrix* d_input);

}  // namespace socnav::nn
