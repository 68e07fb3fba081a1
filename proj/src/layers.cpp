#include "socnav/layers.hpp"

namespace socnav::nn {

void conv_forward(const ConvShape& s, int images, const ConstMatrixView& weight,
                  const ConstVectorView& bias, const Matrix& input, Matrix& cols, Matrix& output) {
  const int p_in = s.in_pixels();
  const int p_out = s.out_pixels();
  const int ho = s.out_height();
  const int wo = s.out_width();
  const int k = s.kernel;
  cols.resize(Eigen::Index(images) * p_out, s.patch_size());
#pragma omp parallel for schedule(static)
  for (int n = 0; n < images; ++n) {
    for (int c = 0; c < s.in_channels; ++c) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const int col = (c * k + ky) * k + kx;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * s.stride + ky;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * s.stride + kx;
              cols(Eigen::Index(n) * p_out + oy * wo + ox, col) =
                  input(Eigen::Index(n) * p_in + iy * s.in_width + ix, c);
            }
          }
        }
      }
    }
  }
  output.noalias() = cols * weight.transpose();
  output.rowwise() += bias.transpose();
}

void conv_backward(const ConvShape& s, int images, const ConstMatrixView& weight,
                   const Matrix& cols, const Matrix& d_output, MatrixView d_weight,
                   VectorView d_bias, Matrix* d_input) {
  d_weight.noalias() += d_output.transpose() * cols;
  d_bias += d_output.colwise().sum().transpose();
  if (!d_input) return;
  const Matrix d_cols = d_output * weight;
  const int p_in = s.in_pixels();
  const int p_out = s.out_pixels();
  const int ho = s.out_height();
  const int wo = s.out_width();
  const int k = s.kernel;
  d_input->setZero(Eigen::Index(images) * p_in, s.in_channels);
#pragma omp parallel for schedule(static)
  for (int n = 0; n < images; ++n) {
    for (int c = 0; c < s.in_channels; ++c) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const int col = (c * k + ky) * k + kx;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * s.stride + ky;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * s.stride + kx;
              (*d_input)(Eigen::Index(n) * p_in + iy * s.in_width + ix, c) +=
                  d_cols(Eigen::Index(n) * p_out + oy * wo + ox, col);
            }
          }
        }
      }
    }
  }
}

void dense_forward(const ConstMatrixView& weight, const ConstVectorView& bias, const Matrix& input,
                   Matrix& output) {
  output.noalias() = weight * input;
  output.colwise() += bias;
}

void dense_backward(const ConstMatrixView& weight, const Matrix& input, const Matrix& d_output,
                    MatrixView d_weight, VectorView d_bias, Matrix* d_input) {
  d_weight.noalias() += d_output * input.transpose();
  d_bias += d_output.rowwise().sum();
  if (d_input) d_input->noalias() = weight.transpose() * d_output;
}

void relu_inplace(Matrix& m) { m = m.cwiseMax(0.0); }

void relu_backward_inplace(const Matrix& activated, Matrix& d) {
  d = (activated.array() > 0.0).select(d, 0.0);
}

void lstm_forward(const ConstMatrixView& wx, const ConstMatrixView& wh, const ConstVectorView& bias,
                  const Matrix& input, int steps, int batch, LstmCache& cache) {
  const int h = static_cast<int>(wh.cols());
  cache.steps = steps;
  cache.batch = batch;
  cache.hidden = h;
  cache.input = input;
  cache.gates.noalias() = wx * input;
  cache.gates.colwise() += bias;
  cache.cell.resize(h, Eigen::Index(steps) * batch);
  cache.cell_tanh.resize(h, Eigen::Index(steps) * batch);
  cache.hidden_out.resize(h, Eigen::Index(steps) * batch);

  for (int t = 0; t < steps; ++t) {
    auto g = cache.gates.middleCols(Eigen::Index(t) * batch, batch);
    if (t > 0) g.noalias() += wh * cache.hidden_out.middleCols(Eigen::Index(t - 1) * batch, batch);
    g.topRows(2 * h) = g.topRows(2 * h).unaryExpr([](double x) { return sigmoid(x); });
    g.middleRows(2 * h, h) = g.middleRows(2 * h, h).array().tanh();
    g.bottomRows(h) = g.bottomRows(h).unaryExpr([](double x) { return sigmoid(x); });

    auto c = cache.cell.middleCols(Eigen::Index(t) * batch, batch);
    c = g.topRows(h).cwiseProduct(g.middleRows(2 * h, h));
    if (t > 0) {
      c += g.middleRows(h, h).cwiseProduct(cache.cell.middleCols(Eigen::Index(t - 1) * batch, batch));
    }
    auto ct = cache.cell_tanh.middleCols(Eigen::Index(t) * batch, batch);
    ct = c.array().tanh();
    cache.hidden_out.middleCols(Eigen::Index(t) * batch, batch) = g.bottomRows(h).cwiseProduct(ct);
  }
}

void lstm_backward(const ConstMatrixView& wx, const ConstMatrixView& wh, const LstmCache& cache,
                   const Matrix& d_hidden, MatrixView d_wx, MatrixView d_wh, VectorView d_bias,
                   Matrix* d_input) {
  const int h = cache.hidden;
  const int batch = cache.batch;
  Matrix d_gates(4 * h, Eigen::Index(cache.steps) * batch);
  Matrix dh_next = Matrix::Zero(h, batch);
  Matrix dc_next = Matrix::Zero(h, batch);

  for (int t = cache.steps - 1; t >= 0; --t) {
    const Eigen::Index off = Eigen::Index(t) * batch;
    const auto g = cache.gates.middleCols(off, batch);
    const auto i_g = g.topRows(h).array();
    const auto f_g = g.middleRows(h, h).array();
    const auto g_g = g.middleRows(2 * h, h).array();
    const auto o_g = g.bottomRows(h).array();
    const auto ct = cache.cell_tanh.middleCols(off, batch).array();

    const Matrix dh = d_hidden.middleCols(off, batch) + dh_next;
    const Eigen::ArrayXXd dc = dc_next.array() + dh.array() * o_g * (1.0 - ct * ct);

    auto dg = d_gates.middleCols(off, batch);
    dg.topRows(h) = (dc * g_g * i_g * (1.0 - i_g)).matrix();
    if (t > 0) {
      const auto c_prev = cache.cell.middleCols(off - batch, batch).array();
      dg.middleRows(h, h) = (dc * c_prev * f_g * (1.0 - f_g)).matrix();
    } else {
      dg.middleRows(h, h).setZero();
    }
    dg.middleRows(2 * h, h) = (dc * i_g * (1.0 - g_g * g_g)).matrix();
    dg.bottomRows(h) = (dh.array() * ct * o_g * (1.0 - o_g)).matrix();

    dc_next = (dc * f_g).matrix();
    if (t > 0) {
      d_wh.noalias() += dg * cache.hidden_out.middleCols(off - batch, batch).transpose();
      dh_next.noalias() = wh.transpose() * dg;
    }
  }
  d_wx.noalias() += d_gates * cache.input.transpose();
  d_bias += d_gates.rowwise().sum();
  if (d_input) d_input->noalias() = wx.transpose() * d_gates;
}

}  // namespace socnav::nn
