#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "rsbp/nn/layers.hpp"
#include "rsbp/tensor.hpp"

namespace rsbp::nn {

// Convolutional LSTM cell. One fused gate kernel convolves the
// channel-concatenated [x_t, h_{t-1}] with 3x3 same padding:
//
//   [i f g o] = W * [x, h] + b         (gate blocks of C_hidden channels)
//   i = sigmoid(i), f = sigmoid(f), g = tanh(g), o = sigmoid(o)
//   c' = f (.) c + i (.) g
//   h' = o (.) tanh(c')
//
// Optional per-channel peephole terms add p_i (.) c and p_f (.) c to the
// input/forget gates and p_o (.) c' to the output gate before squashing.

template <typename T>
struct ConvLstmState {
  Tensor<T> h, c;  // both (B,H,W,C_hidden)

  static ConvLstmState zeros(int b, int h, int w, int c_hidden) {
    ConvLstmState s;
    s.h = Tensor<T>({b, h, w, c_hidden});
    s.c = Tensor<T>({b, h, w, c_hidden});
    return s;
  }
};

template <typename T>
struct ConvLstmPeephole {
  const Tensor<T>* p_i = nullptr;  // (C_hidden) each; all null when disabled
  const Tensor<T>* p_f = nullptr;
  const Tensor<T>* p_o = nullptr;
  bool enabled() const { return p_i != nullptr; }
};

template <typename T>
struct ConvLstmStepCache {
  Tensor<T> xh;      // gate-conv input: concat(x_t, h_{t-1})
  Tensor<T> gates;   // post-activation (B,H,W,4*C_hidden), order [i,f,g,o]
  Tensor<T> c;       // new cell state
  Tensor<T> tanh_c;  // tanh of the new cell state
};

namespace detail {
template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}
}  // namespace detail

template <typename T>
ConvLstmState<T> conv_lstm_step(const Tensor<T>& x, const ConvLstmState<T>& prev,
                                const Tensor<T>& w, const Tensor<T>& b,
                                const ConvLstmPeephole<T>& peep,
                                ConvLstmStepCache<T>* cache = nullptr) {
  if (x.rank() != 4) throw std::invalid_argument("conv_lstm_step: rank 4 input");
  check_same_shape(prev.h, prev.c, "conv_lstm_step state");
  if (prev.h.dim(0) != x.dim(0) || prev.h.dim(1) != x.dim(1) ||
      prev.h.dim(2) != x.dim(2))
    throw std::invalid_argument("conv_lstm_step: state/input spatial mismatch");
  const int hid = prev.h.dim(3);
  if (w.dim(2) != x.dim(3) + hid || w.dim(3) != 4 * hid)
    throw std::invalid_argument("conv_lstm_step: gate kernel shape mismatch");

  Tensor<T> xh = concat_channels(x, prev.h);
  Tensor<T> pre = conv2d_forward(xh, w, b, Padding::same);

  const size_t pixels = pre.size() / (4 * hid);
  Tensor<T> gates(pre.shape);
  ConvLstmState<T> next;
  next.c = Tensor<T>(prev.c.shape);
  next.h = Tensor<T>(prev.h.shape);
  Tensor<T> tanh_c(prev.c.shape);

  for (size_t p = 0; p < pixels; ++p) {
    const T* pp = &pre.v[p * 4 * hid];
    const T* pc = &prev.c.v[p * hid];
    T* pg = &gates.v[p * 4 * hid];
    T* pnc = &next.c.v[p * hid];
    T* pnh = &next.h.v[p * hid];
    T* ptc = &tanh_c.v[p * hid];
    for (int ch = 0; ch < hid; ++ch) {
      T zi = pp[ch], zf = pp[hid + ch], zg = pp[2 * hid + ch],
        zo = pp[3 * hid + ch];
      if (peep.enabled()) {
        zi += peep.p_i->v[ch] * pc[ch];
        zf += peep.p_f->v[ch] * pc[ch];
      }
      const T i = detail::sigmoid(zi);
      const T f = detail::sigmoid(zf);
      const T g = std::tanh(zg);
      const T c_new = f * pc[ch] + i * g;
      if (peep.enabled()) zo += peep.p_o->v[ch] * c_new;
      const T o = detail::sigmoid(zo);
      const T tc = std::tanh(c_new);
      pg[ch] = i;
      pg[hid + ch] = f;
      pg[2 * hid + ch] = g;
      pg[3 * hid + ch] = o;
      pnc[ch] = c_new;
      ptc[ch] = tc;
      pnh[ch] = o * tc;
    }
  }

  if (cache) {
    cache->xh = std::move(xh);
    cache->gates = std::move(gates);
    cache->c = next.c;
    cache->tanh_c = std::move(tanh_c);
  }
  return next;
}

// Reverse-mode step. dh/dc are the gradients flowing into this step's
// outputs; c_prev is the cell state the step consumed. Parameter
// gradients accumulate; returns gradients for x_t, h_{t-1}, c_{t-1}.
template <typename T>
struct ConvLstmStepGrads {
  Tensor<T> dx, dh_prev, dc_prev;
};

template <typename T>
ConvLstmStepGrads<T> conv_lstm_step_backward(
    const Tensor<T>& dh, const Tensor<T>& dc, const Tensor<T>& c_prev,
    const ConvLstmStepCache<T>& cache, const Tensor<T>& w,
    const ConvLstmPeephole<T>& peep, Tensor<T>& dw, Tensor<T>& db,
    Tensor<T>* dp_i = nullptr, Tensor<T>* dp_f = nullptr,
    Tensor<T>* dp_o = nullptr) {
  if (cache.gates.size() == 0)
    throw std::logic_error("conv_lstm_step_backward: missing forward cache");
  const int hid = dh.dim(3);
  const size_t pixels = dh.size() / hid;

  Tensor<T> dpre(cache.gates.shape);
  ConvLstmStepGrads<T> out;
  out.dc_prev = Tensor<T>(dc.shape);

  for (size_t p = 0; p < pixels; ++p) {
    const T* pg = &cache.gates.v[p * 4 * hid];
    const T* pc_prev = &c_prev.v[p * hid];
    const T* pc = &cache.c.v[p * hid];
    const T* ptc = &cache.tanh_c.v[p * hid];
    const T* pdh = &dh.v[p * hid];
    const T* pdc = &dc.v[p * hid];
    T* pd = &dpre.v[p * 4 * hid];
    T* pdcp = &out.dc_prev.v[p * hid];
    for (int ch = 0; ch < hid; ++ch) {
      const T i = pg[ch], f = pg[hid + ch], g = pg[2 * hid + ch],
              o = pg[3 * hid + ch];
      const T tc = ptc[ch];
      const T dzo = pdh[ch] * tc * o * (T(1) - o);
      T dct = pdc[ch] + pdh[ch] * o * (T(1) - tc * tc);
      if (peep.enabled()) {
        dct += dzo * peep.p_o->v[ch];
        if (dp_o) dp_o->v[ch] += dzo * pc[ch];
      }
      const T dzi = dct * g * i * (T(1) - i);
      const T dzf = dct * pc_prev[ch] * f * (T(1) - f);
      const T dzg = dct * i * (T(1) - g * g);
      T dcp = dct * f;
      if (peep.enabled()) {
        dcp += dzi * peep.p_i->v[ch] + dzf * peep.p_f->v[ch];
        if (dp_i) dp_i->v[ch] += dzi * pc_prev[ch];
        if (dp_f) dp_f->v[ch] += dzf * pc_prev[ch];
      }
      pd[ch] = dzi;
      pd[hid + ch] = dzf;
      pd[2 * hid + ch] = dzg;
      pd[3 * hid + ch] = dzo;
      pdcp[ch] = dcp;
    }
  }

  Tensor<T> dxh = conv2d_backward(cache.xh, w, dpre, Padding::same, dw, db);
  const int cin = cache.xh.dim(3) - hid;
  split_channels_backward(dxh, cin, out.dx, out.dh_prev);
  return out;
}

}  // namespace rsbp::nn
