/* Elementwise LSTM cell updates for the compiled kernel.
 *
 * glibc's scalar tanh is ~30x slower than numpy's SIMD ufunc, so the gate
 * nonlinearities are computed here with a branch-free exp that only ever
 * sees y <= 0: Cody-Waite reduction y = k ln2 + r, a Taylor polynomial for
 * exp(r), and 2^k written into the exponent bits.  Absolute error is a few
 * ulp of 1.  Every routine works on one contiguous row so that -O3
 * auto-vectorizes it.
 *
 * Floating-point selects go through dc_sel_*, an integer bit blend: GCC
 * will not if-convert a plain `c ? a : b` on floats under its default
 * trapping-math model, and the loops would stay scalar.
 *
 * On x86-64 GCC the row routines are also cloned for AVX2 and picked at
 * load time; other compilers get the baseline build.
 *
 * Gate layout within a row of width 4H: input, forget, cell, output.
 */
#ifndef DUALCHANNEL_LSTM_MATH_H
#define DUALCHANNEL_LSTM_MATH_H

#include <stddef.h>
#include <stdint.h>
#include <string.h>

#if defined(__GNUC__) && !defined(__clang__) && defined(__x86_64__) && defined(__linux__)
#define DC_CLONES __attribute__((target_clones("avx2", "default")))
#else
#define DC_CLONES
#endif

static inline double dc_sel_d(int c, double a, double b)
{
    int64_t ab, bb, m = -(int64_t)(c != 0);
    memcpy(&ab, &a, sizeof ab);
    memcpy(&bb, &b, sizeof bb);
    ab = (ab & m) | (bb & ~m);
    memcpy(&a, &ab, sizeof a);
    return a;
}

static inline float dc_sel_f(int c, float a, float b)
{
    int32_t ab, bb, m = -(int32_t)(c != 0);
    memcpy(&ab, &a, sizeof ab);
    memcpy(&bb, &b, sizeof bb);
    ab = (ab & m) | (bb & ~m);
    memcpy(&a, &ab, sizeof a);
    return a;
}

static inline double dc_expneg_d(double y)
{
    const double shifter = 6755399441055744.0; /* 1.5 * 2^52 */
    double t, kd, r, p, scale;
    int64_t bits, k;
    y = dc_sel_d(y < -700.0, -700.0, y);
    t = y * 1.4426950408889634 + shifter;
    kd = t - shifter;
    memcpy(&bits, &t, sizeof bits);
    k = bits - 0x4338000000000000LL;
    r = y - kd * 6.93147180369123816490e-01;
    r = r - kd * 1.90821492927058770002e-10;
    p = 1.0 / 6227020800.0;
    p = p * r + 1.0 / 479001600.0;
    p = p * r + 1.0 / 39916800.0;
    p = p * r + 1.0 / 3628800.0;
    p = p * r + 1.0 / 362880.0;
    p = p * r + 1.0 / 40320.0;
    p = p * r + 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    bits = (k + 1023) << 52;
    memcpy(&scale, &bits, sizeof scale);
    return p * scale;
}

static inline float dc_expneg_f(float y)
{
    const float shifter = 12582912.0f; /* 1.5 * 2^23 */
    float t, kf, r, p, scale;
    int32_t bits, k;
    y = dc_sel_f(y < -80.0f, -80.0f, y);
    t = y * 1.44269504f + shifter;
    kf = t - shifter;
    memcpy(&bits, &t, sizeof bits);
    k = bits - 0x4B400000;
    r = y - kf * 0.693145752f;
    r = r - kf * 1.42860677e-06f;
    p = 1.0f / 5040.0f;
    p = p * r + 1.0f / 720.0f;
    p = p * r + 1.0f / 120.0f;
    p = p * r + 1.0f / 24.0f;
    p = p * r + 1.0f / 6.0f;
    p = p * r + 0.5f;
    p = p * r + 1.0f;
    p = p * r + 1.0f;
    bits = (k + 127) << 23;
    memcpy(&scale, &bits, sizeof scale);
    return p * scale;
}

#define DC_DEFINE(T, S)                                                              \
static inline T dc_tanh_##S(T x)                                                     \
{                                                                                    \
    T nx = -x;                                                                       \
    T m = dc_sel_##S(x < 0, x, nx);                                                  \
    T e = dc_expneg_##S(m + m);                                                      \
    T t = (1 - e) / (1 + e);                                                         \
    T nt = -t;                                                                       \
    return dc_sel_##S(x < 0, nt, t);                                                 \
}                                                                                    \
                                                                                     \
static inline T dc_sigmoid_##S(T x)                                                  \
{                                                                                    \
    T nx = -x;                                                                       \
    T e = dc_expneg_##S(dc_sel_##S(x < 0, x, nx));                                   \
    T s = 1 / (1 + e);                                                               \
    T es = e * s;                                                                    \
    return dc_sel_##S(x < 0, es, s);                                                 \
}                                                                                    \
                                                                                     \
DC_CLONES static void dc_sigmoid_row_##S(T *restrict x, ptrdiff_t n)                           \
{                                                                                    \
    for (ptrdiff_t j = 0; j < n; j++) x[j] = dc_sigmoid_##S(x[j]);                   \
}                                                                                    \
                                                                                     \
DC_CLONES static void dc_tanh_row_##S(T *restrict x, ptrdiff_t n)                              \
{                                                                                    \
    for (ptrdiff_t j = 0; j < n; j++) x[j] = dc_tanh_##S(x[j]);                      \
}                                                                                    \
                                                                                     \
/* g: pre-activations in, activations out.  Inactive rows copy the state. */        \
DC_CLONES static void dc_cell_forward_##S(T *restrict g, const T *restrict c_prev,             \
                                const T *restrict h_prev, T *restrict c_new,         \
                                T *restrict h_new, ptrdiff_t H, int active)          \
{                                                                                    \
    dc_sigmoid_row_##S(g, 2 * H);                                                    \
    dc_tanh_row_##S(g + 2 * H, H);                                                   \
    dc_sigmoid_row_##S(g + 3 * H, H);                                                \
    if (!active) {                                                                   \
        memcpy(c_new, c_prev, H * sizeof(T));                                        \
        memcpy(h_new, h_prev, H * sizeof(T));                                        \
        return;                                                                      \
    }                                                                                \
    for (ptrdiff_t j = 0; j < H; j++)                                                \
        c_new[j] = g[H + j] * c_prev[j] + g[j] * g[2 * H + j];                       \
    for (ptrdiff_t j = 0; j < H; j++)                                                \
        h_new[j] = g[3 * H + j] * dc_tanh_##S(c_new[j]);                             \
}                                                                                    \
                                                                                     \
/* One active step of backprop through a row.  dh_out receives dL/dh_t        */    \
/* including the carried term; dc is updated in place to dL/dc_{t-1}.         */    \
DC_CLONES static void dc_cell_backward_##S(const T *restrict g, const T *restrict c_prev,      \
                                 const T *restrict c_new, const T *restrict dh_ext,  \
                                 const T *restrict dh_carry, T *restrict dc,         \
                                 T *restrict dz, ptrdiff_t H)                        \
{                                                                                    \
    for (ptrdiff_t j = 0; j < H; j++) {                                              \
        T ig = g[j], fg = g[H + j], gg = g[2 * H + j], og = g[3 * H + j];            \
        T tc = dc_tanh_##S(c_new[j]);                                                \
        T dht = dh_ext[j] + dh_carry[j];                                             \
        T dcn = dc[j] + dht * og * (1 - tc * tc);                                    \
        dz[j] = dcn * gg * ig * (1 - ig);                                            \
        dz[H + j] = dcn * c_prev[j] * fg * (1 - fg);                                 \
        dz[2 * H + j] = dcn * ig * (1 - gg * gg);                                    \
        dz[3 * H + j] = dht * tc * og * (1 - og);                                    \
        dc[j] = dcn * fg;                                                            \
    }                                                                                \
}

DC_DEFINE(float, f)
DC_DEFINE(double, d)

#undef DC_DEFINE

#endif
