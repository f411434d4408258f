"""Independent brute-force references used to cross-check the vectorized
implementations. These are deliberately written as literal per-pixel loops
and share no code with the library."""

import numpy as np


def naive_directional_scan(x, axis, g, weight, bias, tau, v_th):
    """Literal per-pixel group-step LIF recurrence.

    x: (N, C, H, W); weight: (C, C); scalar tau/v_th. Returns the scan
    output with the same shape, computed one neuron at a time:
      y = W @ x_slab + b; u' = tau*u*(1-o) + y; o' = [u' > v_th];
      r = max(u', v_th).
    """
    n, c, h, w = x.shape
    out = np.zeros_like(x, dtype=np.float64)
    xd = x.astype(np.float64)
    wd = weight.astype(np.float64)
    bd = bias.astype(np.float64)
    if axis == "horizontal":
        extent, other = w, h
    else:
        extent, other = h, w
    slab = extent // g
    for bi in range(n):
        for oi in range(other):
            for si in range(slab):
                u = np.zeros(c)
                o = np.zeros(c)
                for gi in range(g):
                    pos = gi * slab + si
                    if axis == "horizontal":
                        vec = xd[bi, :, oi, pos]
                    else:
                        vec = xd[bi, :, pos, oi]
                    y = wd @ vec + bd
                    u = tau * u * (1.0 - o) + y
                    o = (u > v_th).astype(np.float64)
                    r = np.maximum(u, v_th)
                    if axis == "horizontal":
                        out[bi, :, oi, pos] = r
                    else:
                        out[bi, :, pos, oi] = r
    return out


def naive_ssim(a, b, win, k1=0.01, k2=0.03, drange=1.0):
    """Double-loop windowed SSIM over valid positions; a, b grayscale 2-D."""
    c1 = (k1 * drange) ** 2
    c2 = (k2 * drange) ** 2
    kh, kw = win.shape
    h, w = a.shape
    vals = []
    for i in range(h - kh + 1):
        for j in range(w - kw + 1):
            pa = a[i:i + kh, j:j + kw]
            pb = b[i:i + kh, j:j + kw]
            mu_a = (win * pa).sum()
            mu_b = (win * pb).sum()
            var_a = (win * pa * pa).sum() - mu_a ** 2
            var_b = (win * pb * pb).sum() - mu_b ** 2
            cov = (win * pa * pb).sum() - mu_a * mu_b
            num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
            den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
            vals.append(num / den)
    return float(np.mean(vals))


def naive_conv2d(x, kernel, bias, stride=1, padding=0):
    """Quadruple-loop direct cross-correlation."""
    n, cin, h, w = x.shape
    cout, _, kh, kw = kernel.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((n, cout, ho, wo))
    for bi in range(n):
        for oc in range(cout):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[bi, :, i * stride:i * stride + kh,
                               j * stride:j * stride + kw]
                    out[bi, oc, i, j] = (patch * kernel[oc]).sum() + bias[oc]
    return out
