"""Slow, loop-based reference implementations used only by the tests."""
import cmath
import math

import numpy as np


def brute_dft2d(frame):
    """Centred spectrum by the literal double sum, one bin at a time."""
    frame = np.asarray(frame, dtype=np.float64)
    h, w = frame.shape
    out = np.zeros((h, w), dtype=np.complex128)
    for u in range(h):
        for v in range(w):
            acc = 0j
            for y in range(h):
                for x in range(w):
                    acc += frame[y, x] * cmath.exp(-2j * math.pi * (u * y / h + v * x / w))
            out[u, v] = acc
    return np.fft.fftshift(out)


def brute_cutoff(magnitude, p):
    """Scan the distinct radii in increasing order until the enclosed share reaches p."""
    magnitude = np.asarray(magnitude, dtype=np.float64)
    h, w = magnitude.shape
    u0, v0 = h // 2, w // 2
    radius = {}
    for u in range(h):
        for v in range(w):
            radius[(u, v)] = math.sqrt((u - u0) ** 2 + (v - v0) ** 2)
    total = sum(magnitude[k] for k in radius)
    for r in sorted(set(radius.values())):
        enclosed = sum(magnitude[k] for k, rk in radius.items() if rk <= r)
        if enclosed / total >= p:
            return r
    return max(radius.values())


def brute_high_freq_magnitude(frame, p):
    spec = brute_dft2d(frame)
    cutoff = brute_cutoff(np.abs(spec), p)
    h, w = frame.shape
    high = np.zeros_like(spec)
    for u in range(h):
        for v in range(w):
            if math.hypot(u - h // 2, v - w // 2) > cutoff:
                high[u, v] = spec[u, v]
    back = np.fft.ifft2(np.fft.ifftshift(high))
    return np.abs(back.real)


def central_difference_grads(loss_fn, params, h=1e-3):
    """Per-element central differences of a scalar loss, one perturbation at a time."""
    import torch

    grads = []
    with torch.no_grad():
        for p in params:
            fd = torch.zeros_like(p)
            flat, fd_flat = p.data.view(-1), fd.view(-1)
            for i in range(flat.numel()):
                old = flat[i].item()
                flat[i] = old + h
                up = float(loss_fn())
                flat[i] = old - h
                down = float(loss_fn())
                flat[i] = old
                fd_flat[i] = (up - down) / (2 * h)
            grads.append(fd)
    return grads
