"""Independent reference implementations used only by the tests."""

import math

import numpy as np


def naive_conv2d(x, kernel, bias, stride, pad):
    """Scalar-loop cross-correlation.

    Accumulates taps in (in_channel, row, col) order starting from 0.0 and adds
    the bias last.
    """
    (top, bottom), (left, right) = pad
    sh, sw = stride
    bsz, cin, h, w = x.shape
    cout, _, kh, kw = kernel.shape
    xp = np.zeros((bsz, cin, h + top + bottom, w + left + right), dtype=x.dtype)
    xp[:, :, top:top + h, left:left + w] = x
    ho = (xp.shape[2] - kh) // sh + 1
    wo = (xp.shape[3] - kw) // sw + 1
    out = np.zeros((bsz, cout, ho, wo), dtype=x.dtype)
    for b in range(bsz):
        for o in range(cout):
            for i in range(ho):
                for j in range(wo):
                    acc = x.dtype.type(0.0)
                    for c in range(cin):
                        for ki in range(kh):
                            for kj in range(kw):
                                acc = acc + xp[b, c, i * sh + ki, j * sw + kj] * kernel[o, c, ki, kj]
                    out[b, o, i, j] = acc + bias[o]
    return out


def softmax_row(z):
    m = max(z)
    e = [math.exp(v - m) for v in z]
    s = sum(e)
    return [v / s for v in e]


def entropy_row(p):
    return -sum(v * math.log(v) for v in p if v > 0)


def single_pass_stats(matrices):
    """Running sum / sum of squares in float64 (not the two-pass path under test)."""
    n = 0
    s = 0.0
    sq = 0.0
    for m in matrices:
        for v in np.asarray(m, dtype=np.float64).ravel():
            n += 1
            s += v
            sq += v * v
    mean = s / n
    return mean, math.sqrt(max(sq / n - mean * mean, 0.0)), n


def adam_reference(theta, grad_fn, steps, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar Adam written straight from the update equations."""
    m = v = 0.0
    for t in range(1, steps + 1):
        g = grad_fn(theta)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        theta = theta - lr * m_hat / (math.sqrt(v_hat) + eps)
    return theta


def confusion_at(scores, labels, threshold):
    """(far, frr) by direct counting with accept iff score >= threshold."""
    fp = fn = pos = neg = 0
    for s, l in zip(scores, labels):
        if l:
            pos += 1
            fn += s < threshold
        else:
            neg += 1
            fp += s >= threshold
    return fp / neg, fn / pos


def dft_power(frame, n):
    """Direct O(n^2) DFT power of a zero-padded frame, all n bins."""
    x = np.zeros(n)
    x[:len(frame)] = frame
    k = np.arange(n)
    basis = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return np.abs(basis @ x) ** 2
