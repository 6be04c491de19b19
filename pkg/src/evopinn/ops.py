"""Operator library for activation-function expression trees.

23 unary and 6 binary operators. Each unary operator evaluates a second-order
jet (value, first, second derivative) over a numeric backend so the same
definitions serve scalar checks (numpy) and batched training graphs (torch).
"""

from __future__ import annotations

import math
from types import SimpleNamespace

import numpy as np
import scipy.special as _sp

_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)


def numpy_backend():
    return SimpleNamespace(
        name="numpy",
        exp=np.exp,
        log=np.log,
        sqrt=np.sqrt,
        sin=np.sin,
        cos=np.cos,
        sinh=np.sinh,
        cosh=np.cosh,
        tanh=np.tanh,
        atan=np.arctan,
        asinh=np.arcsinh,
        erf=_sp.erf,
        erfc=_sp.erfc,
        sigmoid=_sp.expit,
        softplus=lambda v: np.logaddexp(0.0, v),
        abs=np.abs,
        sign=np.sign,
        where=np.where,
        maximum=np.maximum,
        minimum=np.minimum,
    )


_TORCH_BACKEND = None


def torch_backend():
    """Torch backend (float64 tensors). Imported lazily."""
    global _TORCH_BACKEND
    if _TORCH_BACKEND is None:
        import torch

        def _asinh(v):
            # torch.asinh is an order of magnitude slower than this on CPU
            return torch.sign(v) * torch.log(torch.abs(v) + torch.sqrt(v * v + 1.0))

        _TORCH_BACKEND = SimpleNamespace(
            name="torch",
            exp=torch.exp,
            log=torch.log,
            sqrt=torch.sqrt,
            sin=torch.sin,
            cos=torch.cos,
            sinh=torch.sinh,
            cosh=torch.cosh,
            tanh=torch.tanh,
            atan=torch.atan,
            asinh=_asinh,
            erf=torch.erf,
            erfc=torch.erfc,
            sigmoid=torch.sigmoid,
            softplus=lambda v: torch.logaddexp(torch.zeros((), dtype=v.dtype), v),
            abs=torch.abs,
            sign=torch.sign,
            where=torch.where,
            maximum=torch.maximum,
            minimum=torch.minimum,
        )
    return _TORCH_BACKEND


# ---------------------------------------------------------------------------
# unary jets: op id -> callable(B, v) returning (f, f', f'')

def _jet_id(B, v):
    return v, 1.0, 0.0


def _jet_neg(B, v):
    return -v, -1.0, 0.0


def _jet_recip(B, v):
    r = 1.0 / v
    return r, -r * r, 2.0 * r * r * r


def _jet_square(B, v):
    return v * v, 2.0 * v, 2.0


def _jet_exp(B, v):
    e = B.exp(v)
    return e, e, e


def _jet_exp_p1(B, v):
    e = B.exp(v)
    return e + 1.0, e, e


def _jet_nexp_p1(B, v):
    en = B.exp(-v)
    return en + 1.0, -en, en


def _jet_exp_m1(B, v):
    e = B.exp(v)
    return e - 1.0, e, e


def _jet_exp2cosh(B, v):
    e = B.exp(v)
    en = B.exp(-v)
    return e + en, e - en, e + en


def _jet_exp2sinh(B, v):
    e = B.exp(v)
    en = B.exp(-v)
    return e - en, e + en, e - en


def _jet_sin(B, v):
    s = B.sin(v)
    c = B.cos(v)
    return s, c, -s


def _jet_sinh(B, v):
    s = B.sinh(v)
    c = B.cosh(v)
    return s, c, s


def _jet_asinh(B, v):
    r = 1.0 / B.sqrt(1.0 + v * v)
    return B.asinh(v), r, -v * r * r * r


def _jet_cos(B, v):
    s = B.sin(v)
    c = B.cos(v)
    return c, -s, -c


def _jet_cosh(B, v):
    s = B.sinh(v)
    c = B.cosh(v)
    return c, s, c


def _jet_tanh(B, v):
    t = B.tanh(v)
    u = 1.0 - t * t
    return t, u, -2.0 * t * u


def _jet_atan(B, v):
    w = 1.0 / (1.0 + v * v)
    return B.atan(v), w, -2.0 * v * w * w


def _jet_erf(B, v):
    g = _TWO_OVER_SQRT_PI * B.exp(-v * v)
    return B.erf(v), g, -2.0 * v * g


def _jet_erfc(B, v):
    g = _TWO_OVER_SQRT_PI * B.exp(-v * v)
    return B.erfc(v), -g, 2.0 * v * g


def _jet_sigmoid(B, v):
    s = B.sigmoid(v)
    u = s * (1.0 - s)
    return s, u, u * (1.0 - 2.0 * s)


def _jet_softsign(B, v):
    r = 1.0 / (1.0 + B.abs(v))
    r2 = r * r
    return v * r, r2, -2.0 * B.sign(v) * r2 * r


def _jet_swish(B, v):
    s = B.sigmoid(v)
    u = s * (1.0 - s)
    return v * s, s + v * u, 2.0 * u + v * u * (1.0 - 2.0 * s)


def _jet_softplus(B, v):
    s = B.sigmoid(v)
    return B.softplus(v), s, s * (1.0 - s)


UNARY_JETS = {
    "id": _jet_id,
    "neg": _jet_neg,
    "recip": _jet_recip,
    "square": _jet_square,
    "exp": _jet_exp,
    "exp_p1": _jet_exp_p1,
    "nexp_p1": _jet_nexp_p1,
    "exp_m1": _jet_exp_m1,
    "exp2cosh": _jet_exp2cosh,
    "exp2sinh": _jet_exp2sinh,
    "sin": _jet_sin,
    "sinh": _jet_sinh,
    "asinh": _jet_asinh,
    "cos": _jet_cos,
    "cosh": _jet_cosh,
    "tanh": _jet_tanh,
    "atan": _jet_atan,
    "erf": _jet_erf,
    "erfc": _jet_erfc,
    "sigmoid": _jet_sigmoid,
    "softsign": _jet_softsign,
    "swish": _jet_swish,
    "softplus": _jet_softplus,
}

UNARY_IDS = tuple(UNARY_JETS)
BINARY_IDS = ("add", "sub", "mul", "div", "max", "min")

BINARY_SYMBOLS = {"add": "+", "sub": "-", "mul": "*", "div": "/"}


def binary_value(B, op, a, b):
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return a / b
    if op == "max":
        return B.maximum(a, b)
    if op == "min":
        return B.minimum(a, b)
    raise KeyError(op)


def binary_jet(B, op, left, right, order):
    """Combine two jets (tuples of length order+1) under a binary operator."""
    a, b = left[0], right[0]
    if op == "add":
        return tuple(x + y for x, y in zip(left, right))
    if op == "sub":
        return tuple(x - y for x, y in zip(left, right))
    if op == "mul":
        out = [a * b]
        if order >= 1:
            out.append(left[1] * b + a * right[1])
        if order >= 2:
            out.append(left[2] * b + 2.0 * left[1] * right[1] + a * right[2])
        return tuple(out)
    if op == "div":
        q = a / b
        out = [q]
        if order >= 1:
            q1 = (left[1] - q * right[1]) / b
            out.append(q1)
        if order >= 2:
            out.append((left[2] - 2.0 * q1 * right[1] - q * right[2]) / b)
        return tuple(out)
    if op in ("max", "min"):
        cond = (a >= b) if op == "max" else (a <= b)
        return tuple(B.where(cond, x, y) for x, y in zip(left, right))
    raise KeyError(op)


def operator_kind(op):
    if op == "x":
        return "leaf"
    if op in UNARY_JETS:
        return "unary"
    if op in BINARY_IDS:
        return "binary"
    raise KeyError(f"unknown operator {op!r}")
