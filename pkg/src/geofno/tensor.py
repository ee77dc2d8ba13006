"""Dense float64/complex128 tensors with taped reverse-mode differentiation.

The engine is deliberately small: numpy arrays carry the values, a Tape
records executed operations, and backward() replays the records in reverse.
Complex gradients follow the "real and imaginary parts are independent
reals" convention, so the gradient of a complex-linear map is its
conjugate transpose and spectral weights can be optimized like any other
parameter.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .errors import DimensionError, DTypeError, EvaluationError

REAL = np.float64
COMPLEX = np.complex128


def _coerce(data):
    arr = np.asarray(data)
    if arr.dtype == REAL or arr.dtype == COMPLEX:
        return arr
    if np.issubdtype(arr.dtype, np.complexfloating):
        return arr.astype(COMPLEX)
    if np.issubdtype(arr.dtype, np.floating) or np.issubdtype(arr.dtype, np.integer) \
            or arr.dtype == np.bool_:
        return arr.astype(REAL)
    raise DTypeError(f"unsupported dtype {arr.dtype}")


class Tensor:
    """Immutable dense array with an optional gradient accumulator."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False):
        self.data = _coerce(data)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    # -- introspection ----------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_complex(self):
        return self.data.dtype == COMPLEX

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}{flag})"

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, idx):
        return take(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    @property
    def real(self):
        return real(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


# -- tape ------------------------------------------------------------------

_TAPES: list["Tape"] = []


class Tape:
    """Ordered record of executed ops; reverse replay produces gradients."""

    def __init__(self):
        self._records = []
        self._used = False

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        if _TAPES and _TAPES[-1] is self:
            _TAPES.pop()
        return False

    def __len__(self):
        return len(self._records)

    def record(self, out, inputs, backward):
        self._records.append((out, inputs, backward))

    def backward(self, loss):
        """Accumulate gradients of a real scalar loss into every grad-enabled leaf."""
        if self._used:
            raise RuntimeError("tape already consumed; record a fresh forward pass")
        if loss.size != 1:
            raise DimensionError(f"loss must be scalar, got shape {loss.shape}")
        if loss.is_complex:
            raise DTypeError("loss must be real")
        self._used = True
        loss.grad = np.ones_like(loss.data)
        for out, inputs, backward in reversed(self._records):
            gout = out.grad
            if gout is None:
                continue
            grads = backward(gout)
            for inp, g in zip(inputs, grads):
                if g is None or not isinstance(inp, Tensor) or not inp.requires_grad:
                    continue
                if not inp.is_complex and np.iscomplexobj(g):
                    g = g.real
                if inp.grad is None:
                    inp.grad = g
                else:
                    inp.grad = inp.grad + g
        self.clear()

    def clear(self):
        """Release all recorded intermediates."""
        self._records.clear()


def active_tape():
    return _TAPES[-1] if _TAPES else None


def apply_op(out_data, inputs, backward):
    """Wrap an op result and record it on the active tape.

    `backward(gout) -> tuple of per-input gradients (None allowed)`; used
    both by the built-in ops below and the fused spectral ops.
    """
    tape = active_tape()
    needs = tape is not None and any(
        isinstance(i, Tensor) and i.requires_grad for i in inputs)
    out = Tensor(out_data, requires_grad=needs)
    if needs:
        tape.record(out, inputs, backward)
    return out


def zero_grads(params):
    for p in params:
        p.grad = None


# -- broadcasting helpers ----------------------------------------------------

def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary_dtype(a, b):
    return COMPLEX if (a.is_complex or b.is_complex) else REAL


# -- elementwise ops ---------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError as e:
        raise DimensionError(str(e)) from None
    return apply_op(out, (a, b), lambda g: (_unbroadcast(g, a.shape),
                                            _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data - b.data
    except ValueError as e:
        raise DimensionError(str(e)) from None
    return apply_op(out, (a, b), lambda g: (_unbroadcast(g, a.shape),
                                            _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError as e:
        raise DimensionError(str(e)) from None
    ad, bd = a.data, b.data

    def backward(g):
        return (_unbroadcast(g * np.conj(bd), a.shape),
                _unbroadcast(g * np.conj(ad), b.shape))

    return apply_op(out, (a, b), backward)


def neg(a):
    a = as_tensor(a)
    return apply_op(-a.data, (a,), lambda g: (-g,))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data / b.data
    except ValueError as e:
        raise DimensionError(str(e)) from None
    ad, bd = a.data, b.data

    def backward(g):
        ga = g / np.conj(bd)
        gb = -g * np.conj(ad) / np.conj(bd * bd)
        return (_unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape))

    return apply_op(out, (a, b), backward)


def sin(a):
    a = as_tensor(a)
    if a.is_complex:
        raise DTypeError("sin expects a real tensor")
    ad = a.data
    return apply_op(np.sin(ad), (a,), lambda g: (g * np.cos(ad),))


def gelu(a):
    """Exact GeLU x*Phi(x) with Phi the standard normal CDF (erf form)."""
    a = as_tensor(a)
    if a.is_complex:
        raise DTypeError("gelu expects a real tensor")
    y, big_phi, small_phi = _kernels.gelu_fwd(a.data)
    ad = a.data
    return apply_op(y, (a,), lambda g: (_kernels.gelu_bwd(g, ad, big_phi, small_phi),))


def sqrt(a):
    a = as_tensor(a)
    if a.is_complex:
        raise DTypeError("sqrt expects a real tensor")
    out = np.sqrt(a.data)
    return apply_op(out, (a,), lambda g: (g * (0.5 / out),))


def elementwise(op, a, b=None):
    """Dispatch by name: one of add, sub, mul, gelu, sin."""
    table = {"add": add, "sub": sub, "mul": mul}
    if op in table:
        if b is None:
            raise DimensionError(f"{op} is binary")
        return table[op](a, b)
    if op == "gelu":
        return gelu(a)
    if op == "sin":
        return sin(a)
    raise ValueError(f"unknown elementwise op {op!r}")


# -- structural ops ----------------------------------------------------------

def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError as e:
        raise DimensionError(str(e)) from None
    return apply_op(out, (a,), lambda g: (g.reshape(old),))


def moveaxis(a, src, dst):
    a = as_tensor(a)
    out = np.moveaxis(a.data, src, dst)
    return apply_op(out, (a,), lambda g: (np.moveaxis(g, dst, src),))


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return apply_op(out, tuple(tensors), backward)


def take(a, idx):
    a = as_tensor(a)
    out = a.data[idx]
    shape, dtype = a.shape, a.data.dtype

    def backward(g):
        ga = np.zeros(shape, dtype=COMPLEX if np.iscomplexobj(g) else dtype)
        np.add.at(ga, idx, g)
        return (ga,)

    return apply_op(out, (a,), backward)


def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)
    shape = a.shape
    ax = axis

    def backward(g):
        if ax is None:
            return (np.broadcast_to(g, shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, ax)
        return (np.broadcast_to(gg, shape).copy(),)

    return apply_op(out, (a,), backward)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


def real(a):
    a = as_tensor(a)
    if not a.is_complex:
        return a
    return apply_op(a.data.real.copy(), (a,), lambda g: (g.astype(COMPLEX),))


def imag(a):
    a = as_tensor(a)
    if not a.is_complex:
        return mul(a, 0.0)
    return apply_op(a.data.imag.copy(), (a,), lambda g: (1j * g,))


def conj(a):
    a = as_tensor(a)
    if not a.is_complex:
        return a
    return apply_op(np.conj(a.data), (a,), lambda g: (np.conj(g),))


# -- linear algebra ----------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError("matmul requires tensors with ndim >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"inner dimensions disagree: {a.shape} @ {b.shape}")
    if a.is_complex != b.is_complex:
        raise DTypeError("matmul operands must share dtype (real*real or complex*complex)")
    out = np.matmul(a.data, b.data)
    ad, bd = a.data, b.data

    def backward(g):
        ga = np.matmul(g, np.conj(np.swapaxes(bd, -1, -2)))
        gb = np.matmul(np.conj(np.swapaxes(ad, -1, -2)), g)
        ga = _unbroadcast_batch(ga, ad.shape)
        gb = _unbroadcast_batch(gb, bd.shape)
        return (ga, gb)

    return apply_op(out, (a, b), backward)


def _unbroadcast_batch(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i in range(len(shape) - 2) if shape[i] == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- FFT ---------------------------------------------------------------------

def fft_nd(v, dims, inverse=False):
    """N-d FFT over the listed axes; 1/N on forward, no scaling on inverse.

    forward:  vhat(k) = (1/N) sum_x v(x) exp(-2*pi*i <x,k>)
    inverse:  v(x)    =       sum_k vhat(k) exp(+2*pi*i <x,k>)
    """
    v = as_tensor(v)
    dims = tuple(int(d) for d in dims)
    for d in dims:
        if not (-v.ndim <= d < v.ndim):
            raise DimensionError(f"axis {d} out of range for ndim {v.ndim}")
    data = v.data if v.is_complex else v.data.astype(COMPLEX)
    if inverse:
        out = np.fft.ifftn(data, axes=dims, norm="forward")

        def backward(g):
            return (np.fft.fftn(g, axes=dims, norm="backward"),)
    else:
        out = np.fft.fftn(data, axes=dims, norm="forward")

        def backward(g):
            return (np.fft.ifftn(g, axes=dims, norm="backward"),)

    return apply_op(out, (v,), backward)


# -- optimizer ---------------------------------------------------------------

class AdamState:
    """First/second moment buffers (float64 views) plus the step counter."""

    def __init__(self, params):
        self.step = 0
        self.m = [np.zeros(p.data.size * (2 if p.is_complex else 1)) for p in params]
        self.v = [np.zeros_like(mi) for mi in self.m]

    def copy(self):
        new = AdamState.__new__(AdamState)
        new.step = self.step
        new.m = [m.copy() for m in self.m]
        new.v = [v.copy() for v in self.v]
        return new


def _flat_real_view(arr):
    a = np.ascontiguousarray(arr)
    if a.dtype == COMPLEX:
        return a.view(REAL).ravel(), True
    return a.ravel(), False


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update. Pure: returns (new params, new state).

    Complex parameters are updated on their independent real/imaginary
    components (the moment buffers live on the float64 view).
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionError("params/grads/state lengths disagree")
    t = state.step + 1
    new_state = AdamState.__new__(AdamState)
    new_state.step = t
    new_state.m, new_state.v = [], []
    new_params = []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p.data)
        g = np.asarray(g)
        if g.shape != p.shape:
            raise DimensionError(f"gradient shape {g.shape} != param shape {p.shape}")
        if np.iscomplexobj(g) and not p.is_complex:
            g = g.real
        gf, _ = _flat_real_view(g.astype(p.data.dtype, copy=False))
        pf, was_complex = _flat_real_view(p.data)
        pn, mn, vn = _kernels.adam_update(pf, gf, m, v, t, lr, beta1, beta2, eps)
        if was_complex:
            pn = pn.view(COMPLEX)
        out = Tensor(pn.reshape(p.shape), requires_grad=p.requires_grad)
        new_params.append(out)
        new_state.m.append(mn)
        new_state.v.append(vn)
    return new_params, new_state


# -- gradient checking ---------------------------------------------------------

def grad_check(f, params, eps=1e-5):
    """Max over parameters of the taped-vs-central-difference mismatch.

    `f(*params)` must return a real scalar Tensor deterministically.  Every
    real component of every parameter is perturbed by +/- eps; each
    parameter tensor scores |analytic - numeric| / (|analytic| + |numeric|
    + 1e-12) under the max norm (for a scalar parameter this is exactly the
    componentwise ratio), and the worst parameter's score is returned.
    """
    if not (1e-7 <= eps <= 1e-4):
        raise ValueError("eps must lie in [1e-7, 1e-4]")
    with Tape() as tape:
        out = f(*params)
    if not np.isfinite(out.data).all():
        raise EvaluationError("function value is not finite")
    tape.backward(out)
    analytic = []
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        gf, _ = _flat_real_view(np.asarray(g, dtype=p.data.dtype))
        analytic.append(gf.copy())
        p.grad = None

    worst = 0.0
    for pi, p in enumerate(params):
        base = p.data.copy()
        flat, _ = _flat_real_view(base)
        numeric = np.empty(flat.size)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            fp = _eval_scalar(f, params, pi, base)
            flat[j] = orig - eps
            fm = _eval_scalar(f, params, pi, base)
            flat[j] = orig
            numeric[j] = (fp - fm) / (2.0 * eps)
        a_norm = np.abs(analytic[pi]).max(initial=0.0)
        n_norm = np.abs(numeric).max(initial=0.0)
        rel = np.abs(analytic[pi] - numeric).max(initial=0.0) \
            / (a_norm + n_norm + 1e-12)
        if rel > worst:
            worst = rel
    return worst


def _eval_scalar(f, params, pi, perturbed):
    trial = list(params)
    trial[pi] = Tensor(perturbed.copy(), requires_grad=False)
    val = f(*trial).data
    if not np.isfinite(val).all():
        raise EvaluationError("function value is not finite")
    return float(val.reshape(()))
