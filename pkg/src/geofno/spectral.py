"""Geometric Fourier transforms on point sets and the uniform-grid fast path.

The forward transform sums (1/N) * m(x) * v(x) * exp(-2*pi*i <xi, k>) over the
point set; the inverse evaluates sum_k vhat(k) * exp(+2*pi*i <xi, k>) at query
points.  Both are computed by direct dense evaluation (exact at this scale).
Mode sets are full symmetric cubes {-k_max..k_max}^d in a fixed lexicographic
order, so forward/inverse match the printed formulas; real-valued fields are
additionally served by Hermitian half-spectrum kernels that cut every matrix
product in half without changing any result.
"""

from __future__ import annotations

import numpy as np
import scipy.fft as sfft

from . import _kernels
from . import tensor as T
from .errors import DimensionError, SamplingError, WeightError
from .tensor import Tensor, apply_op, as_tensor

TWO_PI = 2.0 * np.pi


class ModeSet:
    """Integer frequency cube {-k_max..k_max}^d in lexicographic order."""

    def __init__(self, dim, k_max):
        if dim not in (1, 2, 3):
            raise DimensionError(f"dim must be 1, 2 or 3, got {dim}")
        if np.isscalar(k_max):
            k_max = (int(k_max),) * dim
        k_max = tuple(int(k) for k in k_max)
        if len(k_max) != dim or any(k < 0 for k in k_max):
            raise DimensionError(f"bad k_max {k_max} for dim {dim}")
        self.dim = dim
        self.k_max = k_max
        axes = [np.arange(-k, k + 1, dtype=np.int64) for k in k_max]
        grids = np.meshgrid(*axes, indexing="ij")
        self.freqs = np.stack([g.ravel() for g in grids], axis=-1)
        self.freqs.setflags(write=False)
        self._grid_cache = {}
        self._build_half()

    @property
    def size(self):
        return self.freqs.shape[0]

    def __len__(self):
        return self.size

    def _build_half(self):
        # canonical half set: k == 0 or last nonzero component positive;
        # closed-under-negation cube guarantees index(-k) = K-1-index(k)
        f = self.freqs
        keep = np.zeros(len(f), dtype=bool)
        for i, k in enumerate(f):
            nz = np.nonzero(k)[0]
            keep[i] = (len(nz) == 0) or (k[nz[-1]] > 0)
        self.half_index = np.nonzero(keep)[0]
        self.half_conj_index = len(f) - 1 - self.half_index
        self.half_freqs = np.ascontiguousarray(f[self.half_index])
        hf = self.half_freqs
        self.half_dc = int(np.nonzero((hf == 0).all(axis=1))[0][0])
        self.half_plane = (hf[:, -1] == 0) & (np.abs(hf).sum(axis=1) > 0)
        w = np.full(len(hf), 2.0)
        w[self.half_dc] = 1.0
        w[self.half_plane] = 1.0  # mirror written explicitly for these
        self.half_weights = w
        # for the (pointwise) pair sum out = sum_half w*Re(y e), plane modes
        # need weight 2 like any conjugate pair
        w2 = np.full(len(hf), 2.0)
        w2[self.half_dc] = 1.0
        self.pair_weights = w2

    def grid_indices(self, shape):
        """Flat rfft-grid positions of the half modes (cached per grid shape)."""
        shape = tuple(int(s) for s in shape)
        if len(shape) != self.dim:
            raise DimensionError(f"grid rank {len(shape)} != mode dim {self.dim}")
        for s, k in zip(shape, self.k_max):
            if s <= 2 * k:
                raise SamplingError(
                    f"grid size {s} cannot hold modes up to {k} (need s > 2*k_max)")
        if shape in self._grid_cache:
            return self._grid_cache[shape]
        half_shape = shape[:-1] + (shape[-1] // 2 + 1,)
        hf = self.half_freqs
        loc = [np.mod(hf[:, ax], shape[ax]) for ax in range(self.dim - 1)]
        loc.append(hf[:, -1])
        flat = np.ravel_multi_index(loc, half_shape)
        mir = [np.mod(-hf[:, ax], shape[ax]) for ax in range(self.dim - 1)]
        mir.append(hf[:, -1])
        flat_mirror = np.ravel_multi_index(mir, half_shape)[self.half_plane]
        out = (half_shape, flat.astype(np.int64), flat_mirror.astype(np.int64))
        self._grid_cache[shape] = out
        return out


class MonitorWeight:
    """Strictly positive per-point weights m(x); defaults to all ones."""

    def __init__(self, values):
        values = as_tensor(values)
        data = values.data
        if data.ndim != 1:
            raise DimensionError("monitor weights must be a 1-d tensor")
        if np.iscomplexobj(data) or not np.isfinite(data).all() or (data <= 0).any():
            raise WeightError("monitor weights must be finite and strictly positive")
        self.values = values

    @classmethod
    def ones(cls, n):
        return cls(Tensor(np.ones(n)))


def _check_xi(xi, modes):
    xi = as_tensor(xi)
    if xi.ndim != 2 or xi.shape[1] != modes.dim:
        raise DimensionError(f"coordinates must be (N, {modes.dim}), got {xi.shape}")
    return xi


# ----------------------------------------------------------- public transforms

def nudft_forward(v, xi, modes, m=None):
    """coeffs(k) = (1/N) sum_i m(x_i) v(x_i) exp(-2*pi*i <xi_i, k>).

    Differentiable w.r.t. v, xi and m; returns a complex (|K|, c) tensor.
    """
    v = as_tensor(v)
    xi = _check_xi(xi, modes)
    n = xi.shape[0]
    if n < 1 or v.shape[0] != n or v.ndim != 2:
        raise DimensionError(f"values {v.shape} do not match {n} points")
    if m is None:
        m = MonitorWeight.ones(n)
    mt = m.values
    if mt.shape[0] != n:
        raise DimensionError("monitor weight length mismatch")

    cos_m, sin_m = _kernels.phase_build(xi.data[None], modes.freqs)
    cos_m, sin_m = cos_m[0], sin_m[0]
    e_fwd = cos_m - 1j * sin_m                      # (N, K)
    vm = (mt.data / n)[:, None] * v.data
    out = e_fwd.T @ vm.astype(np.complex128)

    vd, md = v.data, mt.data

    def backward(g):
        d = np.conj(e_fwd) @ g                       # (N, c)
        dv = d * (md / n)[:, None]
        w2 = vm.astype(np.complex128) @ np.conj(g).T  # (N, K)
        dtheta = _kernels.dtheta_combine(cos_m, sin_m,
                                         np.ascontiguousarray(w2.real),
                                         np.ascontiguousarray(w2.imag), -1.0, 1.0)
        dxi = TWO_PI * (dtheta @ modes.freqs.astype(np.float64))
        dm = (np.conj(d) * vd).sum(axis=1).real / n
        return (dv, dxi, dm)

    return apply_op(out, (v, xi, mt), backward)


def nudft_inverse(coeffs, xi_query, modes):
    """out(x) = sum_k coeffs(k) exp(+2*pi*i <xi(x), k>) at the query points."""
    coeffs = as_tensor(coeffs)
    xi = _check_xi(xi_query, modes)
    if coeffs.ndim != 2 or coeffs.shape[0] != modes.size:
        raise DimensionError(
            f"coefficients {coeffs.shape} do not match mode count {modes.size}")
    cos_m, sin_m = _kernels.phase_build(xi.data[None], modes.freqs)
    cos_m, sin_m = cos_m[0], sin_m[0]
    e_inv = cos_m + 1j * sin_m                      # (M, K)
    cd = coeffs.data.astype(np.complex128)
    out = e_inv @ cd

    def backward(g):
        dc = np.conj(e_inv).T @ g
        w2 = np.conj(g) @ cd.T                       # (M, K)
        dtheta = _kernels.dtheta_combine(cos_m, sin_m,
                                         np.ascontiguousarray(w2.real),
                                         np.ascontiguousarray(w2.imag), -1.0, -1.0)
        dxi = TWO_PI * (dtheta @ modes.freqs.astype(np.float64))
        return (dc, dxi)

    return apply_op(out, (coeffs, xi), backward)


def uniform_grid(shape):
    """Uniform lattice (i_1/s_1, ..., i_d/s_d) flattened to (prod(s), d)."""
    axes = [np.arange(s) / s for s in shape]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def roundtrip_identity_check(modes, grid_shape, seed=0, channels=1):
    """Max |F_a(F_a^-1(vhat)) - vhat| on a Nyquist-valid uniform grid."""
    if np.isscalar(grid_shape):
        grid_shape = (int(grid_shape),) * modes.dim
    grid_shape = tuple(int(s) for s in grid_shape)
    for s, k in zip(grid_shape, modes.k_max):
        if s <= 2 * k:
            raise SamplingError(f"grid {grid_shape} violates Nyquist for k_max {modes.k_max}")
    rng = np.random.default_rng(seed)
    vhat = rng.standard_normal((modes.size, channels)) \
        + 1j * rng.standard_normal((modes.size, channels))
    xi = uniform_grid(grid_shape)
    field = nudft_inverse(Tensor(vhat), Tensor(xi), modes)
    back = nudft_forward(field, Tensor(xi), modes)
    return float(np.abs(back.data - vhat).max())


# ------------------------------------------------- half-spectrum fused kernels

def build_phase(xi_data, modes):
    """cos/sin tables of 2*pi*<xi, k> over the half modes; shared by the
    batched forward and inverse transforms (and their backward passes)."""
    return _kernels.phase_build(np.ascontiguousarray(xi_data), modes.half_freqs)


def half_nudft_forward(v, xi, modes, m=None, phase=None):
    """Batched forward NUDFT of real fields onto the half mode set.

    v (B,N,C) real, xi (B,N,d) -> (B,Kh,C) complex.  Equals nudft_forward
    restricted to the half modes; the missing modes are conjugate mirrors.
    """
    v = as_tensor(v)
    xi = as_tensor(xi)
    if v.is_complex:
        raise DimensionError("half-spectrum forward expects real fields")
    bsz, n, _ = v.shape
    if phase is None:
        phase = build_phase(xi.data, modes)
    cos_m, sin_m = phase
    md = None if m is None else as_tensor(m).data
    scale = 1.0 / n
    vm = v.data * scale if md is None else v.data * (md * scale)[..., None]
    ct = cos_m.transpose(0, 2, 1)
    st = sin_m.transpose(0, 2, 1)
    out = np.empty((bsz, len(modes.half_freqs), v.shape[2]), dtype=np.complex128)
    out.real = np.matmul(ct, vm)
    out.imag = np.matmul(st, vm)
    np.negative(out.imag, out=out.imag)

    vd = v.data
    m_in = m if isinstance(m, Tensor) else None

    def backward(g):
        g_re = np.ascontiguousarray(g.real)
        g_im = np.ascontiguousarray(g.imag)
        draw = np.matmul(cos_m, g_re) - np.matmul(sin_m, g_im)   # (B,N,C)
        dv = draw * scale if md is None else draw * (md * scale)[..., None]
        a = np.matmul(vm, g_re.transpose(0, 2, 1))
        b = np.matmul(vm, g_im.transpose(0, 2, 1))
        dtheta = _kernels.dtheta_combine(cos_m, sin_m, a, b, -1.0, -1.0)
        dxi = TWO_PI * np.matmul(dtheta, modes.half_freqs.astype(np.float64))
        dm = None
        if m_in is not None and m_in.requires_grad:
            dm = (vd * draw).sum(axis=-1) * scale
        return (dv, dxi, dm)

    return apply_op(out, (v, xi, m_in), backward)


def half_nudft_inverse(y, xi_query, modes, phase=None):
    """Batched pair-summed inverse: out = sum_half w_k Re(y_k e^{+i theta}).

    y follows the pair-halved convention y(k) = (yhat(k) + conj(yhat(-k)))/2,
    so the result equals Re(nudft_inverse(yhat)) of the full spectrum; for a
    Hermitian yhat this is simply its stored half.
    """
    y = as_tensor(y)
    xi = as_tensor(xi_query)
    if phase is None:
        phase = build_phase(xi.data, modes)
    cos_m, sin_m = phase
    w = modes.pair_weights
    a = y.data.real * w[:, None]
    b = y.data.imag * w[:, None]
    out = np.matmul(cos_m, a) - np.matmul(sin_m, b)

    def backward(g):
        gc = np.ascontiguousarray(g)
        dy = np.empty_like(y.data)
        dy.real = np.matmul(cos_m.transpose(0, 2, 1), gc) * w[:, None]
        dy.imag = np.matmul(sin_m.transpose(0, 2, 1), gc) * (-w[:, None])
        aa = np.matmul(gc, a.transpose(0, 2, 1))
        bb = np.matmul(gc, b.transpose(0, 2, 1))
        dtheta = _kernels.dtheta_combine(cos_m, sin_m, aa, bb, -1.0, -1.0)
        dxi = TWO_PI * np.matmul(dtheta, modes.half_freqs.astype(np.float64))
        return (dy, dxi)

    return apply_op(out, (y, xi), backward)


def half_mode_mix(x, r, modes):
    """Per-mode channel mixing on the half spectrum.

    r holds the full cube of complex weights (K, Ci, Co); the effective
    half-spectrum matrix (R(k) + conj(R(-k)))/2 reproduces exactly the real
    output of full-cube mixing followed by real-part extraction.
    """
    x = as_tensor(x)
    r = as_tensor(r)
    if r.shape[0] != modes.size:
        raise DimensionError(f"weights hold {r.shape[0]} modes, mode set has {modes.size}")
    hidx, cidx = modes.half_index, modes.half_conj_index
    reff = 0.5 * (r.data[hidx] + np.conj(r.data[cidx]))
    xt = x.data.transpose(1, 0, 2)                  # (Kh,B,Ci)
    y = np.matmul(xt, reff).transpose(1, 0, 2)      # (B,Kh,Co)

    def backward(g):
        gt = np.ascontiguousarray(g.transpose(1, 0, 2))
        dx = np.matmul(gt, np.conj(reff).transpose(0, 2, 1)).transpose(1, 0, 2)
        dreff = np.matmul(np.conj(xt).transpose(0, 2, 1), gt)
        dr = np.zeros_like(r.data)
        dr[hidx] = 0.5 * dreff
        dr[cidx] += 0.5 * np.conj(dreff)
        return (dx, dr)

    return apply_op(y, (x, r), backward)


def half_to_grid(y, modes, shape):
    """Hermitian-extend half-mode coefficients and inverse-FFT to a real grid.

    y (B,Kh,C) -> (B,C,*shape); computes sum_half w_k Re(y_k e^{+i theta})
    exactly (no-normalization inverse convention).
    """
    y = as_tensor(y)
    half_shape, flat, flat_mirror = modes.grid_indices(shape)
    bsz, _, ch = y.shape
    p_half = int(np.prod(half_shape))
    yt = y.data.transpose(0, 2, 1)                  # (B,C,Kh)
    buf = np.zeros((bsz, ch, p_half), dtype=np.complex128)
    buf[:, :, flat] = yt
    buf[:, :, flat_mirror] = np.conj(yt[:, :, modes.half_plane])
    dc = modes.half_dc
    buf[:, :, flat[dc]] = yt[:, :, dc].real
    buf = buf.reshape(bsz, ch, *half_shape)
    axes = tuple(range(2, 2 + modes.dim))
    u = sfft.irfftn(buf, s=shape, axes=axes, norm="forward")

    def backward(g):
        spec = sfft.rfftn(np.ascontiguousarray(g), axes=axes, norm="backward")
        spec = spec.reshape(bsz, ch, p_half)
        dy = spec[:, :, flat]
        dy *= modes.pair_weights[None, None, :]
        dy[:, :, dc] = dy[:, :, dc].real
        return (dy.transpose(0, 2, 1),)

    return apply_op(u, (y,), backward)


def grid_to_half(u, modes):
    """Forward FFT of a real grid field gathered on the half modes.

    u (B,C,*shape) -> (B,Kh,C) with the 1/N forward normalization, matching
    nudft_forward on the canonical uniform lattice.
    """
    u = as_tensor(u)
    shape = u.shape[2:]
    half_shape, flat, flat_mirror = modes.grid_indices(shape)
    bsz, ch = u.shape[:2]
    axes = tuple(range(2, 2 + modes.dim))
    spec = sfft.rfftn(u.data, axes=axes, norm="forward")
    spec = spec.reshape(bsz, ch, -1)
    x = spec[:, :, flat].transpose(0, 2, 1)
    p_half = int(np.prod(half_shape))
    dc = modes.half_dc
    plane = modes.half_plane

    def backward(g):
        gt = g.transpose(0, 2, 1)
        buf = np.zeros((bsz, ch, p_half), dtype=np.complex128)
        buf[:, :, flat] = 0.5 * gt
        buf[:, :, flat_mirror] = 0.5 * np.conj(gt[:, :, plane])
        buf[:, :, flat[dc]] = gt[:, :, dc].real
        buf = buf.reshape(bsz, ch, *half_shape)
        du = sfft.irfftn(buf, s=shape, axes=axes, norm="backward")
        return (du,)

    return apply_op(x, (u,), backward)


# ------------------------------------------------------------ uniform conv op

def spectral_conv_uniform(v, r, modes):
    """FFT -> per-mode channel mixing on the kept modes -> inverse FFT -> real.

    v: (s_1, ..., s_d, c_in) tensor on a uniform grid; r: (|K|, c_in, c_out)
    complex weights.  Real input runs on the Hermitian half-spectrum fast
    path; the result is identical to the dense full-cube evaluation.
    """
    v = as_tensor(v)
    r = as_tensor(r)
    if v.ndim != modes.dim + 1:
        raise DimensionError(
            f"field rank {v.ndim} does not match modes dim {modes.dim} (+channels)")
    shape = v.shape[:-1]
    modes.grid_indices(shape)  # Nyquist check
    if v.is_complex:
        return _spectral_conv_dense(v, r, modes)
    vb = T.moveaxis(T.reshape(v, (1,) + v.shape), -1, 1)
    x = grid_to_half(vb, modes)
    y = half_mode_mix(x, r, modes)
    u = half_to_grid(y, modes, shape)
    return T.reshape(T.moveaxis(u, 1, -1), shape + (r.shape[2],))


def _spectral_conv_dense(v, r, modes):
    # direct path: full K-cube gather/scatter on a complex FFT grid
    shape = v.shape[:-1]
    dims = tuple(range(len(shape)))
    vhat = T.fft_nd(T.moveaxis(v, -1, 0), dims=[d + 1 for d in dims])
    locs = tuple(np.mod(modes.freqs[:, ax], shape[ax]) for ax in range(modes.dim))
    flat = np.ravel_multi_index(locs, shape)
    vh = T.reshape(vhat, (v.shape[-1], int(np.prod(shape))))
    gathered = T.moveaxis(vh[:, flat], 0, 1)        # (K, Ci) -> per-mode rows
    mixed = T.matmul(T.reshape(gathered, (modes.size, 1, v.shape[-1])), r)

    scatter = np.zeros((int(np.prod(shape)), modes.size))
    scatter[flat, np.arange(modes.size)] = 1.0
    full = T.matmul(Tensor(scatter.astype(np.complex128)),
                    T.reshape(mixed, (modes.size, r.shape[2])))
    full = T.reshape(T.moveaxis(full, -1, 0), (r.shape[2],) + shape)
    out = T.fft_nd(full, dims=[d + 1 for d in dims], inverse=True)
    return T.moveaxis(T.real(out), 0, -1)
