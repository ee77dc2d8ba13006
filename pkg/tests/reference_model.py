"""Straight-line numpy re-implementation of the operator forward passes.

Written independently of the library's engine: plain dense arrays, the full
symmetric mode cube (no Hermitian shortcuts), explicit loops where that is
clearest.  Used as the second-implementation oracle in the model tests.
"""

import numpy as np
from scipy.special import erf


def ref_gelu(x):
    return x * 0.5 * (1.0 + erf(x / np.sqrt(2.0)))


def ref_linear(x, w, b=None):
    y = x @ w
    return y if b is None else y + b


def ref_pointwise(x, p, prefix):
    h = ref_gelu(ref_linear(x, p[f"{prefix}.0.w"], p[f"{prefix}.0.b"]))
    return ref_linear(h, p[f"{prefix}.1.w"], p[f"{prefix}.1.b"])


def ref_sin_features(x, m):
    parts = [x]
    for j in range(x.shape[-1]):
        for i in range(m):
            parts.append(np.sin(2.0 ** i * 2.0 * np.pi * x[..., j:j + 1]))
    return np.concatenate(parts, axis=-1)


def ref_deform(x, a, p, freq_count):
    feats = ref_sin_features(x, freq_count)
    if a is not None:
        feats = np.concatenate([feats, np.broadcast_to(a, feats.shape[:-1] + (len(a),))],
                               axis=-1)
    h = ref_gelu(ref_linear(feats, p["deform.w0"], p["deform.b0"]))
    h = ref_gelu(ref_linear(h, p["deform.w1"], p["deform.b1"]))
    res = ref_linear(h, p["deform.w2"], p["deform.b2"])
    return np.mod(x + res, 1.0)


def ref_nudft_forward(v, xi, freqs):
    n = len(xi)
    phase = np.exp(-2j * np.pi * (xi @ freqs.T))      # (N, K)
    return phase.T @ v.astype(complex) / n


def ref_nudft_inverse(coeffs, xi, freqs):
    phase = np.exp(2j * np.pi * (xi @ freqs.T))       # (M, K)
    return phase @ coeffs


def ref_grid_fft(u, shape):
    """Forward FFT coefficients (1/N normalization) of a real grid field,
    gathered on every mode of the full cube."""
    c = u.shape[-1]
    flat = np.fft.fftn(u.reshape(shape + (c,)).astype(complex),
                       axes=tuple(range(len(shape))), norm="forward")
    return flat


def ref_gather(fhat, freqs, shape):
    out = np.empty((len(freqs), fhat.shape[-1]), dtype=complex)
    for i, k in enumerate(freqs):
        out[i] = fhat[tuple(np.mod(k, shape))]
    return out


def ref_scatter_ifft(coeffs, freqs, shape):
    c = coeffs.shape[-1]
    grid = np.zeros(shape + (c,), dtype=complex)
    for i, k in enumerate(freqs):
        grid[tuple(np.mod(k, shape))] += coeffs[i]
    out = np.fft.ifftn(grid, axes=tuple(range(len(shape))), norm="forward")
    return out.real


def ref_mix(coeffs, r):
    out = np.zeros((coeffs.shape[0], r.shape[2]), dtype=complex)
    for k in range(coeffs.shape[0]):
        out[k] = coeffs[k] @ r[k]
    return out


def ref_latent_layers(u, p, freqs, shape, layers, coords):
    for l in range(2, layers):
        fhat = ref_gather(ref_grid_fft(u, shape), freqs, shape)
        conv = ref_scatter_ifft(ref_mix(fhat, p[f"R{l}"]), freqs, shape)
        bypass = u @ p[f"W{l}.w"]
        bias = ref_linear(coords, p[f"bias{l}.w"], p[f"bias{l}.b"])
        u = ref_gelu(conv + bypass + bias.reshape(u.shape))
    return u


def ref_uniform_coords(shape):
    axes = [np.arange(s) / s for s in shape]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def ref_forward_structured(params, config, mesh_points, fields):
    shape = tuple(fields.shape[:-1])
    freqs = _cube(config)
    coords = ref_uniform_coords(shape)
    x = np.concatenate([fields, mesh_points], axis=-1)
    u = ref_pointwise(x, params, "P").reshape(shape + (config.width,))
    fhat = ref_gather(ref_grid_fft(u, shape), freqs, shape)
    u = ref_gelu(ref_scatter_ifft(ref_mix(fhat, params["R1"]), freqs, shape))
    u = ref_latent_layers(u, params, freqs, shape, config.layers, coords)
    fhat = ref_gather(ref_grid_fft(u, shape), freqs, shape)
    u = ref_scatter_ifft(ref_mix(fhat, params[f"R{config.layers}"]), freqs, shape)
    return ref_pointwise(u, params, "Q")


def ref_forward_cloud(params, config, points, fields, design=None, query=None):
    shape = config.latent_shape
    freqs = _cube(config)
    coords = ref_uniform_coords(shape)
    if config.deform:
        xi = ref_deform(points, design, params, config.deform_freqs)
        xi_q = xi if query is None else ref_deform(query, design, params, config.deform_freqs)
    else:
        xi = np.mod(points, 1.0)
        xi_q = xi if query is None else np.mod(query, 1.0)
    x = np.concatenate([fields, points], axis=-1)
    v = ref_pointwise(x, params, "P")
    ch = ref_nudft_forward(v, xi, freqs)
    u = ref_gelu(ref_scatter_ifft(ref_mix(ch, params["R1"]), freqs, shape))
    u = ref_latent_layers(u, params, freqs, shape, config.layers, coords)
    fhat = ref_gather(ref_grid_fft(u, shape), freqs, shape)
    mixed = ref_mix(fhat, params[f"R{config.layers}"])
    out = ref_nudft_inverse(mixed, xi_q, freqs).real
    return ref_pointwise(out, params, "Q")


def ref_forward_spatiotemporal(params, config, mesh_points, fields, t_steps):
    s1, s2 = mesh_points.shape[:2]
    shape = (s1, s2, t_steps)
    freqs = _cube(config)
    coords = ref_uniform_coords(shape)
    f = np.broadcast_to(fields[:, :, None, :], (s1, s2, t_steps, fields.shape[-1]))
    c = np.broadcast_to(mesh_points[:, :, None, :], (s1, s2, t_steps, 2))
    tline = np.broadcast_to(np.arange(t_steps)[None, None, :, None] / t_steps,
                            (s1, s2, t_steps, 1))
    x = np.concatenate([f, c, tline], axis=-1)
    u = ref_pointwise(x, params, "P").reshape(shape + (config.width,))
    fhat = ref_gather(ref_grid_fft(u, shape), freqs, shape)
    u = ref_gelu(ref_scatter_ifft(ref_mix(fhat, params["R1"]), freqs, shape))
    u = ref_latent_layers(u, params, freqs, shape, config.layers, coords)
    fhat = ref_gather(ref_grid_fft(u, shape), freqs, shape)
    u = ref_scatter_ifft(ref_mix(fhat, params[f"R{config.layers}"]), freqs, shape)
    return ref_pointwise(u, params, "Q")


def _cube(config):
    if config.io_mode == "spatiotemporal":
        kmax = (config.k_max,) * config.dim + (config.temporal_k_max,)
    else:
        kmax = (config.k_max,) * config.dim
    axes = [np.arange(-k, k + 1, dtype=np.int64) for k in kmax]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def numpy_params(model):
    return {k: np.asarray(t.data) for k, t in model.params.items()}
