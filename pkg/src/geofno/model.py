"""The full surrogate operator: lifting, Fourier layers on a latent torus,
projection, and the three forward paths (structured mesh, point cloud,
spatio-temporal).

Layer structure for L layers: layer 1 carries the field into the latent
grid (encoder), layers 2..L-1 are uniform Fourier layers with pointwise
bypass W and a coordinate-linear bias, layer L carries it back (decoder).
Encoder and decoder layers hold only spectral weights: a pointwise bypass
is not defined across the change of point set, and keeping them bypass-free
in structured mode too is what makes the point-cloud path reduce exactly to
the structured path on grid-aligned clouds.  GeLU follows layers 1..L-1.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import geometry as G
from . import spectral as S
from . import tensor as T
from .errors import ConfigurationError, DimensionError, KindError
from .geometry import DeformNet, Geometry
from .spectral import ModeSet
from .tensor import Tensor

IO_MODES = ("point_cloud", "structured", "spatiotemporal")


@dataclass
class ModelConfig:
    dim: int = 2
    io_mode: str = "point_cloud"
    in_channels: int = 1
    out_channels: int = 1
    layers: int = 4
    width: int = 32
    k_max: int = 12
    latent_shape: tuple = (64, 64)
    temporal_k_max: int = 0
    deform: bool = True
    deform_freqs: int = 8
    deform_hidden: int = 32
    cond_dim: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.io_mode not in IO_MODES:
            raise ConfigurationError(f"unknown io_mode {self.io_mode!r}")
        self.latent_shape = tuple(int(s) for s in self.latent_shape)
        if len(self.latent_shape) != self.dim:
            raise ConfigurationError("latent_shape rank must equal dim")
        if self.layers < 0 or (self.layers == 1):
            raise ConfigurationError("layer count must be 0 or >= 2")

    def to_dict(self):
        d = asdict(self)
        d["latent_shape"] = list(self.latent_shape)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["latent_shape"] = tuple(d["latent_shape"])
        return cls(**d)


class GeoFnoModel:
    """Q o (K_L) o sigma(W+K+b) o ... o sigma(K_1) o P with optional learned
    deformation feeding the point-cloud transforms."""

    def __init__(self, config: ModelConfig):
        self.config = config
        c = config
        self.modes = ModeSet(self._spectral_dim(),
                             self._kmax_tuple())
        self.params = {}
        rng = np.random.default_rng(c.seed)
        d_a = c.in_channels + c.dim + (1 if c.io_mode == "spatiotemporal" else 0)
        w = c.width
        self._linear(rng, "P.0", d_a, w)
        self._linear(rng, "P.1", w, w)
        self._linear(rng, "Q.0", w, 2 * w)
        self._linear(rng, "Q.1", 2 * w, c.out_channels)
        scale = 1.0 / (w * w)
        for l in range(1, c.layers + 1):
            r = scale * (rng.random((self.modes.size, w, w))
                         + 1j * rng.random((self.modes.size, w, w)))
            self.params[f"R{l}"] = Tensor(r, requires_grad=True)
            if 2 <= l <= c.layers - 1:
                self._linear(rng, f"W{l}", w, w, bias=False)
                self.params[f"bias{l}.w"] = Tensor(
                    np.zeros((self._spectral_dim(), w)), requires_grad=True)
                self.params[f"bias{l}.b"] = Tensor(np.zeros(w), requires_grad=True)
        self.deform_net = None
        if c.deform and c.io_mode == "point_cloud":
            self.deform_net = DeformNet(c.dim, c.deform_freqs, c.deform_hidden,
                                        c.cond_dim, seed=c.seed + 1)
            for k, t in self.deform_net.params.items():
                self.params[f"deform.{k}"] = t

    def _spectral_dim(self):
        return self.config.dim + (1 if self.config.io_mode == "spatiotemporal" else 0)

    def _kmax_tuple(self):
        c = self.config
        if c.io_mode == "spatiotemporal":
            return (c.k_max,) * c.dim + (c.temporal_k_max,)
        return (c.k_max,) * c.dim

    def _linear(self, rng, name, fan_in, fan_out, bias=True):
        bound = np.sqrt(6.0 / fan_in)
        self.params[f"{name}.w"] = Tensor(
            rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True)
        if bias:
            self.params[f"{name}.b"] = Tensor(np.zeros(fan_out), requires_grad=True)

    # ------------------------------------------------------------- parameters
    def param_names(self):
        return sorted(self.params)

    def param_list(self):
        return [self.params[k] for k in self.param_names()]

    def load_params(self, tensors):
        for k, t in zip(self.param_names(), tensors):
            self.params[k] = t
        if self.deform_net is not None:
            for k in self.deform_net.params:
                self.deform_net.params[k] = self.params[f"deform.{k}"]

    def count_params(self):
        """Exact trainable scalar count; complex entries count as two."""
        total = 0
        for t in self.params.values():
            total += t.size * (2 if t.is_complex else 1)
        return total

    # ---------------------------------------------------------------- pieces
    def _pointwise(self, prefix, x):
        p = self.params
        h = T.add(T.matmul(x, p[f"{prefix}.0.w"]), p[f"{prefix}.0.b"])
        h = T.gelu(h)
        return T.add(T.matmul(h, p[f"{prefix}.1.w"]), p[f"{prefix}.1.b"])

    def lift(self, x):
        """Pointwise encoder P on (..., N, d_a) feature rows."""
        if x.shape[-1] != self.params["P.0.w"].shape[0]:
            raise DimensionError(
                f"lift expects {self.params['P.0.w'].shape[0]} channels, got {x.shape[-1]}")
        return self._pointwise("P", x)

    def project(self, x):
        return self._pointwise("Q", x)

    def _latent_coords(self):
        shape = self._latent_shape_full()
        return S.uniform_grid(shape)

    def _latent_shape_full(self, t_steps=None):
        c = self.config
        if c.io_mode == "spatiotemporal":
            return c.latent_shape + (int(t_steps),)
        return c.latent_shape

    def _latent_layers(self, u, shape):
        """Layers 2..L-1 on the (B, width, *shape) latent grid."""
        c = self.config
        p = self.params
        coords = S.uniform_grid(shape)
        pts = int(np.prod(shape))
        for l in range(2, c.layers):
            spec = S.grid_to_half(u, self.modes)
            mixed = S.half_mode_mix(spec, p[f"R{l}"], self.modes)
            conv = S.half_to_grid(mixed, self.modes, shape)
            flat = T.reshape(u, u.shape[:2] + (pts,))
            bypass = T.reshape(T.matmul(_wt(p[f"W{l}.w"]), flat), conv.shape)
            bias = T.add(T.matmul(Tensor(coords), p[f"bias{l}.w"]), p[f"bias{l}.b"])
            bias = T.reshape(T.moveaxis(bias, -1, 0), (1, c.width) + shape)
            u = T.gelu(T.add(T.add(conv, bypass), bias))
        return u

    # ---------------------------------------------------------- forward paths
    def forward_grid_arrays(self, coords, fields, t_steps=None):
        """Structured forward on stacked arrays.

        coords, fields: (B, *latent_shape, c) tensors; returns (B, *s, out).
        """
        c = self.config
        shape = tuple(fields.shape[1:-1])
        want = self._latent_shape_full(t_steps)
        if shape != want:
            raise ConfigurationError(
                f"mesh grid {shape} must equal the latent grid {want}")
        x = T.concat([fields, coords], axis=-1)
        v = self.lift(x)
        u = T.moveaxis(v, -1, 1)
        spec = S.grid_to_half(u, self.modes)
        u = T.gelu(S.half_to_grid(
            S.half_mode_mix(spec, self.params["R1"], self.modes), self.modes, shape))
        u = self._latent_layers(u, shape)
        spec = S.grid_to_half(u, self.modes)
        u = S.half_to_grid(
            S.half_mode_mix(spec, self.params[f"R{c.layers}"], self.modes),
            self.modes, shape)
        return self.project(T.moveaxis(u, 1, -1))

    def forward_cloud_arrays(self, points, fields, design=None, query=None):
        """Point-cloud forward on stacked arrays.

        points (B,N,d), fields (B,N,c_in), design (B,p) or None, query
        (B,M,d) or None (defaults to the input points, sharing the phase
        tables between encoder and decoder).
        """
        c = self.config
        shape = c.latent_shape
        xi = self._deform(points, design)
        phase = S.build_phase(xi.data, self.modes)
        if query is None:
            xi_q, phase_q = xi, phase
        else:
            xi_q = self._deform(query, design)
            phase_q = S.build_phase(xi_q.data, self.modes)
        x = T.concat([fields, points], axis=-1)
        v = self.lift(x)
        ch = S.half_nudft_forward(v, xi, self.modes, phase=phase)
        u = T.gelu(S.half_to_grid(
            S.half_mode_mix(ch, self.params["R1"], self.modes), self.modes, shape))
        u = self._latent_layers(u, shape)
        spec = S.grid_to_half(u, self.modes)
        mixed = S.half_mode_mix(spec, self.params[f"R{c.layers}"], self.modes)
        out = S.half_nudft_inverse(mixed, xi_q, self.modes, phase=phase_q)
        return self.project(out)

    def _deform(self, points, design):
        if self.deform_net is not None:
            return self.deform_net(points, design)
        return G.wrap_torus(points)


def _wt(w):
    """Transpose of a weight matrix as a taped op (channels-first apply)."""
    return T.moveaxis(w, 0, 1)


# ------------------------------------------------------------- public wrappers

def forward_structured(model, mesh, fields):
    """Run the operator on a structured mesh; physical coordinates enter as
    input channels and the canonical index map plays the coordinate role."""
    if model.config.io_mode != "structured":
        raise ConfigurationError("model io_mode is not 'structured'")
    if not isinstance(mesh, Geometry) or mesh.kind != G.STRUCTURED:
        raise KindError("forward_structured requires a structured mesh")
    fields = T.as_tensor(fields)
    coords = T.reshape(mesh.points, (1,) + tuple(mesh.points.shape))
    f = T.reshape(fields, (1,) + tuple(fields.shape))
    out = model.forward_grid_arrays(coords, f)
    return T.reshape(out, out.shape[1:])


def forward_pointcloud(model, cloud, fields, query_points=None):
    """Run the operator on a point cloud, optionally evaluating at separate
    query points (default: the input points)."""
    if model.config.io_mode != "point_cloud":
        raise ConfigurationError("model io_mode is not 'point_cloud'")
    if not isinstance(cloud, Geometry) or cloud.kind != G.POINT_CLOUD:
        raise KindError("forward_pointcloud requires a point cloud")
    if model.deform_net is None and model.config.deform:
        raise ConfigurationError("model was configured with a learned map but has none")
    fields = T.as_tensor(fields)
    pts = T.reshape(cloud.points, (1,) + tuple(cloud.points.shape))
    f = T.reshape(fields, (1,) + tuple(fields.shape))
    design = None
    if cloud.design_params is not None:
        design = T.reshape(cloud.design_params, (1, -1))
    q = None
    if query_points is not None:
        q = T.reshape(T.as_tensor(query_points), (1,) + tuple(T.as_tensor(query_points).shape))
    out = model.forward_cloud_arrays(pts, f, design=design, query=q)
    return T.reshape(out, out.shape[1:])


def forward_spatiotemporal(model, mesh, fields, t_steps):
    """Spectral convolution over two spatial axes plus time.

    The input field is broadcast across t_steps with a time coordinate
    appended; output is (s1, s2, T, out_channels).
    """
    if model.config.io_mode != "spatiotemporal":
        raise ConfigurationError("model io_mode is not 'spatiotemporal'")
    if not isinstance(mesh, Geometry) or mesh.kind != G.STRUCTURED:
        raise KindError("forward_spatiotemporal requires a structured mesh")
    t_steps = int(t_steps)
    if t_steps < 1:
        raise DimensionError("need at least one time step")
    if t_steps <= 2 * model.config.temporal_k_max:
        raise DimensionError("time axis violates Nyquist for the temporal modes")
    fields = T.as_tensor(fields)
    s1, s2 = mesh.mesh_shape
    ones_t = Tensor(np.ones((1, s1, s2, t_steps, 1)))
    f = T.mul(T.reshape(fields, (1, s1, s2, 1, fields.shape[-1])), ones_t)
    coords = T.mul(T.reshape(mesh.points, (1, s1, s2, 1, 2)), ones_t)
    tline = np.broadcast_to(np.arange(t_steps)[None, None, None, :, None] / t_steps,
                            (1, s1, s2, t_steps, 1)).copy()
    feats = T.concat([f, coords, Tensor(tline)], axis=-1)
    # reuse the grid path: coords already folded into feats
    x = model.lift(feats)
    u = T.moveaxis(x, -1, 1)
    shape = (s1, s2, t_steps)
    spec = S.grid_to_half(u, model.modes)
    u = T.gelu(S.half_to_grid(
        S.half_mode_mix(spec, model.params["R1"], model.modes), model.modes, shape))
    u = model._latent_layers(u, shape)
    spec = S.grid_to_half(u, model.modes)
    u = S.half_to_grid(
        S.half_mode_mix(spec, model.params[f"R{model.config.layers}"], model.modes),
        model.modes, shape)
    out = model.project(T.moveaxis(u, 1, -1))
    return T.reshape(out, out.shape[1:])


def count_params(model):
    return model.count_params()


def expected_param_count(config: ModelConfig):
    """Closed-form parameter count derived from the configuration alone."""
    c = config
    d_sp = c.dim + (1 if c.io_mode == "spatiotemporal" else 0)
    d_a = c.in_channels + d_sp
    w = c.width
    total = (d_a * w + w) + (w * w + w)                    # P
    total += (w * 2 * w + 2 * w) + (2 * w * c.out_channels + c.out_channels)  # Q
    kmax = (c.k_max,) * c.dim + ((c.temporal_k_max,) if d_sp > c.dim else ())
    n_modes = int(np.prod([2 * k + 1 for k in kmax]))
    total += c.layers * n_modes * w * w * 2                # complex spectral weights
    n_latent = max(c.layers - 2, 0)
    total += n_latent * (w * w + d_sp * w + w)             # bypass + coordinate bias
    if c.deform and c.io_mode == "point_cloud":
        d_in = c.dim + c.dim * c.deform_freqs + c.cond_dim
        h = c.deform_hidden
        total += (d_in * h + h) + (h * h + h) + (h * c.dim + c.dim)
    return total
