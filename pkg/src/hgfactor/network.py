"""Cascading residual hypergraph network.

The forward pass decomposes each stock's predicted return into three parts,
each read off the residual left by the previous one:

* prior component: hypergraph convolution over the given industry incidence;
* hidden component: soft hyperedges generated from learnable prototypes
  against the residual embeddings, then a second hypergraph convolution;
* individual component: a linear layer on what remains.

A separate future-window feature extractor (sharing the prior/hidden
convolution weights) produces the second view for contrastive training.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, RunningStats

VARIANTS = ("full", "wo_prior", "wo_hidden", "wo_alpha_cl", "wo_cl")


@dataclass
class ModelConfig:
    embed_dim: int = 64
    n_hidden_factors: int = 32
    horizons: tuple = (1, 5, 10, 20)
    past_window: int = 60
    future_window: int = 20
    n_features: int = 6
    leaky_slope: float = 0.01
    tau: float = 0.1
    gamma: float = 0.1
    proj_dim: int | None = None
    eps_deg: float = 1e-6
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1
    variant: str = "full"
    seed: int = 0

    def __post_init__(self):
        if self.embed_dim < 1 or self.n_hidden_factors < 1 or not self.horizons:
            raise ValueError("embed_dim, n_hidden_factors and horizons must be positive")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")

    @property
    def n_horizons(self):
        return len(self.horizons)

    @property
    def projection_dim(self):
        return self.proj_dim if self.proj_dim is not None else self.embed_dim

    @property
    def effective_gamma(self):
        return 0.0 if self.variant in ("wo_cl", "wo_alpha_cl") else self.gamma


_EXTRACTOR_MATS = ("w_xz", "w_xr", "w_xn", "w_hz", "w_hr", "w_hn")
_EXTRACTOR_VECS = ("b_z", "b_r", "b_xn", "b_hn", "bn_gamma", "bn_beta")


class ModelParams:
    """All learnable tensors, addressable by name, plus batch-norm running stats."""

    def __init__(self, tensors: dict[str, Tensor], bn_stats: dict[str, RunningStats]):
        self.tensors = tensors
        self.bn_stats = bn_stats

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def trainable(self) -> list[Tensor]:
        return list(self.tensors.values())

    def zero_grad(self):
        for t in self.tensors.values():
            t.zero_grad()

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {name: t.values for name, t in self.tensors.items()}
        for prefix, st in self.bn_stats.items():
            out[f"{prefix}.bn_running_mean"] = st.mean
            out[f"{prefix}.bn_running_var"] = st.var
        return out

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.state_arrays().items()}

    def restore(self, arrays: dict[str, np.ndarray]):
        for name, t in self.tensors.items():
            t.values = arrays[name].copy()
        for prefix, st in self.bn_stats.items():
            st.mean = arrays[f"{prefix}.bn_running_mean"].copy()
            st.var = arrays[f"{prefix}.bn_running_var"].copy()


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(config: ModelConfig, rng: np.random.Generator | None = None) -> ModelParams:
    """Fan-in scaled uniform weights, normal/sqrt(H) prototypes, zero biases."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    h, d, m = config.embed_dim, config.n_features, config.n_hidden_factors
    p = config.projection_dim
    tensors: dict[str, Tensor] = {}
    bn_stats: dict[str, RunningStats] = {}

    def param(name, values):
        tensors[name] = Tensor(values, requires_grad=True)

    for prefix in ("feat", "feat_future"):
        for name in _EXTRACTOR_MATS[:3]:
            param(f"{prefix}.{name}", _uniform(rng, d, (d, h)))
        for name in _EXTRACTOR_MATS[3:]:
            param(f"{prefix}.{name}", _uniform(rng, h, (h, h)))
        for name in ("b_z", "b_r", "b_xn", "b_hn"):
            param(f"{prefix}.{name}", np.zeros(h))
        param(f"{prefix}.bn_gamma", np.ones(d))
        param(f"{prefix}.bn_beta", np.zeros(d))
        bn_stats[prefix] = RunningStats.create(d, config.bn_momentum)

    param("prior.w", _uniform(rng, h, (h, h)))
    param("hidden.prototypes", rng.standard_normal((m, h)) / np.sqrt(h))
    param("hidden.w", _uniform(rng, h, (h, h)))
    param("alpha.w", _uniform(rng, h, (h, h)))
    param("alpha.b", np.zeros(h))
    ell = config.n_horizons
    for name in ("head.w_prior", "head.w_hidden", "head.w_alpha"):
        param(name, _uniform(rng, h, (h, ell)))
    param("head.b", np.zeros(ell))
    param("proj.w1", _uniform(rng, h, (h, p)))
    param("proj.b1", np.zeros(p))
    param("proj.w2", _uniform(rng, p, (p, p)))
    param("proj.b2", np.zeros(p))
    return ModelParams(tensors, bn_stats)


@dataclass
class ForwardOut:
    e_s: Tensor
    e_p: Tensor
    e_r: Tensor
    e_h: Tensor
    e_alpha: Tensor
    beta_h: Tensor | None
    pred: Tensor  # (N, L)


def feature_extract(x: np.ndarray, params: ModelParams, config: ModelConfig,
                    prefix: str, training: bool) -> Tensor:
    """Per-step batch norm over the cross-section, then a GRU over time.

    Returns the final hidden state, shape (N, H).
    """
    n, t_len, _ = x.shape
    if training and n < 2:
        raise ValueError("feature extraction in train mode needs at least 2 stocks")
    g = lambda name: params[f"{prefix}.{name}"]
    stats = params.bn_stats[prefix]
    h = Tensor(np.zeros((n, config.embed_dim)))
    for t in range(t_len):
        xt = ad.batch_norm(Tensor(x[:, t, :]), g("bn_gamma"), g("bn_beta"),
                           stats, training, eps=config.bn_eps)
        z = ad.sigmoid(xt @ g("w_xz") + h @ g("w_hz") + g("b_z"))
        r = ad.sigmoid(xt @ g("w_xr") + h @ g("w_hr") + g("b_r"))
        cand = ad.tanh(xt @ g("w_xn") + g("b_xn") + r * (h @ g("w_hn") + g("b_hn")))
        h = (Tensor(1.0) - z) * cand + z * h
    return h


def hypergcn_layer(e: Tensor, incidence: Tensor, w: Tensor,
                   slope: float, eps_deg: float = 1e-6) -> Tensor:
    """Normalized hypergraph propagation with identity hyperedge weights.

    LeakyReLU(Dn^{-1/2} H De^{-1} H^T Dn^{-1/2} e w), with node/hyperedge
    degrees floored at eps_deg before inversion so isolated nodes stay defined.
    """
    if np.any(incidence.values < 0):
        raise ValueError("incidence entries must be >= 0")
    if not np.any(incidence.values > 0):
        raise ValueError("all-zero incidence matrix")
    n, _ = incidence.shape
    d_node = ad.clip_min(ad.tsum(incidence, axis=1, keepdims=True), eps_deg)     # (N,1)
    d_edge = ad.clip_min(ad.tsum(incidence, axis=0, keepdims=True), eps_deg)     # (1,E)
    dn_isqrt = ad.power(d_node, -0.5)
    de_inv = ad.power(d_edge, -1.0)
    u = dn_isqrt * e                                   # Dn^{-1/2} e
    agg = ad.transpose(incidence) @ u                  # H^T ...
    agg = ad.reshape(ad.transpose(de_inv), (incidence.shape[1], 1)) * agg
    out = incidence @ agg
    out = dn_isqrt * out
    return ad.leaky_relu(out @ w, slope)


def prior_beta(e_s: Tensor, prior_incidence: np.ndarray, params: ModelParams,
               config: ModelConfig) -> Tensor:
    return hypergcn_layer(e_s, Tensor(prior_incidence), params["prior.w"],
                          config.leaky_slope, config.eps_deg)


def hidden_exposures(e_r: Tensor, params: ModelParams) -> Tensor:
    """Soft hyperedges: sigmoid similarity of residuals to the prototypes."""
    return ad.sigmoid(e_r @ ad.transpose(params["hidden.prototypes"]))


def hidden_beta(e_r: Tensor, beta_h: Tensor, params: ModelParams,
                config: ModelConfig) -> Tensor:
    return hypergcn_layer(e_r, beta_h, params["hidden.w"],
                          config.leaky_slope, config.eps_deg)


def individual_alpha(e_s: Tensor, e_p: Tensor, e_h: Tensor, params: ModelParams,
                     config: ModelConfig) -> Tensor:
    resid = e_s - e_p - e_h
    return ad.leaky_relu(resid @ params["alpha.w"] + params["alpha.b"],
                         config.leaky_slope)


def predict_heads(e_p: Tensor, e_h: Tensor, e_alpha: Tensor,
                  params: ModelParams) -> Tensor:
    return (e_p @ params["head.w_prior"] + e_h @ params["head.w_hidden"]
            + e_alpha @ params["head.w_alpha"] + params["head.b"])


def forward(x: np.ndarray, prior_incidence: np.ndarray, params: ModelParams,
            config: ModelConfig, training: bool) -> ForwardOut:
    """Full past-window pass; returns all intermediates."""
    n = x.shape[0]
    zeros = lambda: Tensor(np.zeros((n, config.embed_dim)))
    e_s = feature_extract(x, params, config, "feat", training)
    if config.variant == "wo_prior":
        e_p = zeros()
    else:
        e_p = prior_beta(e_s, prior_incidence, params, config)
    e_r = e_s - e_p
    if config.variant == "wo_hidden":
        beta_h, e_h = None, zeros()
    else:
        beta_h = hidden_exposures(e_r, params)
        e_h = hidden_beta(e_r, beta_h, params, config)
    if config.variant == "wo_alpha_cl":
        e_alpha = zeros()
    else:
        e_alpha = individual_alpha(e_s, e_p, e_h, params, config)
    pred = predict_heads(e_p, e_h, e_alpha, params)
    return ForwardOut(e_s, e_p, e_r, e_h, e_alpha, beta_h, pred)


def forward_future(x_future: np.ndarray, prior_incidence: np.ndarray,
                   beta_h: Tensor | None, params: ModelParams, config: ModelConfig,
                   training: bool) -> Tensor:
    """Future-window double residual, reusing the prior/hidden conv weights.

    beta_h comes from the past pass of the same batch; gradients flow through
    it so the contrastive loss can steer the prototypes.
    """
    e_s = feature_extract(x_future, params, config, "feat_future", training)
    n = x_future.shape[0]
    zeros = lambda: Tensor(np.zeros((n, config.embed_dim)))
    if config.variant == "wo_prior":
        e_p = zeros()
    else:
        e_p = prior_beta(e_s, prior_incidence, params, config)
    e_r = e_s - e_p
    if config.variant == "wo_hidden" or beta_h is None:
        e_h = zeros()
    else:
        e_h = hidden_beta(e_r, beta_h, params, config)
    return e_s - e_p - e_h


# ---------------------------------------------------------------------------
# checkpoint container: one JSON header line, then raw little-endian float64
# blocks concatenated in header order. Bit-exact round trips by construction.

CHECKPOINT_MAGIC = "hgfactor-checkpoint-v1"


def save_checkpoint(path, params: ModelParams, config: ModelConfig):
    arrays = params.state_arrays()
    header = {
        "magic": CHECKPOINT_MAGIC,
        "config": {**asdict(config), "horizons": list(config.horizons)},
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for k, v in arrays.items():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ModelParams, ModelConfig]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        if header.get("magic") != CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not a checkpoint file")
        cfg_dict = dict(header["config"])
        cfg_dict["horizons"] = tuple(cfg_dict["horizons"])
        config = ModelConfig(**cfg_dict)
        arrays = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            arrays[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    params = init_params(config)
    params.restore(arrays)
    return params, config
