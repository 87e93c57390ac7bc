"""Shared-torso actor-critic with hand-written reverse-mode gradients.

Layout::

    obs -> tanh(W1) -> tanh(W2) = h
    h            -> coeff heads (n x |B|), length head (|L|), controller value
    [h, rho]     -> tanh(Wz) = z -> action logits (|A|), option value

The controller side never sees rho, so changing rho leaves controller
outputs untouched.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .core import ContractViolation, make_rng

CHECKPOINT_FORMAT = "bsrl-params"
CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class NetDims:
    obs_dim: int
    n_channels: int
    n_bins: int
    n_lengths: int
    n_actions: int
    hidden: int = 128
    option_hidden: int = 64


def param_shapes(d: NetDims) -> dict[str, tuple]:
    H, Z = d.hidden, d.option_hidden
    return {
        "W1": (d.obs_dim, H), "b1": (H,),
        "W2": (H, H), "b2": (H,),
        "Wc": (H, d.n_channels * d.n_bins), "bc": (d.n_channels * d.n_bins,),
        "Wl": (H, d.n_lengths), "bl": (d.n_lengths,),
        "wvc": (H,), "bvc": (),
        "Wz": (H + d.n_channels, Z), "bz": (Z,),
        "Wa": (Z, d.n_actions), "ba": (d.n_actions,),
        "wvo": (Z,), "bvo": (),
    }


def param_count(d: NetDims) -> int:
    return int(sum(np.prod(s, dtype=np.int64) for s in param_shapes(d).values()))


class PolicyParams:
    """Named float64 arrays plus the dims they were built for."""

    __slots__ = ("dims", "arrays")

    def __init__(self, dims: NetDims, arrays: dict[str, np.ndarray]):
        shapes = param_shapes(dims)
        if set(arrays) != set(shapes):
            raise ContractViolation(f"parameter names {sorted(arrays)} do not match dims")
        for k, s in shapes.items():
            if np.shape(arrays[k]) != s:
                raise ContractViolation(f"{k} has shape {np.shape(arrays[k])}, expected {s}")
        self.dims = dims
        self.arrays = {k: np.asarray(arrays[k], dtype=np.float64) for k in shapes}

    def __getitem__(self, k):
        return self.arrays[k]

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.dims, {k: v.copy() for k, v in self.arrays.items()})

    def map(self, fn) -> "PolicyParams":
        return PolicyParams(self.dims, {k: fn(v) for k, v in self.arrays.items()})

    def zeros_like(self) -> "PolicyParams":
        return self.map(np.zeros_like)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.arrays[k].ravel() for k in param_shapes(self.dims)])

    @classmethod
    def from_flat(cls, dims: NetDims, vec: np.ndarray) -> "PolicyParams":
        out, i = {}, 0
        for k, s in param_shapes(dims).items():
            n = int(np.prod(s, dtype=np.int64))
            out[k] = vec[i:i + n].reshape(s).copy()
            i += n
        return cls(dims, out)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays.values())


def init_params(seed: int, dims: NetDims, zero_policy: bool = True) -> PolicyParams:
    """Fan-in scaled uniform init; policy output layers zeroed for uniform initial policies.

    The option layer's input is [h, rho]; each group gets its own fan-in bound so
    the n rho inputs are not drowned out by the much wider torso output.
    """
    rng = make_rng(seed, "init-params")
    out = {}
    for k, shape in param_shapes(dims).items():
        if k.startswith("b"):
            out[k] = np.zeros(shape)
            continue
        fan_in = shape[0]
        bound = 1.0 / np.sqrt(fan_in)
        out[k] = rng.uniform(-bound, bound, size=shape)
        if k == "Wz":
            out[k][: dims.hidden] *= np.sqrt(fan_in / dims.hidden)
            out[k][dims.hidden:] *= np.sqrt(fan_in / dims.n_channels)
    if zero_policy:
        for k in ("Wc", "Wl", "Wa"):
            out[k] = np.zeros(param_shapes(dims)[k])
    return PolicyParams(dims, out)


# --------------------------------------------------------------------------- #
# forward / backward
# --------------------------------------------------------------------------- #


def _check_input(x: np.ndarray, name: str):
    if not np.all(np.isfinite(x)):
        raise ContractViolation(f"non-finite values in {name}")


def torso(params: PolicyParams, obs: np.ndarray):
    h1 = np.tanh(obs @ params["W1"] + params["b1"])
    h = np.tanh(h1 @ params["W2"] + params["b2"])
    return h1, h


def controller_head(params: PolicyParams, h: np.ndarray):
    d = params.dims
    coeff = (h @ params["Wc"] + params["bc"]).reshape(*h.shape[:-1], d.n_channels, d.n_bins)
    length = h @ params["Wl"] + params["bl"]
    value = h @ params["wvc"] + params["bvc"]
    return coeff, length, value


def option_head(params: PolicyParams, h: np.ndarray, rho: np.ndarray):
    u = np.concatenate([h, rho], axis=-1)
    z = np.tanh(u @ params["Wz"] + params["bz"])
    return u, z, z @ params["Wa"] + params["ba"], z @ params["wvo"] + params["bvo"]


def forward(params: PolicyParams, obs: np.ndarray, rho: np.ndarray, cache: bool = False):
    """Batched forward pass. ``obs`` is (B, obs_dim) and ``rho`` (B, n); 1-d inputs are promoted."""
    single = obs.ndim == 1
    obs = np.atleast_2d(obs)
    rho = np.atleast_2d(rho)
    _check_input(obs, "obs")
    _check_input(rho, "rho")
    if obs.shape[1] != params.dims.obs_dim or rho.shape[1] != params.dims.n_channels:
        raise ContractViolation(f"input dims {obs.shape[1]}/{rho.shape[1]} do not match params")
    h1, h = torso(params, obs)
    coeff, length, vc = controller_head(params, h)
    u, z, opt, vo = option_head(params, h, rho)
    out = {
        "coeff_logits": coeff,
        "length_logits": length,
        "v_controller": vc,
        "option_logits": opt,
        "v_option": vo,
    }
    if single:
        out = {k: v[0] for k, v in out.items()}
    if cache:
        return out, {"obs": obs, "h1": h1, "h": h, "u": u, "z": z}
    return out


def backward(params: PolicyParams, cache: dict, grads: dict) -> PolicyParams:
    """Gradient of a scalar loss given its gradients w.r.t. the forward outputs.

    ``grads`` may omit any output (treated as zero).
    """
    d = params.dims
    obs, h1, h, u, z = cache["obs"], cache["h1"], cache["h"], cache["u"], cache["z"]
    B = obs.shape[0]
    g = {}
    zero = np.zeros
    g_coeff = grads.get("coeff_logits")
    g_coeff = zero((B, d.n_channels * d.n_bins)) if g_coeff is None else g_coeff.reshape(B, -1)
    g_len = grads.get("length_logits", zero((B, d.n_lengths)))
    g_vc = grads.get("v_controller", zero(B))
    g_opt = grads.get("option_logits", zero((B, d.n_actions)))
    g_vo = grads.get("v_option", zero(B))

    g["Wc"], g["bc"] = h.T @ g_coeff, g_coeff.sum(0)
    g["Wl"], g["bl"] = h.T @ g_len, g_len.sum(0)
    g["wvc"], g["bvc"] = h.T @ g_vc, np.asarray(g_vc.sum())
    dh = g_coeff @ params["Wc"].T + g_len @ params["Wl"].T + np.outer(g_vc, params["wvc"])

    g["Wa"], g["ba"] = z.T @ g_opt, g_opt.sum(0)
    g["wvo"], g["bvo"] = z.T @ g_vo, np.asarray(g_vo.sum())
    dz = g_opt @ params["Wa"].T + np.outer(g_vo, params["wvo"])
    da_z = dz * (1.0 - z * z)
    g["Wz"], g["bz"] = u.T @ da_z, da_z.sum(0)
    dh += (da_z @ params["Wz"].T)[:, : d.hidden]

    da2 = dh * (1.0 - h * h)
    g["W2"], g["b2"] = h1.T @ da2, da2.sum(0)
    da1 = (da2 @ params["W2"].T) * (1.0 - h1 * h1)
    g["W1"], g["b1"] = obs.T @ da1, da1.sum(0)
    return PolicyParams(d, g)


# --------------------------------------------------------------------------- #
# distributions
# --------------------------------------------------------------------------- #


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    s = x - m
    return s - np.log(np.sum(np.exp(s), axis=axis, keepdims=True))


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    return np.exp(log_softmax(x, axis))


def entropy(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    lp = log_softmax(logits, axis)
    return -np.sum(np.exp(lp) * lp, axis=axis)


# --------------------------------------------------------------------------- #
# optimizer
# --------------------------------------------------------------------------- #


@dataclass
class AdamState:
    m: PolicyParams
    v: PolicyParams
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: PolicyParams) -> AdamState:
    return AdamState(params.zeros_like(), params.zeros_like())


def sgd_step(params: PolicyParams, grad: PolicyParams, learning_rate: float, state: AdamState):
    """One Adam step. Returns (new params, new optimizer state); inputs are not modified."""
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.arrays.items():
        g = grad.arrays[k]
        m = b1 * state.m.arrays[k] + (1 - b1) * g
        v = b2 * state.v.arrays[k] + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_p[k] = p - learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[k], new_v[k] = m, v
    dims = params.dims
    return PolicyParams(dims, new_p), AdamState(PolicyParams(dims, new_m), PolicyParams(dims, new_v), t, b1, b2, state.eps)


def clip_grad_norm(grad: PolicyParams, max_norm: float | None) -> tuple[PolicyParams, float]:
    norm = float(np.sqrt(sum(float(np.sum(v * v)) for v in grad.arrays.values())))
    if max_norm is None or norm <= max_norm:
        return grad, norm
    scale = max_norm / (norm + 1e-12)
    return grad.map(lambda v: v * scale), norm


# --------------------------------------------------------------------------- #
# checkpoints
# --------------------------------------------------------------------------- #


def save_checkpoint(path, params: PolicyParams, extra: dict | None = None) -> None:
    header = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "dims": asdict(params.dims)}
    if extra:
        header["extra"] = extra
    with open(path, "wb") as fh:
        np.savez(fh, __header__=np.array(json.dumps(header, sort_keys=True)), **params.arrays)


def load_checkpoint(path, expected_dims: NetDims | None = None) -> PolicyParams:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["__header__"]))
        if header.get("format") != CHECKPOINT_FORMAT or header.get("version") != CHECKPOINT_VERSION:
            raise ContractViolation(f"unsupported checkpoint header {header.get('format')}/{header.get('version')}")
        dims = NetDims(**header["dims"])
        if expected_dims is not None and dims != expected_dims:
            raise ContractViolation(f"checkpoint dims {dims} do not match expected {expected_dims}")
        arrays = {k: data[k] for k in param_shapes(dims)}
    return PolicyParams(dims, arrays)
