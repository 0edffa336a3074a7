"""Numeric core: primitives, parameter bookkeeping, optimizer, checkpoint I/O.

Tensors and reverse-mode gradients are delegated to torch (CPU). What lives
here is the contract layer the rest of the package builds on: padded
convolution with explicit border modes, a per-layer-activation MLP,
deterministic initialization, finite-value guards, the Adam wrapper, the
binary checkpoint format, and a central-finite-difference gradient checker
used by the test suite.
"""

from __future__ import annotations

import binascii
import hashlib
import json
import math
import struct
from collections import OrderedDict

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import CheckpointError, ConfigError, NonFiniteError, ShapeError

CHECKPOINT_MAGIC = b"ISTE"
CHECKPOINT_VERSION = 1

_DTYPE_TAGS = {torch.float32: 0, torch.float64: 1, torch.int64: 2}
_TAG_DTYPES = {v: k for k, v in _DTYPE_TAGS.items()}

_PAD_MODES = {"reflect": "reflect", "replicate": "replicate", "zero": "constant"}

ACTIVATIONS = ("relu", "sine", "sigmoid", "none")


def check_finite(t: torch.Tensor, where: str) -> torch.Tensor:
    """Raise NonFiniteError if `t` contains NaN/Inf; returns `t` unchanged."""
    if not torch.isfinite(t).all():
        raise NonFiniteError(f"non-finite values produced in {where}")
    return t


def conv2d(x, weight, bias=None, padding="reflect"):
    """Same-padded 2-D convolution over a (C,H,W) or (B,C,H,W) tensor.

    `weight` is (Cout, Cin, k, k) with k odd. Border handling is one of
    reflect / replicate / zero.
    """
    if padding not in _PAD_MODES:
        raise ConfigError(f"unknown padding mode {padding!r}")
    k = weight.shape[-1]
    if weight.ndim != 4 or weight.shape[-2] != k:
        raise ShapeError(f"conv weight must be (Cout,Cin,k,k), got {tuple(weight.shape)}")
    if k % 2 != 1:
        raise ShapeError(f"kernel size must be odd, got {k}")
    squeeze = x.ndim == 3
    if squeeze:
        x = x.unsqueeze(0)
    if x.ndim != 4:
        raise ShapeError(f"conv input must be (C,H,W) or (B,C,H,W), got {x.ndim}-d")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(
            f"channel mismatch: input has {x.shape[1]}, weight expects {weight.shape[1]}"
        )
    p = k // 2
    if p > 0:
        x = F.pad(x, (p, p, p, p), mode=_PAD_MODES[padding])
    y = F.conv2d(x, weight, bias)
    return y.squeeze(0) if squeeze else y


class Mlp(nn.Module):
    """Stack of affine layers with a per-layer activation over the last dim.

    `dims` chains input through hidden widths to the output width;
    `activations` names one of relu/sine/sigmoid/none per layer (defaults to
    relu on hidden layers, none on the last).
    """

    def __init__(self, dims, activations=None):
        super().__init__()
        if len(dims) < 2:
            raise ConfigError("Mlp needs at least an input and an output dim")
        n_layers = len(dims) - 1
        if activations is None:
            activations = ["relu"] * (n_layers - 1) + ["none"]
        if len(activations) != n_layers:
            raise ConfigError(
                f"got {len(activations)} activations for {n_layers} layers"
            )
        for a in activations:
            if a not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {a!r}")
        self.activations = list(activations)
        self.layers = nn.ModuleList(
            nn.Linear(dims[i], dims[i + 1]) for i in range(n_layers)
        )

    def forward(self, x):
        if x.shape[-1] != self.layers[0].in_features:
            raise ShapeError(
                f"Mlp expects trailing dim {self.layers[0].in_features}, "
                f"got {x.shape[-1]}"
            )
        for layer, act in zip(self.layers, self.activations):
            x = layer(x)
            if act == "relu":
                x = F.relu(x)
            elif act == "sine":
                x = torch.sin(x)
            elif act == "sigmoid":
                x = torch.sigmoid(x)
        return x


def _fan_in(weight):
    if weight.ndim == 4:  # conv: Cin * k * k
        return weight.shape[1] * weight.shape[2] * weight.shape[3]
    return weight.shape[1]


def init_parameters(module: nn.Module, seed: int) -> None:
    """Deterministic re-initialization of every Linear/Conv2d in `module`.

    Kaiming-uniform weights with torch's fan-in convention (bound =
    1/sqrt(fan_in)), U(+-1/sqrt(fan_in)) biases, drawn from a dedicated
    generator so results do not depend on global RNG state. Sine-activated
    Mlps get the widened first-layer init (+-30/fan_in).
    """
    gen = torch.Generator().manual_seed(seed)
    for m in module.modules():
        if isinstance(m, Mlp):
            for i, (layer, act) in enumerate(zip(m.layers, m.activations)):
                fan = layer.in_features
                if act == "sine" and i == 0:
                    bound = 30.0 / fan
                else:
                    bound = 1.0 / math.sqrt(fan)
                with torch.no_grad():
                    layer.weight.uniform_(-bound, bound, generator=gen)
                    layer.bias.uniform_(
                        -1.0 / math.sqrt(fan), 1.0 / math.sqrt(fan), generator=gen
                    )
        elif isinstance(m, (nn.Linear, nn.Conv2d)):
            fan = _fan_in(m.weight)
            with torch.no_grad():
                m.weight.uniform_(
                    -1.0 / math.sqrt(fan), 1.0 / math.sqrt(fan), generator=gen
                )
                if m.bias is not None:
                    m.bias.uniform_(
                        -1.0 / math.sqrt(fan), 1.0 / math.sqrt(fan), generator=gen
                    )


class ParamStore:
    """Named view over a module's parameters and gradient slots."""

    def __init__(self, module: nn.Module, rng_seed: int = 0):
        self.module = module
        self.rng_seed = rng_seed

    def entries(self) -> "OrderedDict[str, torch.Tensor]":
        out = OrderedDict()
        for name, p in self.module.named_parameters():
            if name in out:
                raise ShapeError(f"duplicate parameter name {name}")
            out[name] = p
        return out

    def grads(self) -> "OrderedDict[str, torch.Tensor]":
        return OrderedDict(
            (name, p.grad if p.grad is not None else torch.zeros_like(p))
            for name, p in self.entries().items()
        )

    def zero_grads(self) -> None:
        self.module.zero_grad(set_to_none=False)

    def n_params(self) -> int:
        return sum(p.numel() for p in self.module.parameters())


def make_adam(store: ParamStore, lr=1e-4, betas=(0.9, 0.999), eps=1e-8):
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    return torch.optim.Adam(store.module.parameters(), lr=lr, betas=betas, eps=eps)


def adam_step(optimizer, store: ParamStore) -> None:
    """One Adam update; gradient slots are zeroed afterwards."""
    optimizer.step()
    store.module.zero_grad(set_to_none=False)


def config_hash(config) -> str:
    """Stable sha256 hex digest of a JSON-serializable config."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def save_checkpoint(store: ParamStore, config: dict, path) -> None:
    """Write a single-file little-endian checkpoint (see CheckpointError docs).

    Layout: magic, version, config hash, config JSON, rng seed, then
    length-prefixed (name, shape, dtype, raw data) records, then a CRC32 of
    everything preceding it.
    """
    body = bytearray()
    body += CHECKPOINT_MAGIC
    body += struct.pack("<I", CHECKPOINT_VERSION)
    h = config_hash(config).encode("ascii")
    body += struct.pack("<H", len(h)) + h
    cfg = json.dumps(config, sort_keys=True).encode("utf-8")
    body += struct.pack("<I", len(cfg)) + cfg
    body += struct.pack("<Q", store.rng_seed)
    entries = store.entries()
    body += struct.pack("<I", len(entries))
    for name, p in entries.items():
        nb = name.encode("utf-8")
        body += struct.pack("<H", len(nb)) + nb
        body += struct.pack("<B", p.ndim)
        for d in p.shape:
            body += struct.pack("<I", d)
        body += struct.pack("<B", _DTYPE_TAGS[p.dtype])
        raw = p.detach().contiguous().numpy().tobytes()
        body += struct.pack("<Q", len(raw)) + raw
    crc = binascii.crc32(bytes(body)) & 0xFFFFFFFF
    with open(path, "wb") as f:
        f.write(bytes(body) + struct.pack("<I", crc))


def load_checkpoint(path, expected_config: dict | None = None):
    """Read a checkpoint; returns (state: name->tensor, config: dict, seed).

    Raises CheckpointError on bad magic/version, CRC mismatch, or (when
    `expected_config` is given) a config-hash mismatch.
    """
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 12 or blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not an ISTE checkpoint")
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    if binascii.crc32(blob[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CheckpointError(f"{path}: checksum mismatch (corrupted file)")
    off = 4
    (version,) = struct.unpack_from("<I", blob, off)
    off += 4
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (hlen,) = struct.unpack_from("<H", blob, off)
    off += 2
    stored_hash = blob[off : off + hlen].decode("ascii")
    off += hlen
    (clen,) = struct.unpack_from("<I", blob, off)
    off += 4
    config = json.loads(blob[off : off + clen].decode("utf-8"))
    off += clen
    if config_hash(config) != stored_hash:
        raise CheckpointError(f"{path}: embedded config does not match its hash")
    if expected_config is not None and config_hash(expected_config) != stored_hash:
        raise CheckpointError(
            f"{path}: checkpoint config hash {stored_hash[:12]}... does not match "
            f"the requested model config"
        )
    (seed,) = struct.unpack_from("<Q", blob, off)
    off += 8
    (n_entries,) = struct.unpack_from("<I", blob, off)
    off += 4
    state = OrderedDict()
    for _ in range(n_entries):
        (nlen,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off : off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<B", blob, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, off) if ndim else ()
        off += 4 * ndim
        (tag,) = struct.unpack_from("<B", blob, off)
        off += 1
        (nbytes,) = struct.unpack_from("<Q", blob, off)
        off += 8
        dtype = _TAG_DTYPES[tag]
        t = torch.frombuffer(bytearray(blob[off : off + nbytes]), dtype=dtype)
        state[name] = t.reshape(shape).clone()
        off += nbytes
    return state, config, seed


def restore_into(store: ParamStore, state) -> None:
    """Load checkpointed values into a module; shape mismatch is an error."""
    entries = store.entries()
    if set(entries) != set(state):
        missing = set(entries) ^ set(state)
        raise CheckpointError(f"parameter name mismatch: {sorted(missing)[:5]}")
    with torch.no_grad():
        for name, p in entries.items():
            if tuple(state[name].shape) != tuple(p.shape):
                raise CheckpointError(
                    f"shape mismatch for {name}: checkpoint "
                    f"{tuple(state[name].shape)} vs model {tuple(p.shape)}"
                )
            p.copy_(state[name].to(p.dtype))


def gradient_check(loss_fn, params, h=1e-4, samples_per_tensor=5, seed=0):
    """Max relative error between autograd and central finite differences.

    `loss_fn()` must return a scalar built from `params` (float64 leaves).
    A few entries of each tensor are probed; relative error uses
    |a-f| / max(|a|, |f|, 1e-3).
    """
    params = list(params)
    for p in params:
        if p.dtype != torch.float64:
            raise ConfigError("gradient_check requires float64 parameters")
        if p.grad is not None:
            p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [
        p.grad.clone() if p.grad is not None else torch.zeros_like(p) for p in params
    ]
    gen = torch.Generator().manual_seed(seed)
    worst = 0.0
    for p, g in zip(params, analytic):
        flat = p.detach().reshape(-1)
        n = flat.numel()
        idx = torch.randperm(n, generator=gen)[: min(samples_per_tensor, n)]
        for i in idx.tolist():
            orig = flat[i].item()
            with torch.no_grad():
                flat[i] = orig + h
            lp = loss_fn().item()
            with torch.no_grad():
                flat[i] = orig - h
            lm = loss_fn().item()
            with torch.no_grad():
                flat[i] = orig
            fd = (lp - lm) / (2 * h)
            a = g.reshape(-1)[i].item()
            rel = abs(a - fd) / max(abs(a), abs(fd), 1e-3)
            worst = max(worst, rel)
    for p in params:
        p.grad = None
    return worst
