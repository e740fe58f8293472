"""Conditional Transformer decoder over IMU features and pose/contact history.

Each token carries the IMU features of frame ``t`` plus the joint rotations
and contact vector of frame ``t - 1``; the network predicts ``q_t``, the root
velocity ``v_t`` and the contact vector ``c_t`` for every token in parallel.
"""
import json
import math
from collections import deque
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from tipose.errors import EmptyBuffer, FormatError, NonFinite, ShapeMismatch
from tipose.imu import FEATURE_DIM

Q_DIM = 108
C_DIM = 20
V_DIM = 3
N_BITS = 5
BIT_INDEX = np.arange(0, 20, 4)
OFFSET_INDEX = np.array([i for i in range(20) if i % 4])
CHECKPOINT_HEADER = "tipmodel v1"


@dataclass
class ModelConfig:
    max_window: int = 39
    imu_dim: int = FEATURE_DIM
    q_dim: int = Q_DIM
    c_dim: int = C_DIM
    v_dim: int = V_DIM
    embed_dim: int = 256
    n_layers: int = 4
    n_heads: int = 4
    ff_dim: int = 1024
    summarizer_width: int = 256
    history_dropout: float = 0.8
    dtype: str = "float32"

    def __post_init__(self):
        for name in ("max_window", "embed_dim", "n_heads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.n_layers < 0 or self.ff_dim < 1 or self.summarizer_width < 0:
            raise ValueError("invalid layer sizes")
        if self.embed_dim % self.n_heads:
            raise ValueError("embed_dim must be divisible by n_heads")
        if not 0.0 <= self.history_dropout < 1.0:
            raise ValueError("history_dropout must lie in [0, 1)")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @property
    def token_dim(self):
        # v is deliberately not part of the history
        return self.imu_dim + self.q_dim + self.c_dim

    @property
    def slots(self):
        return self.max_window + 1

    @property
    def torch_dtype(self):
        return torch.float64 if self.dtype == "float64" else torch.float32

    @classmethod
    def tiny(cls, **kw):
        base = dict(embed_dim=64, n_layers=2, n_heads=4, ff_dim=128, summarizer_width=64)
        base.update(kw)
        return cls(**base)


class CausalSelfAttention(nn.Module):
    def __init__(self, dim, n_heads):
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = dim // n_heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x):
        b, t, d = x.shape
        q, k, v = self.qkv(x).split(d, dim=-1)
        q = q.view(b, t, self.n_heads, self.head_dim).transpose(1, 2)
        k = k.view(b, t, self.n_heads, self.head_dim).transpose(1, 2)
        v = v.view(b, t, self.n_heads, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        future = torch.ones(t, t, dtype=torch.bool, device=x.device).triu(1)
        scores = scores.masked_fill(future, float("-inf"))
        out = torch.softmax(scores, dim=-1) @ v
        return self.proj(out.transpose(1, 2).reshape(b, t, d))


class DecoderLayer(nn.Module):
    def __init__(self, dim, n_heads, ff_dim):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = CausalSelfAttention(dim, n_heads)
        self.norm2 = nn.LayerNorm(dim)
        self.ff = nn.Sequential(nn.Linear(dim, ff_dim), nn.GELU(), nn.Linear(ff_dim, dim))

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.ff(self.norm2(x))


class TipModel(nn.Module):
    def __init__(self, config):
        super().__init__()
        self.config = config
        e = config.embed_dim
        self.embed = nn.Linear(config.token_dim, e)
        self.pos = nn.Parameter(torch.zeros(config.slots, e))
        nn.init.normal_(self.pos, std=0.02)
        self.layers = nn.ModuleList(DecoderLayer(e, config.n_heads, config.ff_dim) for _ in range(config.n_layers))
        self.norm = nn.LayerNorm(e) if config.n_layers else None
        s = config.summarizer_width
        self.summarizer = nn.GRU(e, s, batch_first=True) if s else None
        width = s or e
        self.head_q = nn.Linear(width, config.q_dim)
        self.head_v = nn.Linear(width, config.v_dim)
        self.head_b = nn.Linear(width, N_BITS)
        self.head_r = nn.Linear(width, config.c_dim - N_BITS)
        self.to(config.torch_dtype)

    def n_params(self):
        return sum(p.numel() for p in self.parameters())

    def forward(self, tokens):
        """``tokens`` (B, T, token_dim) -> dict of q, v, c, b_logit for every position."""
        if tokens.ndim != 3 or tokens.shape[-1] != self.config.token_dim:
            raise ShapeMismatch(f"expected (B, T, {self.config.token_dim}) tokens, got {tuple(tokens.shape)}")
        t = tokens.shape[1]
        if not 1 <= t <= self.config.slots:
            raise ShapeMismatch(f"window length {t} outside [1, {self.config.slots}]")
        x = self.embed(tokens) + self.pos[:t]
        for layer in self.layers:
            x = layer(x)
        if self.norm is not None:
            x = self.norm(x)
        if self.summarizer is not None:
            x, _ = self.summarizer(x)
        logit = self.head_b(x)
        off = self.head_r(x)
        bits = torch.sigmoid(logit)
        c = torch.cat([bits.unsqueeze(-1), off.view(*off.shape[:-1], N_BITS, 3)], dim=-1).flatten(-2)
        return {"q": self.head_q(x), "v": self.head_v(x), "c": c, "b_logit": logit}


def build_tokens(imu, q_prev, c_prev):
    return torch.cat([imu, q_prev, c_prev], dim=-1)


def sample_history_mask(shape, rate, generator=None):
    """Per-frame keep mask: 1 keeps the frame's q and c history, 0 drops it."""
    u = torch.rand(shape, generator=generator, dtype=torch.float64)
    return (u >= rate).to(torch.float64)


def forward_train(model, imu, q_prev, c_prev, keep=None, generator=None):
    """Teacher-forced forward pass with whole-frame history dropout.

    ``imu`` (B, T, 90), ``q_prev``/``c_prev`` the ground truth shifted by one frame.
    Pass ``keep`` to fix the dropout mask; otherwise one is sampled.
    """
    if keep is None:
        keep = sample_history_mask(imu.shape[:2], model.config.history_dropout, generator)
    keep = keep.to(imu.dtype).unsqueeze(-1)
    return model(build_tokens(imu, q_prev * keep, c_prev * keep))


def compute_loss(pred, target):
    """Sum of joint, root-velocity and contact terms averaged over batch and positions.

    Returns ``(total, {"joint", "root", "offset", "bce"})``.
    """
    for key in ("q", "v", "c"):
        if pred[key].shape != target[key].shape:
            raise ShapeMismatch(f"{key}: prediction {tuple(pred[key].shape)} vs target {tuple(target[key].shape)}")
    bits = torch.as_tensor(BIT_INDEX)
    offs = torch.as_tensor(OFFSET_INDEX)
    joint = ((pred["q"] - target["q"]) ** 2).sum(-1).mean()
    root = ((pred["v"] - target["v"]) ** 2).sum(-1).mean()
    offset = ((pred["c"][..., offs] - target["c"][..., offs]) ** 2).sum(-1).mean()
    bce = F.binary_cross_entropy_with_logits(pred["b_logit"], target["c"][..., bits], reduction="none").sum(-1).mean()
    total = joint + root + offset + bce
    if not torch.isfinite(total):
        raise NonFinite("loss is not finite")
    terms = {"joint": joint, "root": root, "offset": offset, "bce": bce}
    return total, {k: float(v.detach()) for k, v in terms.items()}


class HistoryBuffer:
    """Tokens of past frames plus the latest committed pose and contacts.

    Seeded with the initial pose; the pipeline commits each frame's (possibly
    corrected) prediction after ``predict_step``.
    """

    def __init__(self, max_window=39):
        self.max_window = max_window
        self.tokens = deque(maxlen=max_window)
        self.q = None
        self.c = None

    def seed(self, q0, c0=None):
        self.tokens.clear()
        self.q = np.asarray(q0, dtype=np.float64).reshape(Q_DIM).copy()
        self.c = np.zeros(C_DIM) if c0 is None else np.asarray(c0, dtype=np.float64).reshape(C_DIM).copy()

    @property
    def seeded(self):
        return self.q is not None

    def window(self, imu_t):
        if not self.seeded:
            raise EmptyBuffer("history buffer has not been seeded with an initial pose")
        cur = np.concatenate([np.asarray(imu_t, dtype=np.float64), self.q, self.c])
        return np.stack(list(self.tokens) + [cur])

    def commit(self, imu_t, q_t, c_t):
        self.tokens.append(np.concatenate([np.asarray(imu_t, dtype=np.float64), self.q, self.c]))
        self.q = np.asarray(q_t, dtype=np.float64).reshape(Q_DIM).copy()
        self.c = np.asarray(c_t, dtype=np.float64).reshape(C_DIM).copy()

    def __len__(self):
        return len(self.tokens) + (1 if self.seeded else 0)

    def copy(self):
        out = HistoryBuffer(self.max_window)
        out.tokens = deque((t.copy() for t in self.tokens), maxlen=self.max_window)
        out.q = None if self.q is None else self.q.copy()
        out.c = None if self.c is None else self.c.copy()
        return out


@torch.no_grad()
def predict_step(model, buffer, imu_t):
    """Outputs ``(q_t, v_t, c_t)`` for the newest frame; the buffer is not modified."""
    window = buffer.window(imu_t)
    x = torch.as_tensor(window, dtype=model.config.torch_dtype).unsqueeze(0)
    was_training = model.training
    model.eval()
    out = model(x)
    model.train(was_training)
    return (out["q"][0, -1].double().numpy(), out["v"][0, -1].double().numpy(),
            out["c"][0, -1].double().numpy())


def save_checkpoint(path, model, extra=None):
    arrays = {f"param/{k}": v.detach().cpu().double().numpy() for k, v in model.state_dict().items()}
    meta = {"config": asdict(model.config), "extra": extra or {}}
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(CHECKPOINT_HEADER), meta=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path):
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from exc
    with data:
        if "header" not in data or str(data["header"]) != CHECKPOINT_HEADER:
            raise FormatError(f"{path} is not a {CHECKPOINT_HEADER} checkpoint")
        meta = json.loads(str(data["meta"]))
        model = TipModel(ModelConfig(**meta["config"]))
        state = model.state_dict()
        for k in state:
            key = f"param/{k}"
            if key not in data:
                raise FormatError(f"checkpoint lacks parameter {k}")
            arr = data[key]
            if arr.shape != tuple(state[k].shape):
                raise FormatError(f"parameter {k} has shape {arr.shape}, expected {tuple(state[k].shape)}")
            state[k] = torch.as_tensor(arr, dtype=state[k].dtype)
        model.load_state_dict(state)
    model.eval()
    return model, meta.get("extra", {})
