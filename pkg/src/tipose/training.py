"""Training data, optimization loop and replay helpers for :class:`TipModel`."""
import copy
import math
from dataclasses import dataclass

import numpy as np
import torch

from tipose import imu as imu_mod
from tipose import sbp
from tipose.errors import Divergence, NonFinite, TooShort
from tipose.kinematics import default_skeleton
from tipose.model import C_DIM, Q_DIM, HistoryBuffer, compute_loss, forward_train, predict_step


@dataclass
class Sequence:
    """Aligned per-frame arrays of one clip."""

    features: np.ndarray  # (T, 90)
    q: np.ndarray  # (T, 108)
    v: np.ndarray  # (T, 3)
    c: np.ndarray  # (T, 20)

    def __len__(self):
        return len(self.q)


def prepare_sequence(motion, skeleton=None, noise=0.0, rng=None, labels=None):
    """IMU features, joint rotations, root velocities and SBP labels of a motion."""
    skeleton = skeleton or default_skeleton()
    stream = imu_mod.synthesize_imu(skeleton, motion)
    if noise > 0:
        stream = imu_mod.add_noise(stream, noise, rng)
    if labels is None:
        labels = sbp.label_motion(skeleton, motion)
    c = sbp.contact_vectors(*labels)
    n = len(motion)
    return Sequence(imu_mod.imu_features(stream), motion.joint_rotations.reshape(n, Q_DIM),
                    motion.velocities().copy(), c)


class WindowDataset:
    """Training windows of ``M + 1`` tokens cut from sequences with a one-frame shift.

    Token ``j`` of the window starting at ``s`` carries IMU features of frame
    ``s + j + 1`` and ground-truth history of frame ``s + j``; its targets are
    frame ``s + j + 1``.
    """

    def __init__(self, sequences, max_window=39):
        self.sequences = list(sequences)
        self.slots = max_window + 1
        self.index = []
        for k, seq in enumerate(self.sequences):
            if len(seq) < self.slots + 1:
                raise TooShort(f"sequence {k} has {len(seq)} frames, need {self.slots + 1}")
            self.index.extend((k, s) for s in range(len(seq) - self.slots))

    def __len__(self):
        return len(self.index)

    def batch(self, ids, dtype=torch.float32):
        imu, qp, cp, q, v, c = [], [], [], [], [], []
        for i in ids:
            k, s = self.index[i]
            seq = self.sequences[k]
            cur = slice(s + 1, s + 1 + self.slots)
            prev = slice(s, s + self.slots)
            imu.append(seq.features[cur])
            qp.append(seq.q[prev])
            cp.append(seq.c[prev])
            q.append(seq.q[cur])
            v.append(seq.v[cur])
            c.append(seq.c[cur])
        t = lambda x: torch.as_tensor(np.stack(x), dtype=dtype)  # noqa: E731
        return t(imu), t(qp), t(cp), {"q": t(q), "v": t(v), "c": t(c)}


def cosine_lr(step, total, lr0):
    """Cosine annealing from ``lr0`` at step 0 to 0 at the last step."""
    if total <= 1:
        return lr0
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * step / (total - 1)))


@dataclass
class TrainResult:
    losses: list  # mean loss per epoch
    steps: int
    lrs: list


def train(model, dataset, epochs, batch_size=256, lr=1e-4, seed=0, log=None, target=None):
    """Adam with a cosine learning-rate schedule over all steps.

    ``target`` stops early once an epoch's mean loss falls below it.  On a
    non-finite loss the model is restored to the last completed epoch and
    :class:`Divergence` is raised.
    """
    gen = torch.Generator().manual_seed(seed)
    rng = np.random.default_rng(seed)
    dtype = model.config.torch_dtype
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    per_epoch = max(1, math.ceil(len(dataset) / batch_size))
    total = epochs * per_epoch
    good = copy.deepcopy(model.state_dict())
    losses, lrs = [], []
    step = 0
    model.train()
    for epoch in range(epochs):
        order = rng.permutation(len(dataset))
        acc = 0.0
        for b in range(per_epoch):
            ids = order[b * batch_size:(b + 1) * batch_size]
            imu, qp, cp, tgt = dataset.batch(ids, dtype)
            for g in opt.param_groups:
                g["lr"] = cosine_lr(step, total, lr)
            lrs.append(opt.param_groups[0]["lr"])
            pred = forward_train(model, imu, qp, cp, generator=gen)
            try:
                loss, _ = compute_loss(pred, tgt)
            except NonFinite:
                model.load_state_dict(good)
                raise Divergence(f"loss diverged at epoch {epoch}, step {step}") from None
            opt.zero_grad()
            loss.backward()
            opt.step()
            acc += float(loss.detach()) * len(ids)
            step += 1
        losses.append(acc / len(dataset))
        if not all(torch.isfinite(p).all() for p in model.parameters()):
            model.load_state_dict(good)
            raise Divergence(f"parameters became non-finite in epoch {epoch}")
        good = copy.deepcopy(model.state_dict())
        if log is not None:
            log(epoch, losses[-1])
        if target is not None and losses[-1] < target:
            break
    model.eval()
    return TrainResult(losses, step, lrs)


@torch.no_grad()
def teacher_forced(model, seq):
    """Predictions for frames ``1..T-1`` with ground-truth history (no dropout).

    Each frame is predicted from the window of up to ``M + 1`` tokens ending at it,
    exactly as at inference.  Returns arrays of q, v, c for frames ``1..T-1``.
    """
    model.eval()
    dtype = model.config.torch_dtype
    slots = model.config.slots
    tok = np.concatenate([seq.features[1:], seq.q[:-1], seq.c[:-1]], axis=1)
    n = len(tok)
    outs = {"q": np.empty((n, Q_DIM)), "v": np.empty((n, 3)), "c": np.empty((n, C_DIM))}
    # growing windows at the start are prefixes of the first full window
    first = model(torch.as_tensor(tok[:min(slots, n)][None], dtype=dtype))
    for k in outs:
        outs[k][:min(slots, n)] = first[k][0].double().numpy()
    if n > slots:
        wins = np.stack([tok[e - slots + 1:e + 1] for e in range(slots, n)])
        for i in range(0, len(wins), 256):
            out = model(torch.as_tensor(wins[i:i + 256], dtype=dtype))
            for k in outs:
                outs[k][slots + i:slots + i + len(out[k])] = out[k][:, -1].double().numpy()
    return outs


def autoregressive(model, features, q0, c0=None):
    """Roll the model forward feeding back its own q and c; frames ``1..T-1``."""
    buf = HistoryBuffer(model.config.max_window)
    buf.seed(q0, c0)
    n = len(features) - 1
    outs = {"q": np.empty((n, Q_DIM)), "v": np.empty((n, 3)), "c": np.empty((n, C_DIM))}
    for t in range(1, len(features)):
        q, v, c = predict_step(model, buf, features[t])
        buf.commit(features[t], q, c)
        outs["q"][t - 1], outs["v"][t - 1], outs["c"][t - 1] = q, v, c
    return outs
