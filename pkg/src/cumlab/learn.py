"""Two-layer ReLU network, random-features ridge, and diagnostics.

The network is phi(x) = v . relu(W x + b) + c, trained by minibatch SGD on
the squared loss (phi - y)^2 against +-1 labels, with L2 weight decay on
both weight matrices (biases are not decayed).  Hidden and output biases
are included: without them the network is positively homogeneous, its
decision is a function of x/|x| only, and the even-in-projection structure
of the whitened cumulant class caps its accuracy near chance regardless of
spike recovery.

Lazy training follows the centred alpha-scaling: for alpha > 1 the model
output is alpha * (phi_theta(x) - phi_theta0(x)) with theta0 frozen at
initialisation and the loss rescaled by 1/alpha^2; alpha = 1 trains the
plain network.

Random features are the frozen-first-layer ablation: the same ReLU and the
same N(0, 1/d) first-layer law, with a ridge readout at regulariser 0.1
solved through the normal equations (symmetric positive-definite solve).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import _kernels
from .datagen import DataMatrix
from .rng import generator


@dataclass
class TwoLayerNet:
    """First layer (W, b), readout (v, c); width m = W.shape[0]."""

    W: np.ndarray
    b: np.ndarray
    v: np.ndarray
    c: float = 0.0

    @property
    def width(self) -> int:
        return self.W.shape[0]

    def forward(self, X: np.ndarray) -> np.ndarray:
        return np.maximum(X @ self.W.T + self.b, 0.0) @ self.v + self.c

    def copy(self) -> "TwoLayerNet":
        return TwoLayerNet(self.W.copy(), self.b.copy(), self.v.copy(), self.c)


def init_network(d: int, width: int, rng: np.random.Generator) -> TwoLayerNet:
    """W ~ N(0, 1/d), v ~ N(0, 1/m), biases zero."""
    W = rng.standard_normal((width, d)) / np.sqrt(d)
    v = rng.standard_normal(width) / np.sqrt(width)
    return TwoLayerNet(W=W, b=np.zeros(width), v=v, c=0.0)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.002
    weight_decay: float = 0.002
    epochs: int = 50  # 200 for the spiked cumulant task
    batch_size: int = 128
    loss: str = "squared"
    alpha_lazy: float = 1.0
    width_factor: int = 5  # hidden neurons per input dimension
    seed: int = 0

    def __post_init__(self):
        if self.loss != "squared":
            raise ValueError("only the squared loss is supported")
        if self.alpha_lazy < 1.0:
            raise ValueError("alpha_lazy must be >= 1")


@dataclass
class TrainReport:
    test_accuracy: list[float] = field(default_factory=list)
    overlap_trajectory: list[float] = field(default_factory=list)
    ipr_trajectory: list[float] = field(default_factory=list)
    early_stop_accuracy: float = 0.0
    diverged_at_epoch: int | None = None

    def csv_rows(self) -> list[str]:
        rows = ["epoch,test_acc,max_overlap,max_ipr"]
        for e, (a, o, i) in enumerate(
            zip(self.test_accuracy, self.overlap_trajectory, self.ipr_trajectory)
        ):
            rows.append(f"{e},{a},{o},{i}")
        return rows

    def summary_json(self, cfg: TrainConfig, wall_time_s: float) -> str:
        return json.dumps(
            {
                "config": {
                    "learning_rate": cfg.learning_rate,
                    "weight_decay": cfg.weight_decay,
                    "epochs": cfg.epochs,
                    "batch_size": cfg.batch_size,
                    "alpha_lazy": cfg.alpha_lazy,
                    "width_factor": cfg.width_factor,
                    "seed": cfg.seed,
                },
                "early_stop_accuracy": self.early_stop_accuracy,
                "final_max_overlap": self.overlap_trajectory[-1] if self.overlap_trajectory else None,
                "wall_time_s": wall_time_s,
            },
            sort_keys=True,
        )


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"training diverged (non-finite loss) at epoch {epoch}")
        self.epoch = epoch


def ipr(w: np.ndarray) -> float:
    """Inverse participation ratio sum w_i^4 / (sum w_i^2)^2, in [1/d, 1]."""
    w = np.asarray(w, dtype=np.float64)
    s2 = float(w @ w)
    if s2 == 0.0:
        raise ValueError("IPR of the zero vector is undefined")
    return float(np.sum(w**4) / s2**2)


def max_spike_overlap(W: np.ndarray, u: np.ndarray) -> float:
    """max_k |w_k . u| / (|w_k| |u|) over hidden rows, skipping zero rows."""
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    u = np.asarray(u, dtype=np.float64)
    norms = np.linalg.norm(W, axis=1)
    keep = norms > 0.0
    if not np.any(keep):
        raise ValueError("all hidden rows are zero")
    cos = np.abs(W[keep] @ u) / (norms[keep] * np.linalg.norm(u))
    return float(cos.max())


def enforce_initial_overlap(W: np.ndarray, u: np.ndarray, target: float) -> np.ndarray:
    """Rotate each row so its |cosine| with u is exactly `target`.

    Rows keep their norms and the sign of their component along u.  A row
    (numerically) parallel to u has no orthogonal part to keep; it is given
    the first basis vector orthogonalised against u instead.
    """
    if not 0.0 <= target <= 1.0:
        raise ValueError("target overlap must lie in [0, 1]")
    W = np.array(W, dtype=np.float64, copy=True)
    u = np.asarray(u, dtype=np.float64)
    d = u.shape[0]
    uhat = u / np.linalg.norm(u)
    for k in range(W.shape[0]):
        w = W[k]
        norm = np.linalg.norm(w)
        if norm == 0.0:
            raise ValueError(f"hidden row {k} is zero")
        t = float(w @ uhat)
        perp = w - t * uhat
        pnorm = np.linalg.norm(perp)
        if pnorm < 1e-12 * norm:
            if d < 2:
                raise ValueError("cannot orthogonalise in dimension 1")
            perp = np.eye(d)[0] - uhat[0] * uhat
            pnorm = np.linalg.norm(perp)
        sign = 1.0 if t >= 0.0 else -1.0
        W[k] = norm * (sign * target * uhat + np.sqrt(1.0 - target * target) * perp / pnorm)
    return W


def _centred_forward(net: TwoLayerNet, net0: TwoLayerNet, alpha: float, X: np.ndarray) -> np.ndarray:
    return alpha * (net.forward(X) - net0.forward(X))


def loss_and_grads(
    net: TwoLayerNet,
    X: np.ndarray,
    y: np.ndarray,
    weight_decay: float,
    alpha: float = 1.0,
    net0: TwoLayerNet | None = None,
):
    """Batch squared loss and its parameter gradients.

    For alpha > 1 uses the centred-scaled output with the loss rescaled by
    1/alpha^2; weight decay enters as the usual L2 gradient on W and v.
    Shared by the pure-numpy training path and the gradient tests.
    """
    n = X.shape[0]
    A = X @ net.W.T + net.b
    R = np.maximum(A, 0.0)
    out = R @ net.v + net.c
    if alpha != 1.0:
        if net0 is None:
            raise ValueError("centred scaling needs the frozen initial network")
        out = alpha * (out - net0.forward(X))
    err = out - y
    loss = float(np.mean(err**2)) / alpha**2
    # d loss / d out * d out / d phi_theta = 2 err / (n alpha^2) * alpha
    gout = 2.0 * err / (n * alpha)
    gv = R.T @ gout + weight_decay * net.v
    gc = float(np.sum(gout))
    GR = gout[:, None] * net.v[None, :]
    GR[A <= 0.0] = 0.0
    gW = GR.T @ X + weight_decay * net.W
    gb = GR.sum(axis=0)
    return loss, {"W": gW, "b": gb, "v": gv, "c": gc}


def _evaluate(net, net0, alpha, X, y) -> float:
    out = net.forward(X) if alpha == 1.0 else _centred_forward(net, net0, alpha, X)
    return float(np.mean(np.sign(out) == y))


def train_2lnn(
    train: DataMatrix,
    test: DataMatrix,
    u: np.ndarray | None,
    cfg: TrainConfig,
    rng: np.random.Generator | None = None,
) -> tuple[TrainReport, TwoLayerNet]:
    """Minibatch SGD on the squared loss; per-epoch test diagnostics.

    The epoch loop and the batch order within an epoch are fixed by the
    generator, so a (data, cfg, seed) triple reproduces the report
    bit-for-bit on a given kernel backend.  Overlap diagnostics need the
    true spike u; pass None (e.g. NLGP task) to skip them.
    """
    if train.d != test.d:
        raise ValueError("train/test dimensions differ")
    rng = rng if rng is not None else generator(cfg.seed, "train2lnn")
    d = train.d
    net = init_network(d, cfg.width_factor * d, rng)
    net0 = net.copy()
    alpha = cfg.alpha_lazy
    X, y = train.values, train.labels
    n = X.shape[0]
    report = TrainReport()
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        if alpha == 1.0:
            net.c = _kernels.sgd_epoch(
                net.W, net.b, net.v, net.c, X, y, order,
                cfg.batch_size, cfg.learning_rate, cfg.weight_decay,
            )
        else:
            for s in range(0, n, cfg.batch_size):
                idx = order[s : s + cfg.batch_size]
                _, g = loss_and_grads(net, X[idx], y[idx], cfg.weight_decay, alpha, net0)
                net.W -= cfg.learning_rate * g["W"]
                net.b -= cfg.learning_rate * g["b"]
                net.v -= cfg.learning_rate * g["v"]
                net.c -= cfg.learning_rate * g["c"]
        if not (np.all(np.isfinite(net.W)) and np.all(np.isfinite(net.v))):
            report.diverged_at_epoch = epoch
            raise DivergenceError(epoch)
        report.test_accuracy.append(_evaluate(net, net0, alpha, test.values, test.labels))
        report.overlap_trajectory.append(
            max_spike_overlap(net.W, u) if u is not None else float("nan")
        )
        report.ipr_trajectory.append(
            max((ipr(w) for w in net.W if np.any(w)), default=float("nan"))
        )
    report.early_stop_accuracy = max(report.test_accuracy, default=0.0)
    return report, net


@dataclass(frozen=True)
class RFConfig:
    width: int
    ridge: float = 0.1
    seed: int = 0


def fit_random_features(train: DataMatrix, test: DataMatrix, cfg: RFConfig) -> float:
    """ReLU random-features ridge regression; returns sign-readout accuracy.

    Features are relu(F x) with F drawn once, rows i.i.d. N(0, 1/d); the
    readout solves (Phi^T Phi + ridge I) w = Phi^T y by Cholesky.
    """
    if cfg.ridge <= 0:
        raise ValueError("ridge regulariser must be positive")
    d = train.d
    F = generator(cfg.seed, "rf").standard_normal((cfg.width, d)) / np.sqrt(d)
    phi_tr = np.maximum(train.values @ F.T, 0.0)
    phi_te = np.maximum(test.values @ F.T, 0.0)
    gram = phi_tr.T @ phi_tr + cfg.ridge * np.eye(cfg.width)
    try:
        w = cho_solve(cho_factor(gram), phi_tr.T @ train.labels)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - ridge > 0 keeps it PD
        raise RuntimeError("ridge normal equations not positive definite") from exc
    return float(np.mean(np.sign(phi_te @ w) == test.labels))
