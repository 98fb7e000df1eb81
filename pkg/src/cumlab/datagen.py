"""Samplers for the input model zoo and the whitening machinery.

Input models, all in dimension d (spiked ones carry a spike u of norm
sqrt(d)):

* Null            -- z ~ N(0, 1_d).
* SpikedWishart   -- x = sqrt(beta/d) g u + z with g ~ N(0,1); covariance
                     1 + beta u u^T / d.
* SpikedCumulant  -- same construction with non-Gaussian g, then whitened
                     by S = 1 - beta/(1+beta+sqrt(1+beta)) u u^T / d so the
                     population covariance is exactly the identity.  Rows
                     are drawn through the O(d) closed form
                         x = z_perp + (sqrt(1-eta^2) ubar.z + eta g) ubar,
                     eta = sqrt(beta/(1+beta)), which equals S applied to
                     the raw sample without materialising S.
* NLGP            -- translation-invariant Gaussian field with covariance
                     C_ij = exp(-|i-j|/xi) pushed through x_i =
                     erf(g z_i)/Z(g), Z chosen so E x_i^2 = 1.
* GPMatch         -- Gaussian with the NLGP output covariance
                     Sigma_ij = (2/pi) asin(2 g^2 C_ij/(1+2 g^2)) / Z(g)^2.

Generation is deterministic given (spec, n, seed): rows are produced in
fixed-size blocks, each block from its own counter-derived Philox stream,
so blocks can be generated in any order or in parallel with identical
output.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from math import erf

import numpy as np
from scipy.integrate import quad
from scipy.special import erf as erf_vec

from .hermite import GDistribution
from .rng import block_generator, spawn_seed

NULL = "null"
SPIKED_WISHART = "spiked_wishart"
SPIKED_CUMULANT = "spiked_cumulant"
NLGP = "nlgp"
GP_MATCH = "gp_match"

_KINDS = (NULL, SPIKED_WISHART, SPIKED_CUMULANT, NLGP, GP_MATCH)

_BLOCK_ROWS = 65536

_BINARY_MAGIC = b"CUMLAB01"


@dataclass(frozen=True)
class ModelSpec:
    """Full description of one input class."""

    kind: str
    d: int
    beta: float = 0.0
    g_dist: GDistribution | None = None
    spike: np.ndarray | None = None  # entries +-1, norm sqrt(d)
    gain: float = 1.0
    xi: float = 1.0
    periodic: bool = False  # NLGP index distance; open boundary by default

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {_KINDS}")
        if self.d < 1:
            raise ValueError("dimension d must be >= 1")
        if not np.isfinite(self.beta) or self.beta < 0:
            raise ValueError("beta must be finite and >= 0")
        if self.kind == SPIKED_CUMULANT and self.g_dist is None:
            raise ValueError("spiked_cumulant requires a g distribution")
        if self.kind in (NLGP, GP_MATCH) and (self.gain <= 0 or self.xi <= 0):
            raise ValueError("NLGP needs gain > 0 and length scale xi > 0")
        if self.spike is not None:
            u = np.asarray(self.spike, dtype=np.float64)
            if u.shape != (self.d,):
                raise ValueError("spike must be a d-vector")
            if not np.all(np.abs(u) == 1.0):
                raise ValueError("spike entries must be +-1 (norm sqrt(d))")
            object.__setattr__(self, "spike", u)


@dataclass
class DataMatrix:
    """n x d sample matrix with per-row labels and provenance."""

    values: np.ndarray
    labels: np.ndarray
    seed: int | None = None
    spec_pair: tuple[ModelSpec, ModelSpec] | None = None

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


def draw_spike(d: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. fair +-1 spike; norm is exactly sqrt(d)."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return rng.choice(np.array([-1.0, 1.0]), size=d)


def whitening_matrix(u: np.ndarray, beta: float) -> np.ndarray:
    """S = 1 - beta/(1+beta+sqrt(1+beta)) u u^T / d.

    Symmetric positive definite with S (1 + beta u u^T / d) S = 1; the
    eigenvalue along u is 1/sqrt(1+beta), all others are 1.
    """
    if not np.isfinite(beta) or beta < 0:
        raise ValueError("beta must be finite and >= 0")
    u = np.asarray(u, dtype=np.float64)
    d = u.shape[0]
    if not np.isclose(u @ u, d):
        raise ValueError("spike must have norm sqrt(d)")
    coef = beta / (1.0 + beta + np.sqrt(1.0 + beta))
    return np.eye(d) - coef * np.outer(u, u) / d


def erf_variance_quadrature(gain: float) -> float:
    """E[erf(g z)^2] for z ~ N(0,1) by adaptive quadrature.

    Fixed-order Gauss-Hermite under-resolves the erf transition once the
    gain exceeds ~2 (64 nodes are 2e-3 off at gain 3), which is enough to
    break the unit-variance normalisation; adaptive Gauss-Kronrod on the
    half line resolves every gain to near machine precision and still
    works for any other saturating nonlinearity.
    """
    val, err = quad(
        lambda z: erf(gain * z) ** 2 * np.exp(-0.5 * z * z),
        0.0,
        np.inf,
        epsabs=1e-14,
        epsrel=1e-12,
    )
    return float(2.0 * val / np.sqrt(2.0 * np.pi))


def erf_variance_closed_form(gain: float) -> float:
    """Closed form (2/pi) asin(2 g^2 / (1 + 2 g^2)) for E[erf(g z)^2]."""
    g2 = gain * gain
    return 2.0 / np.pi * np.arcsin(2.0 * g2 / (1.0 + 2.0 * g2))


def nlgp_latent_covariance(d: int, xi: float, periodic: bool = False) -> np.ndarray:
    """C_ij = exp(-|i-j|/xi), with optional periodic index distance."""
    idx = np.arange(d)
    dist = np.abs(idx[:, None] - idx[None, :]).astype(np.float64)
    if periodic:
        dist = np.minimum(dist, d - dist)
    return np.exp(-dist / xi)


def nlgp_output_covariance(spec: ModelSpec) -> np.ndarray:
    """Covariance of the erf-saturated field: the GPMatch class target.

    Sigma_ij = (2/pi) asin(2 g^2 C_ij / (1 + 2 g^2)) / Z(g)^2, which has
    unit diagonal by the choice of Z.
    """
    c = nlgp_latent_covariance(spec.d, spec.xi, spec.periodic)
    g2 = spec.gain**2
    z2 = erf_variance_closed_form(spec.gain)
    return 2.0 / np.pi * np.arcsin(2.0 * g2 * c / (1.0 + 2.0 * g2)) / z2


def _cholesky_or_raise(cov: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        # locate the first non-PD leading minor for the error message
        k = cov.shape[0]
        for j in range(1, cov.shape[0] + 1):
            if np.linalg.eigvalsh(cov[:j, :j]).min() <= 0:
                k = j
                break
        raise ValueError(
            f"{what} covariance is not positive definite "
            f"(leading minor of order {k}); increase xi or reduce d"
        ) from None


class _Sampler:
    """Per-spec precomputation shared by all blocks."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        if spec.kind in (SPIKED_WISHART, SPIKED_CUMULANT):
            if spec.spike is None:
                raise ValueError(f"{spec.kind} requires an explicit spike")
            self.ubar = spec.spike / np.sqrt(spec.d)
        if spec.kind == NLGP:
            cov = nlgp_latent_covariance(spec.d, spec.xi, spec.periodic)
            self.chol = _cholesky_or_raise(cov, "NLGP latent")
            self.znorm = np.sqrt(erf_variance_quadrature(spec.gain))
        if spec.kind == GP_MATCH:
            self.chol = _cholesky_or_raise(nlgp_output_covariance(spec), "GPMatch")

    def block(self, n_rows: int, rng: np.random.Generator) -> np.ndarray:
        spec = self.spec
        if spec.kind == NULL:
            return rng.standard_normal((n_rows, spec.d))
        if spec.kind == SPIKED_WISHART:
            z = rng.standard_normal((n_rows, spec.d))
            g = rng.standard_normal(n_rows)
            return z + np.sqrt(spec.beta / spec.d) * np.outer(g, spec.spike)
        if spec.kind == SPIKED_CUMULANT:
            z = rng.standard_normal((n_rows, spec.d))
            g = spec.g_dist.sample(n_rows, rng)
            eta = np.sqrt(spec.beta / (1.0 + spec.beta))
            t = z @ self.ubar
            coef = (np.sqrt(1.0 - eta * eta) - 1.0) * t + eta * g
            return z + np.outer(coef, self.ubar)
        if spec.kind == NLGP:
            z = rng.standard_normal((n_rows, spec.d)) @ self.chol.T
            return erf_vec(spec.gain * z) / self.znorm
        if spec.kind == GP_MATCH:
            return rng.standard_normal((n_rows, spec.d)) @ self.chol.T
        raise AssertionError(spec.kind)


def sample_class(spec: ModelSpec, n: int, seed: int) -> np.ndarray:
    """Draw n rows of the given class, bit-reproducible from the seed.

    Rows are generated in blocks of 65536, each block from its own
    counter-derived stream, so generation order cannot affect the output.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    sampler = _Sampler(spec)
    out = np.empty((n, spec.d))
    for b, start in enumerate(range(0, n, _BLOCK_ROWS)):
        stop = min(start + _BLOCK_ROWS, n)
        out[start:stop] = sampler.block(stop - start, block_generator(seed, b))
    return out


def null_spec(d: int) -> ModelSpec:
    return ModelSpec(kind=NULL, d=d)


def make_dataset(
    pos: ModelSpec,
    n_per_class: int,
    seed: int,
    neg: ModelSpec | None = None,
) -> DataMatrix:
    """Balanced two-class sample: label +1 from `pos`, -1 from `neg`.

    The negative class defaults to the isotropic Gaussian null.
    """
    if neg is None:
        neg = null_spec(pos.d)
    if neg.d != pos.d:
        raise ValueError("class dimensions differ")
    xp = sample_class(pos, n_per_class, spawn_seed(seed, "pos"))
    xn = sample_class(neg, n_per_class, spawn_seed(seed, "neg"))
    values = np.vstack([xp, xn])
    labels = np.concatenate([np.ones(n_per_class), -np.ones(n_per_class)])
    return DataMatrix(values=values, labels=labels, seed=seed, spec_pair=(pos, neg))


# ---------------------------------------------------------------------------
# Dataset export: CSV and a compact binary layout.  Both round-trip the
# (labels, values) payload bit-exactly.  Binary layout: 16-byte header
# (8-byte magic, uint32 n, uint32 d, little-endian), then n float64 labels,
# then the n x d row-major float64 value block.
# ---------------------------------------------------------------------------


def write_csv(data: DataMatrix, path) -> None:
    d = data.d
    header = "label," + ",".join(f"x_{i}" for i in range(d))
    buf = io.StringIO()
    buf.write(header + "\n")
    for lab, row in zip(data.labels, data.values):
        buf.write(repr(float(lab)))
        for v in row:
            buf.write("," + repr(float(v)))
        buf.write("\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def read_csv(path) -> DataMatrix:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header[0] != "label":
            raise ValueError(f"{path}: not a cumlab dataset CSV")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    arr = np.array([[float(v) for v in row] for row in rows])
    return DataMatrix(values=arr[:, 1:], labels=arr[:, 0])


def write_binary(data: DataMatrix, path) -> None:
    n, d = data.values.shape
    with open(path, "wb") as fh:
        fh.write(_BINARY_MAGIC)
        fh.write(struct.pack("<II", n, d))
        fh.write(np.ascontiguousarray(data.labels, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(data.values, dtype="<f8").tobytes())


def read_binary(path) -> DataMatrix:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _BINARY_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        n, d = struct.unpack("<II", fh.read(8))
        labels = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
        values = np.frombuffer(fh.read(8 * n * d), dtype="<f8").copy().reshape(n, d)
    return DataMatrix(values=values, labels=labels)
